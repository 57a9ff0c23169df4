//! Performance measures over the replication-by-unit prediction tensor.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Iate,
    Gate,
    Ate,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Iate, Level::Gate, Level::Ate];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Iate => "iate",
            Level::Gate => "gate",
            Level::Ate => "ate",
        }
    }
}

/// Predictions of one estimator at one level: `values[[r, v]]` is the
/// prediction for unit (or group) `v` in replication `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTensor {
    pub values: Array2<f64>,
    pub truth: Vec<f64>,
}

impl PredictionTensor {
    pub fn new(values: Array2<f64>, truth: Vec<f64>) -> Result<Self> {
        if values.ncols() != truth.len() {
            return Err(Error::DimensionMismatch { expected: truth.len(), got: values.ncols() });
        }
        if values.iter().chain(&truth).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("prediction tensor holds non-finite values".into()));
        }
        Ok(Self { values, truth })
    }

    pub fn n_replications(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_units(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitMeasures {
    pub mse: Vec<f64>,
    pub abs_bias: Vec<f64>,
    pub bias: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Per-unit MSE, bias and standard deviation over replications, with
/// 1/R normalisation throughout.
pub fn per_unit_measures(t: &PredictionTensor) -> Result<UnitMeasures> {
    let r = t.n_replications();
    if r < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 replications, got {r}")));
    }
    let rf = r as f64;
    let n = t.n_units();
    let mut m = UnitMeasures {
        mse: Vec::with_capacity(n),
        abs_bias: Vec::with_capacity(n),
        bias: Vec::with_capacity(n),
        sd: Vec::with_capacity(n),
    };
    for (v, col) in t.values.columns().into_iter().enumerate() {
        let truth = t.truth[v];
        let mean = col.sum() / rf;
        let mse = col.iter().map(|p| (truth - p).powi(2)).sum::<f64>() / rf;
        let var = col.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / rf;
        m.mse.push(mse);
        m.bias.push(mean - truth);
        m.abs_bias.push((mean - truth).abs());
        m.sd.push(var.sqrt());
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JarqueBera {
    pub statistic: f64,
    pub p_value: f64,
    pub skewness: f64,
    /// Raw (not excess) kurtosis.
    pub kurtosis: f64,
}

pub const JB_MIN_SAMPLES: usize = 8;

/// Jarque-Bera normality test. `Ok(None)` flags a degenerate sample with
/// no variation.
pub fn jarque_bera(x: &[f64]) -> Result<Option<JarqueBera>> {
    let n = x.len();
    if n < JB_MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("Jarque-Bera needs at least {JB_MIN_SAMPLES} samples, got {n}")));
    }
    if x.iter().all(|&v| v == x[0]) {
        return Ok(None);
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if !(m2 > 0.0) {
        return Ok(None);
    }
    let skewness = m3 / m2.powf(1.5);
    let kurtosis = m4 / (m2 * m2);
    let statistic = nf / 6.0 * (skewness * skewness + (kurtosis - 3.0).powi(2) / 4.0);
    // chi-squared with two degrees of freedom
    let p_value = (-statistic / 2.0).exp();
    Ok(Some(JarqueBera { statistic, p_value, skewness, kurtosis }))
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

fn variance(a: &[f64]) -> f64 {
    let n = a.len() as f64;
    let m = a.iter().sum::<f64>() / n;
    a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
}

/// One report row. Measures that cannot be computed are NaN; optional
/// columns are `None` where they do not apply.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceRow {
    pub estimator: String,
    pub mean_mse: f64,
    pub se_mean_mse: f64,
    pub median_mse: f64,
    pub mean_abs_bias: f64,
    pub mean_bias: f64,
    pub mean_sd: f64,
    /// Share of units whose predictions reject normality at 5% (IATE, GATE).
    pub jb_reject_frac: Option<f64>,
    /// Jarque-Bera p-value of the ATE predictions.
    pub jb_p_value: Option<f64>,
    pub mean_skew: Option<f64>,
    pub mean_kurt: Option<f64>,
    pub n_degenerate: usize,
    pub corr: Option<f64>,
    pub var_ratio: Option<f64>,
    pub n_replications: usize,
    pub n_failed: usize,
    pub best: bool,
    pub unreliable: bool,
}

/// Rows with more than this share of failed replications are unreliable.
pub const UNRELIABLE_FAILURE_SHARE: f64 = 0.10;

impl PerformanceRow {
    /// Placeholder for an estimator with too few successful replications.
    pub fn unavailable(estimator: &str, n_replications: usize, n_failed: usize) -> Self {
        Self {
            estimator: estimator.to_string(),
            mean_mse: f64::NAN,
            se_mean_mse: f64::NAN,
            median_mse: f64::NAN,
            mean_abs_bias: f64::NAN,
            mean_bias: f64::NAN,
            mean_sd: f64::NAN,
            jb_reject_frac: None,
            jb_p_value: None,
            mean_skew: None,
            mean_kurt: None,
            n_degenerate: 0,
            corr: None,
            var_ratio: None,
            n_replications,
            n_failed,
            best: false,
            unreliable: true,
        }
    }
}

/// Summarise one estimator's tensor. `n_failed` counts replications that
/// failed and are therefore missing from the tensor.
pub fn summarize(estimator: &str, t: &PredictionTensor, level: Level, n_failed: usize) -> Result<PerformanceRow> {
    let m = per_unit_measures(t)?;
    let r = t.n_replications();
    let n = t.n_units();
    let nf = n as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let mse_r: Vec<f64> = t
        .values
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(&t.truth).map(|(p, y)| (y - p).powi(2)).sum::<f64>() / nf)
        .collect();
    let mean_mse = mean(&m.mse);
    let se = (mse_r.iter().map(|x| (x - mean_mse).powi(2)).sum::<f64>() / r as f64).sqrt() / (r as f64).sqrt();
    let mut sorted = m.mse.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median_mse = sorted[(n - 1) / 2];

    let (mut n_degenerate, mut n_reject) = (0usize, 0usize);
    let (mut skew_sum, mut kurt_sum) = (0.0, 0.0);
    let mut ate_p = None;
    let jb_ok = r >= JB_MIN_SAMPLES;
    if jb_ok {
        let mut buf = vec![0.0; r];
        for col in t.values.columns() {
            buf.iter_mut().zip(col).for_each(|(b, &v)| *b = v);
            match jarque_bera(&buf)? {
                None => n_degenerate += 1,
                Some(jb) => {
                    skew_sum += jb.skewness;
                    kurt_sum += jb.kurtosis;
                    n_reject += (jb.p_value < 0.05) as usize;
                    ate_p = Some(jb.p_value);
                }
            }
        }
    }
    let n_tested = if jb_ok { n - n_degenerate } else { 0 };
    let tested = |x: f64| (n_tested > 0).then(|| x / n_tested as f64);

    let truth_varies = level != Level::Ate && variance(&t.truth) > 0.0;
    let (corr, var_ratio) = if truth_varies {
        let var_truth = variance(&t.truth);
        let rows: Vec<Vec<f64>> = t.values.rows().into_iter().map(|row| row.to_vec()).collect();
        let corrs: Vec<f64> = rows.iter().filter_map(|row| pearson(row, &t.truth)).collect();
        let ratios: Vec<f64> = rows.iter().map(|row| variance(row) / var_truth).collect();
        ((!corrs.is_empty()).then(|| mean(&corrs)), Some(mean(&ratios)))
    } else {
        (None, None)
    };

    let total = r + n_failed;
    Ok(PerformanceRow {
        estimator: estimator.to_string(),
        mean_mse,
        se_mean_mse: se,
        median_mse,
        mean_abs_bias: mean(&m.abs_bias),
        mean_bias: mean(&m.bias),
        mean_sd: mean(&m.sd),
        jb_reject_frac: if level == Level::Ate { None } else { tested(n_reject as f64) },
        jb_p_value: if level == Level::Ate { ate_p } else { None },
        mean_skew: tested(skew_sum),
        mean_kurt: tested(kurt_sum),
        n_degenerate,
        corr,
        var_ratio,
        n_replications: r,
        n_failed,
        best: false,
        unreliable: n_failed as f64 > UNRELIABLE_FAILURE_SHARE * total as f64,
    })
}

/// Flag the row with the lowest mean MSE and every row within two
/// simulation standard errors of it.
pub fn flag_best(rows: &mut [PerformanceRow]) {
    let best = rows
        .iter()
        .filter(|r| r.mean_mse.is_finite())
        .min_by(|a, b| a.mean_mse.total_cmp(&b.mean_mse))
        .map(|r| (r.mean_mse, if r.se_mean_mse.is_finite() { r.se_mean_mse } else { 0.0 }));
    for row in rows.iter_mut() {
        row.best = match best {
            Some((m, se)) => row.mean_mse.is_finite() && row.mean_mse <= m + 2.0 * se,
            None => false,
        };
    }
}

const UNIT_COLUMNS: [&str; 17] = [
    "estimator",
    "mean_mse",
    "se_mean_mse",
    "median_mse",
    "mean_abs_bias",
    "mean_bias",
    "mean_sd",
    "jb_reject_frac",
    "mean_skew",
    "mean_kurt",
    "corr",
    "var_ratio",
    "n_degenerate",
    "n_replications",
    "n_failed",
    "best",
    "unreliable",
];

const ATE_COLUMNS: [&str; 12] = [
    "estimator",
    "mse",
    "bias",
    "sd",
    "skew",
    "kurt",
    "jb_p_value",
    "se_mse",
    "n_replications",
    "n_failed",
    "best",
    "unreliable",
];

pub fn csv_columns(level: Level) -> &'static [&'static str] {
    match level {
        Level::Ate => &ATE_COLUMNS,
        _ => &UNIT_COLUMNS,
    }
}

fn num(v: f64) -> String {
    if v.is_finite() { v.to_string() } else { "-".into() }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), num)
}

fn csv_cells(row: &PerformanceRow, level: Level) -> Vec<String> {
    let flag = |b: bool| (b as u8).to_string();
    match level {
        Level::Ate => vec![
            row.estimator.clone(),
            num(row.mean_mse),
            num(row.mean_bias),
            num(row.mean_sd),
            opt(row.mean_skew),
            opt(row.mean_kurt),
            opt(row.jb_p_value),
            num(row.se_mean_mse),
            row.n_replications.to_string(),
            row.n_failed.to_string(),
            flag(row.best),
            flag(row.unreliable),
        ],
        _ => vec![
            row.estimator.clone(),
            num(row.mean_mse),
            num(row.se_mean_mse),
            num(row.median_mse),
            num(row.mean_abs_bias),
            num(row.mean_bias),
            num(row.mean_sd),
            opt(row.jb_reject_frac),
            opt(row.mean_skew),
            opt(row.mean_kurt),
            opt(row.corr),
            opt(row.var_ratio),
            row.n_degenerate.to_string(),
            row.n_replications.to_string(),
            row.n_failed.to_string(),
            flag(row.best),
            flag(row.unreliable),
        ],
    }
}

pub fn write_report_csv(path: impl AsRef<Path>, level: Level, rows: &[PerformanceRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e))?;
    w.write_record(csv_columns(level)).map_err(|e| Error::io(path, e))?;
    for row in rows {
        w.write_record(csv_cells(row, level)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read back a report written by [`write_report_csv`].
pub fn read_report_csv(path: impl AsRef<Path>, level: Level) -> Result<Vec<PerformanceRow>> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| Error::io(path, e))?.iter().map(String::from).collect();
    if header != csv_columns(level) {
        return Err(Error::Schema(format!("{pstr}: unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { path: pstr.clone(), line, msg: e.to_string() })?;
        let cell = |j: usize| -> Result<Option<f64>> {
            match &rec[j] {
                "-" => Ok(None),
                s => s.parse().map(Some).map_err(|_| Error::Parse {
                    path: pstr.clone(),
                    line,
                    msg: format!("column `{}`: cannot parse `{s}`", header[j]),
                }),
            }
        };
        let count = |j: usize| -> Result<usize> {
            rec[j].parse().map_err(|_| Error::Parse {
                path: pstr.clone(),
                line,
                msg: format!("column `{}`: cannot parse `{}`", header[j], &rec[j]),
            })
        };
        let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
        let mut row = PerformanceRow::unavailable(&rec[0], 0, 0);
        match level {
            Level::Ate => {
                row.mean_mse = nan(cell(1)?);
                row.mean_bias = nan(cell(2)?);
                row.mean_abs_bias = row.mean_bias.abs();
                row.mean_sd = nan(cell(3)?);
                row.median_mse = row.mean_mse;
                row.mean_skew = cell(4)?;
                row.mean_kurt = cell(5)?;
                row.jb_p_value = cell(6)?;
                row.se_mean_mse = nan(cell(7)?);
                row.n_replications = count(8)?;
                row.n_failed = count(9)?;
                row.best = count(10)? == 1;
                row.unreliable = count(11)? == 1;
            }
            _ => {
                row.mean_mse = nan(cell(1)?);
                row.se_mean_mse = nan(cell(2)?);
                row.median_mse = nan(cell(3)?);
                row.mean_abs_bias = nan(cell(4)?);
                row.mean_bias = nan(cell(5)?);
                row.mean_sd = nan(cell(6)?);
                row.jb_reject_frac = cell(7)?;
                row.mean_skew = cell(8)?;
                row.mean_kurt = cell(9)?;
                row.corr = cell(10)?;
                row.var_ratio = cell(11)?;
                row.n_degenerate = count(12)?;
                row.n_replications = count(13)?;
                row.n_failed = count(14)?;
                row.best = count(15)? == 1;
                row.unreliable = count(16)? == 1;
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Aligned plain-text table; `*` marks best rows and `!` unreliable ones.
pub fn format_table(level: Level, rows: &[PerformanceRow]) -> String {
    let f2 = |v: f64| if v.is_finite() { format!("{v:.2}") } else { "-".into() };
    let o2 = |v: Option<f64>| v.map_or_else(|| "-".into(), f2);
    let pct = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{:.0}%", 100.0 * x));
    let (header, cells): (Vec<&str>, Vec<Vec<String>>) = match level {
        Level::Ate => (
            vec!["estimator", "MSE", "Bias", "SD", "Skew.", "Kurt.", "p-value JB"],
            rows.iter()
                .map(|r| {
                    vec![
                        r.estimator.clone(),
                        f2(r.mean_mse),
                        f2(r.mean_bias),
                        f2(r.mean_sd),
                        o2(r.mean_skew),
                        o2(r.mean_kurt),
                        o2(r.jb_p_value),
                    ]
                })
                .collect(),
        ),
        _ => (
            vec![
                "estimator", "MSE", "SE(MSE)", "Median MSE", "|Bias|", "Bias", "SD", "JB", "Skew.", "Kurt.", "Corr.",
                "Var. ratio",
            ],
            rows.iter()
                .map(|r| {
                    vec![
                        r.estimator.clone(),
                        f2(r.mean_mse),
                        f2(r.se_mean_mse),
                        f2(r.median_mse),
                        f2(r.mean_abs_bias),
                        f2(r.mean_bias),
                        f2(r.mean_sd),
                        pct(r.jb_reject_frac),
                        o2(r.mean_skew),
                        o2(r.mean_kurt),
                        o2(r.corr),
                        o2(r.var_ratio),
                    ]
                })
                .collect(),
        ),
    };
    let mut cells = cells;
    for (row, r) in cells.iter_mut().zip(rows) {
        let mark = match (r.best, r.unreliable) {
            (true, true) => " *!",
            (true, false) => " *",
            (false, true) => " !",
            (false, false) => "",
        };
        row[0].push_str(mark);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|j| cells.iter().map(|c| c[j].len()).chain([header[j].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let mut line = |cols: Vec<&str>| {
        for (j, c) in cols.iter().enumerate() {
            if j == 0 {
                let _ = write!(out, "{c:<w$}", w = widths[0]);
            } else {
                let _ = write!(out, "  {c:>w$}", w = widths[j]);
            }
        }
        out.push('\n');
    };
    line(header.clone());
    for row in &cells {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

/// Write the three tables as plain text.
pub fn write_text_report(path: impl AsRef<Path>, tables: &[(Level, Vec<PerformanceRow>)]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for (level, rows) in tables {
        let title = match level {
            Level::Iate => "IATE",
            Level::Gate => "GATE",
            Level::Ate => "ATE",
        };
        writeln!(f, "{title}\n{}", format_table(*level, rows)).map_err(|e| Error::io(path, e))?;
    }
    writeln!(f, "* best mean MSE or within two simulation standard errors of it").map_err(|e| Error::io(path, e))?;
    writeln!(f, "! more than 10% of replications failed").map_err(|e| Error::io(path, e))
}
