//! Dataset containers, deterministic splitting and CSV ingestion.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Measurement level of a covariate column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Binary,
    OrderedDiscrete,
    Continuous,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Binary => "binary",
            ColumnKind::OrderedDiscrete => "ordered-discrete",
            ColumnKind::Continuous => "continuous",
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "binary" => Ok(ColumnKind::Binary),
            "ordered-discrete" | "ordered" | "discrete" => Ok(ColumnKind::OrderedDiscrete),
            "continuous" => Ok(ColumnKind::Continuous),
            other => Err(Error::Schema(format!("unknown column kind `{other}`"))),
        }
    }
}

/// Column names and kinds, read from a `name,kind` per line file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<(String, ColumnKind)>,
}

impl Schema {
    pub fn new(columns: Vec<(String, ColumnKind)>) -> Self {
        Self { columns }
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut columns = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (name, kind) = trimmed.split_once(',').ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("expected `name,kind`, got `{trimmed}`"),
            })?;
            let kind = kind.parse::<ColumnKind>().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            columns.push((name.trim().to_string(), kind));
        }
        if columns.is_empty() {
            return Err(Error::Schema(format!("{}: schema has no columns", path.display())));
        }
        Ok(Self { columns })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for (name, kind) in &self.columns {
            out.push_str(name);
            out.push(',');
            out.push_str(kind.as_str());
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Dense covariate matrix with per-column metadata.
///
/// Invariants (checked on construction): finite entries, binary columns in
/// {0, 1}, at least one row and one column, names and kinds match `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    kinds: Vec<ColumnKind>,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, kinds: Vec<ColumnKind>, names: Vec<String>) -> Result<Self> {
        let (n, k) = x.dim();
        if n == 0 || k == 0 {
            return Err(Error::InvalidArgument(format!("dataset must be non-empty, got {n}x{k}")));
        }
        if kinds.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: kinds.len() });
        }
        if names.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: names.len() });
        }
        for (j, col) in x.axis_iter(Axis(1)).enumerate() {
            for (i, &v) in col.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "non-finite value at row {i}, column `{}`",
                        names[j]
                    )));
                }
                if kinds[j] == ColumnKind::Binary && v != 0.0 && v != 1.0 {
                    return Err(Error::Schema(format!(
                        "binary column `{}` has value {v} at row {i}",
                        names[j]
                    )));
                }
            }
        }
        Ok(Self { x, kinds, names })
    }

    /// Build a dataset of continuous columns named `x0..`.
    pub fn from_continuous(x: Array2<f64>) -> Result<Self> {
        let k = x.ncols();
        let names = (0..k).map(|j| format!("x{j}")).collect();
        Self::new(x, vec![ColumnKind::Continuous; k], names)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn schema(&self) -> Schema {
        Schema::new(self.names.iter().cloned().zip(self.kinds.iter().copied()).collect())
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.x.column(j)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            kinds: self.kinds.clone(),
            names: self.names.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(1), cols),
            kinds: cols.iter().map(|&j| self.kinds[j]).collect(),
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
        }
    }

    /// Same covariates in the same column layout, checked by name.
    pub fn check_same_columns(&self, other: &Dataset) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Schema(format!(
                "column mismatch: expected {:?}, got {:?}",
                self.names, other.names
            )));
        }
        Ok(())
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "null" | "none" | "."
    )
}

/// Read a header-row CSV whose header equals the schema's names.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::io(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { path: pstr.clone(), line: 1, msg: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let expected = schema.names();
    if header != expected {
        return Err(Error::Schema(format!(
            "{pstr}: header {header:?} does not match schema {expected:?}"
        )));
    }
    let k = expected.len();
    let mut values = Vec::new();
    let mut n = 0usize;
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| Error::Parse { path: pstr.clone(), line, msg: e.to_string() })?;
        if record.len() != k {
            return Err(Error::Parse {
                path: pstr.clone(),
                line,
                msg: format!("expected {k} cells, found {}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            if is_missing(cell) {
                return Err(Error::MissingValue {
                    path: pstr.clone(),
                    row: row + 1,
                    line,
                    column: expected[j].clone(),
                });
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: pstr.clone(),
                line,
                msg: format!("column `{}`: cannot parse `{cell}` as a number", expected[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: pstr.clone(),
                    line,
                    msg: format!("column `{}`: non-finite value `{cell}`", expected[j]),
                });
            }
            if schema.columns[j].1 == ColumnKind::Binary && v != 0.0 && v != 1.0 {
                return Err(Error::Schema(format!(
                    "{pstr}: line {line}: binary column `{}` has value {v}",
                    expected[j]
                )));
            }
            values.push(v);
        }
        n += 1;
    }
    let x = Array2::from_shape_vec((n, k), values)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Dataset::new(
        x,
        schema.columns.iter().map(|(_, kind)| *kind).collect(),
        expected,
    )
}

/// Write a dataset with shortest round-trip float formatting.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    writeln!(out, "{}", data.names.join(",")).map_err(io)?;
    let mut line = String::new();
    for row in data.x.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Outcome-side data of one replication: covariates, treatment and outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub data: Dataset,
    pub treatment: Vec<f64>,
    pub outcome: Vec<f64>,
    /// Stable identifiers used for id-based seeding of forests.
    pub unit_ids: Vec<u64>,
    /// True individual effects; only present for simulated samples.
    pub true_ite: Option<Vec<f64>>,
}

impl Sample {
    pub fn new(data: Dataset, treatment: Vec<f64>, outcome: Vec<f64>) -> Result<Self> {
        let n = data.n();
        let ids = (0..n as u64).collect();
        Self::with_ids(data, treatment, outcome, ids)
    }

    pub fn with_ids(
        data: Dataset,
        treatment: Vec<f64>,
        outcome: Vec<f64>,
        unit_ids: Vec<u64>,
    ) -> Result<Self> {
        let n = data.n();
        for len in [treatment.len(), outcome.len(), unit_ids.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        if let Some(i) = treatment.iter().position(|&d| d != 0.0 && d != 1.0) {
            return Err(Error::InvalidArgument(format!("treatment at row {i} is not 0/1")));
        }
        if let Some(i) = outcome.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite outcome at row {i}")));
        }
        Ok(Self { data, treatment, outcome, unit_ids, true_ite: None })
    }

    pub fn with_true_ite(mut self, ite: Vec<f64>) -> Result<Self> {
        if ite.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: ite.len() });
        }
        self.true_ite = Some(ite);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&d| d == 1.0).count()
    }

    /// Indices of units in arm `arm` (0 or 1) among `rows`.
    pub fn arm_rows(&self, rows: &[usize], arm: f64) -> Vec<usize> {
        rows.iter().copied().filter(|&i| self.treatment[i] == arm).collect()
    }

    pub fn require_both_arms(&self) -> Result<()> {
        let t = self.n_treated();
        if t == 0 || t == self.n() {
            return Err(Error::Estimation(format!(
                "both treatment arms must be non-empty (treated {t} of {})",
                self.n()
            )));
        }
        Ok(())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Sample {
        Sample {
            data: self.data.select_rows(rows),
            treatment: rows.iter().map(|&i| self.treatment[i]).collect(),
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
            unit_ids: rows.iter().map(|&i| self.unit_ids[i]).collect(),
            true_ite: self.true_ite.as_ref().map(|t| rows.iter().map(|&i| t[i]).collect()),
        }
    }
}

/// Assignment of `n` units to folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub fold_assignments: Vec<usize>,
    pub n_folds: usize,
    pub seed: u64,
}

impl SplitPlan {
    pub fn n(&self) -> usize {
        self.fold_assignments.len()
    }

    /// Unit indices of each fold, in ascending index order.
    pub fn folds(&self) -> Vec<Vec<usize>> {
        let mut folds = vec![Vec::new(); self.n_folds];
        for (i, &f) in self.fold_assignments.iter().enumerate() {
            folds[f].push(i);
        }
        folds
    }

    /// Indices outside fold `f`.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_assignments[i] != f).collect()
    }
}

/// Uniform random partition of `0..n` into `n_folds` folds of near-equal size.
pub fn make_folds(n: usize, n_folds: usize, seed: u64) -> Result<SplitPlan> {
    if n_folds < 2 || n_folds > n {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= n_folds <= n, got n_folds={n_folds}, n={n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed));
    let mut fold_assignments = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_assignments[i] = pos % n_folds;
    }
    Ok(SplitPlan { fold_assignments, n_folds, seed })
}

/// Random halves of sizes ceil(n/2) and floor(n/2).
pub fn split_half(n: usize, seed: u64) -> Result<SplitPlan> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("split_half needs n >= 2, got {n}")));
    }
    make_folds(n, 2, seed)
}

/// Validation-set predictions of one estimator in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub iate: Vec<f64>,
    pub gate: Vec<f64>,
    pub ate: f64,
    pub estimator_id: String,
    pub replication_id: usize,
}
