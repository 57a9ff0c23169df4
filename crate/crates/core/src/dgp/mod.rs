//! Empirical Monte Carlo population: untreated outcomes and covariates from a
//! base population, synthetic effects driven by the propensity score, and
//! per-replication samples with simulated treatment.

mod groups;
mod store;
mod synthetic;

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::causal::aggregate;
use crate::data::{load_csv, ColumnKind, Dataset, Sample, Schema};
use crate::error::{Error, Result};
use crate::ml::{fit_logistic_lasso, LassoParams};
use crate::rng::{derive_seed, stream};

pub use groups::{assign_groups, Factor, Grouping, GroupingScheme};
pub use store::{load_population, save_population};
pub use synthetic::{generate as generate_synthetic, SyntheticDraw, SyntheticPopConfig, Y0Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    None,
    /// `1 - Poisson(1)`: integer valued, mean 0, variance 1.
    OneMinusPoisson1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// Treatment drawn with the shifted population propensity.
    Selection,
    /// Treatment drawn with probability one half.
    RandomHalf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ItesSpec {
    pub alpha: f64,
    pub noise: Noise,
    pub assignment: Assignment,
    pub y_max: u32,
    /// With censoring, effects are rounded and clipped so that `y0 + ite`
    /// stays in `0..=y_max`. Without, noise enters after standardization and
    /// effects are rounded stochastically.
    pub censoring: bool,
}

impl Default for ItesSpec {
    fn default() -> Self {
        Self { alpha: 2.0, noise: Noise::OneMinusPoisson1, assignment: Assignment::Selection, y_max: 33, censoring: true }
    }
}

impl ItesSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be a finite nonnegative number, got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    /// `name,kind` lines for the covariate columns.
    pub schema: PathBuf,
    #[serde(default = "default_y0_column")]
    pub y0_column: String,
    #[serde(default = "default_treatment_column")]
    pub treatment_column: String,
}

fn default_y0_column() -> String {
    "y0".into()
}

fn default_treatment_column() -> String {
    "treatment".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationSource {
    Synthetic(SyntheticPopConfig),
    Csv(CsvSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationOptions {
    pub n_validation: usize,
    /// Mean propensity after the intercept shift.
    pub target_share: f64,
    pub trim_low: f64,
    pub trim_high: f64,
    pub grouping: GroupingScheme,
}

impl Default for PopulationOptions {
    fn default() -> Self {
        Self { n_validation: 10_000, target_share: 0.5, trim_low: 0.05, trim_high: 0.95, grouping: GroupingScheme::default() }
    }
}

impl PopulationOptions {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi, t) = (self.trim_low, self.trim_high, self.target_share);
        if !(0.0 < lo && lo < t && t < hi && hi < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < trim_low < target_share < trim_high < 1, got {lo}, {t}, {hi}"
            )));
        }
        if self.n_validation == 0 {
            return Err(Error::Config("n_validation must be positive".into()));
        }
        Ok(())
    }
}

/// The immutable simulation population. Rows are untreated units that
/// survived trimming; `validation_rows` and `pool_rows` partition them.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub data: Dataset,
    pub unit_ids: Vec<u64>,
    pub y0: Vec<f64>,
    pub ite: Vec<f64>,
    /// Propensity before the intercept shift; drives the effects.
    pub p_hlm: Vec<f64>,
    /// Propensity after the intercept shift; drives selection.
    pub p_full: Vec<f64>,
    pub validation_rows: Vec<usize>,
    pub pool_rows: Vec<usize>,
    /// Groups of the validation units, aligned with `validation_rows`.
    pub groups: Grouping,
    pub ites: ItesSpec,
    pub options: PopulationOptions,
    pub seed: u64,
    pub intercept_shift: f64,
    pub n_trimmed: usize,
    pub n_censored: usize,
    pub n_clipped: usize,
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Intercept shift `c` with `mean(logistic(index + c)) = target`, by Newton
/// steps safeguarded with a bisection bracket.
pub fn solve_intercept_shift(index: &[f64], target: f64, start: f64) -> Result<f64> {
    if index.is_empty() || !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidArgument("intercept shift needs units and a target in (0, 1)".into()));
    }
    let n = index.len() as f64;
    let eval = |c: f64| {
        let (mut m, mut dm) = (0.0, 0.0);
        for &z in index {
            let p = logistic(z + c);
            m += p;
            dm += p * (1.0 - p);
        }
        (m / n - target, dm / n)
    };
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut c = start;
    for _ in 0..200 {
        let (f, df) = eval(c);
        if f.abs() < 1e-8 {
            return Ok(c);
        }
        if f < 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        let mut next = c - f / df;
        if !next.is_finite() || next <= lo || next >= hi {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0 + (lo - c).abs(),
                (false, _) => hi - 1.0 - (hi - c).abs(),
            };
        }
        c = next;
    }
    Err(Error::NonConvergence { iterations: 200, last_change: eval(c).0.abs() })
}

/// Shift the logit intercept to reach the target share, drop units outside
/// `[lo, hi]`, and repeat until no unit is dropped. Returns the shift and
/// the retained positions.
pub fn shift_and_trim(index: &[f64], target: f64, lo: f64, hi: f64) -> Result<(f64, Vec<usize>)> {
    let mut kept: Vec<usize> = (0..index.len()).collect();
    let mut c = 0.0;
    loop {
        let sub: Vec<f64> = kept.iter().map(|&i| index[i]).collect();
        c = solve_intercept_shift(&sub, target, c)?;
        let before = kept.len();
        kept.retain(|&i| {
            let p = logistic(index[i] + c);
            (lo..=hi).contains(&p)
        });
        if kept.is_empty() {
            return Err(Error::Estimation("trimming removed every unit".into()));
        }
        if kept.len() == before {
            return Ok((c, kept));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IteDraw {
    pub ite: Vec<f64>,
    /// Units whose treated outcome `y0 + round(omega)` reaches or passes a bound.
    pub n_censored: usize,
    /// Units whose effect was changed by clipping.
    pub n_clipped: usize,
}

pub fn compute_ite(p: &[f64], y0: &[f64], spec: &ItesSpec, seed: u64) -> Result<Vec<f64>> {
    Ok(compute_ite_detailed(p, y0, spec, seed)?.ite)
}

pub fn compute_ite_detailed(p: &[f64], y0: &[f64], spec: &ItesSpec, seed: u64) -> Result<IteDraw> {
    spec.validate()?;
    if p.len() != y0.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), got: y0.len() });
    }
    if p.is_empty() {
        return Err(Error::InvalidArgument("no units".into()));
    }
    if let Some(i) = p.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::InvalidArgument(format!("propensity {} at unit {i} outside (0, 1)", p[i])));
    }
    let y_max = spec.y_max as f64;
    if spec.censoring {
        if let Some(i) = y0.iter().position(|&v| !(0.0..=y_max).contains(&v)) {
            return Err(Error::InvalidArgument(format!("y0 {} at unit {i} outside [0, {y_max}]", y0[i])));
        }
    }
    let n = p.len();
    let p_max = p.iter().cloned().fold(f64::MIN, f64::max);
    let eps: Vec<f64> = match spec.noise {
        Noise::None => vec![0.0; n],
        Noise::OneMinusPoisson1 => {
            let pois = Poisson::new(1.0).expect("valid rate");
            let mut r = stream(derive_seed(seed, "ite-noise", 0));
            (0..n).map(|_| 1.0 - pois.sample(&mut r)).collect()
        }
    };
    let signal: Vec<f64> = p.iter().map(|&v| (1.25 * PI * v / p_max).sin()).collect();

    let standardize = |w: &[f64]| -> Result<Vec<f64>> {
        let mean = w.iter().sum::<f64>() / n as f64;
        let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::Estimation("effect index has zero variance; the propensity is degenerate".into()));
        }
        Ok(w.iter().map(|v| (v - mean) / sd).collect())
    };

    if !spec.censoring {
        let base = if spec.alpha == 0.0 { vec![0.0; n] } else { standardize(&signal)? };
        let mut r = stream(derive_seed(seed, "ite-rounding", 0));
        let ite = (0..n)
            .map(|i| {
                let omega = spec.alpha * base[i] + eps[i];
                let floor = omega.floor();
                let u: f64 = r.random();
                if omega - floor < u { floor } else { omega.ceil() }
            })
            .collect();
        return Ok(IteDraw { ite, n_censored: 0, n_clipped: 0 });
    }

    let omega: Vec<f64> = if spec.alpha == 0.0 {
        // nothing to scale: the noise alone remains
        eps
    } else {
        let w: Vec<f64> = (0..n).map(|i| signal[i] + eps[i]).collect();
        standardize(&w)?.into_iter().map(|v| spec.alpha * v).collect()
    };
    let (mut n_censored, mut n_clipped) = (0, 0);
    let ite = (0..n)
        .map(|i| {
            let r = omega[i].round();
            let y1 = y0[i] + r;
            if y1 <= 0.0 || y1 >= y_max {
                n_censored += 1;
            }
            if y1 < 0.0 {
                n_clipped += 1;
                -y0[i]
            } else if y1 > y_max {
                n_clipped += 1;
                y_max - y0[i]
            } else {
                r
            }
        })
        .collect();
    Ok(IteDraw { ite, n_censored, n_clipped })
}

/// Covariates, propensity index (logit scale), untreated outcomes and ids
/// of the untreated base population.
struct BaseUnits {
    data: Dataset,
    index: Vec<f64>,
    y0: Vec<f64>,
    ids: Vec<u64>,
}

fn load_csv_source(src: &CsvSource, y_max: u32) -> Result<BaseUnits> {
    let cov_schema = Schema::load(&src.schema)?;
    let mut reader = csv::Reader::from_path(&src.path).map_err(|e| Error::io(&src.path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::io(&src.path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    drop(reader);
    let path = src.path.display();
    if !header.contains(&src.treatment_column) {
        return Err(Error::Schema(format!("{path}: no treatment column `{}`", src.treatment_column)));
    }
    if !header.contains(&src.y0_column) {
        return Err(Error::Schema(format!("{path}: no outcome column `{}`", src.y0_column)));
    }
    let mut columns = Vec::with_capacity(header.len());
    for name in &header {
        let kind = if *name == src.treatment_column {
            ColumnKind::Binary
        } else if *name == src.y0_column {
            ColumnKind::OrderedDiscrete
        } else {
            cov_schema
                .columns
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, k)| *k)
                .ok_or_else(|| Error::Schema(format!("{path}: column `{name}` is not in the schema")))?
        };
        columns.push((name.clone(), kind));
    }
    let all = load_csv(&src.path, &Schema::new(columns))?;
    let t_col = all.column_index(&src.treatment_column).expect("checked");
    let y_col = all.column_index(&src.y0_column).expect("checked");
    let cov_cols: Vec<usize> = cov_schema
        .columns
        .iter()
        .map(|(name, _)| {
            all.column_index(name)
                .ok_or_else(|| Error::Schema(format!("{path}: schema column `{name}` missing from the file")))
        })
        .collect::<Result<_>>()?;
    let x = all.select_columns(&cov_cols);
    let d: Vec<f64> = all.column(t_col).to_vec();

    let model = fit_logistic_lasso(x.x(), &d, &LassoParams::fixed(0.0))?;
    let controls: Vec<usize> = (0..all.n()).filter(|&i| d[i] == 0.0).collect();
    if controls.is_empty() {
        return Err(Error::Schema(format!("{path}: no untreated units")));
    }
    let mut index = Vec::with_capacity(controls.len());
    let mut y0 = Vec::with_capacity(controls.len());
    for &i in &controls {
        index.push(model.predict_link_row(x.row(i))?);
        let y = all.x()[[i, y_col]];
        if y.fract() != 0.0 || !(0.0..=y_max as f64).contains(&y) {
            return Err(Error::Schema(format!(
                "{path}: line {}: outcome {y} is not an integer in [0, {y_max}]",
                i + 2
            )));
        }
        y0.push(y);
    }
    log::info!("loaded {} units, dropped {} treated", all.n(), all.n() - controls.len());
    Ok(BaseUnits { data: x.select_rows(&controls), index, y0, ids: controls.iter().map(|&i| i as u64).collect() })
}

pub fn build_population(
    source: &PopulationSource,
    ites: &ItesSpec,
    options: &PopulationOptions,
    seed: u64,
) -> Result<Population> {
    ites.validate()?;
    options.validate()?;
    let base = match source {
        PopulationSource::Synthetic(cfg) => {
            if cfg.y_max != ites.y_max {
                return Err(Error::Config(format!(
                    "synthetic y_max {} differs from the effect y_max {}",
                    cfg.y_max, ites.y_max
                )));
            }
            let draw = synthetic::generate(cfg, derive_seed(seed, "synthetic", 0))?;
            let ids = (0..draw.data.n() as u64).collect();
            BaseUnits { data: draw.data, index: draw.propensity_index, y0: draw.y0, ids }
        }
        PopulationSource::Csv(src) => load_csv_source(src, ites.y_max)?,
    };

    let (shift, kept) = shift_and_trim(&base.index, options.target_share, options.trim_low, options.trim_high)?;
    let n_trimmed = base.index.len() - kept.len();
    log::info!("intercept shift {shift:.6}; trimmed {n_trimmed} units");
    let n = kept.len();
    if options.n_validation >= n {
        return Err(Error::Config(format!(
            "n_validation {} leaves no sampling pool in a population of {n}",
            options.n_validation
        )));
    }
    let data = base.data.select_rows(&kept);
    let unit_ids: Vec<u64> = kept.iter().map(|&i| base.ids[i]).collect();
    let y0: Vec<f64> = kept.iter().map(|&i| base.y0[i]).collect();
    let p_hlm: Vec<f64> = kept.iter().map(|&i| logistic(base.index[i])).collect();
    let p_full: Vec<f64> = kept.iter().map(|&i| logistic(base.index[i] + shift)).collect();
    let draw = compute_ite_detailed(&p_hlm, &y0, ites, derive_seed(seed, "ite", 0))?;

    let mut r = stream(derive_seed(seed, "validation", 0));
    let mut validation_rows = rand::seq::index::sample(&mut r, n, options.n_validation).into_vec();
    validation_rows.sort_unstable();
    let mut is_val = vec![false; n];
    for &i in &validation_rows {
        is_val[i] = true;
    }
    let pool_rows = (0..n).filter(|&i| !is_val[i]).collect();
    let groups = assign_groups(&data.select_rows(&validation_rows), &options.grouping)?;

    Ok(Population {
        data,
        unit_ids,
        y0,
        ite: draw.ite,
        p_hlm,
        p_full,
        validation_rows,
        pool_rows,
        groups,
        ites: ites.clone(),
        options: options.clone(),
        seed,
        intercept_shift: shift,
        n_trimmed,
        n_censored: draw.n_censored,
        n_clipped: draw.n_clipped,
    })
}

impl Population {
    pub fn n(&self) -> usize {
        self.data.n()
    }

    /// Treatment probability used when simulating assignment.
    pub fn p_sim(&self, row: usize) -> f64 {
        match self.ites.assignment {
            Assignment::Selection => self.p_full[row],
            Assignment::RandomHalf => 0.5,
        }
    }

    pub fn validation_data(&self) -> Dataset {
        self.data.select_rows(&self.validation_rows)
    }

    pub fn validation_ite(&self) -> Vec<f64> {
        self.validation_rows.iter().map(|&i| self.ite[i]).collect()
    }
}

/// Draw `n_s` units from the pool, simulate treatment and reveal the
/// matching potential outcome. The true effects ride along.
pub fn draw_replication(pop: &Population, n_s: usize, seed: u64) -> Result<Sample> {
    if n_s == 0 || n_s > pop.pool_rows.len() {
        return Err(Error::InvalidArgument(format!(
            "sample size {n_s} must lie in 1..={}",
            pop.pool_rows.len()
        )));
    }
    let mut r = stream(derive_seed(seed, "sample", 0));
    let mut picks = rand::seq::index::sample(&mut r, pop.pool_rows.len(), n_s).into_vec();
    picks.sort_unstable();
    let rows: Vec<usize> = picks.iter().map(|&k| pop.pool_rows[k]).collect();

    let mut r = stream(derive_seed(seed, "treatment", 0));
    let mut d = Vec::with_capacity(n_s);
    let mut y = Vec::with_capacity(n_s);
    for &i in &rows {
        let u: f64 = r.random();
        let treated = u < pop.p_sim(i);
        d.push(if treated { 1.0 } else { 0.0 });
        y.push(if treated { pop.y0[i] + pop.ite[i] } else { pop.y0[i] });
    }
    let ids = rows.iter().map(|&i| pop.unit_ids[i]).collect();
    let ite = rows.iter().map(|&i| pop.ite[i]).collect();
    Sample::with_ids(pop.data.select_rows(&rows), d, y, ids)?.with_true_ite(ite)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub ite: Vec<f64>,
    pub gate: Vec<f64>,
    pub ate: f64,
}

/// Effects in the validation sample: per unit, per group and overall.
pub fn true_targets(pop: &Population) -> Result<Targets> {
    let ite = pop.validation_ite();
    let (gate, ate) = aggregate(&ite, &pop.groups.labels, pop.groups.n_groups())?;
    Ok(Targets { ite, gate, ate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_pop(n: usize, ites: ItesSpec, seed: u64) -> Population {
        let source = PopulationSource::Synthetic(SyntheticPopConfig { n_population: n, ..SyntheticPopConfig::default() });
        let options = PopulationOptions { n_validation: n / 5, ..PopulationOptions::default() };
        build_population(&source, &ites, &options, seed).unwrap()
    }

    #[test]
    fn rounding_and_censoring_branches() {
        let spec = ItesSpec { alpha: 0.0, noise: Noise::None, ..ItesSpec::default() };
        let ite = compute_ite(&[0.2, 0.5, 0.7], &[0.0, 10.0, 33.0], &spec, 1).unwrap();
        assert_eq!(ite, [0.0, 0.0, 0.0]);

        // two units with opposite standardized signal of magnitude one
        let p = [0.2, 0.8];
        let big = ItesSpec { alpha: 2.4, noise: Noise::None, ..ItesSpec::default() };
        let s = [(1.25 * PI * 0.25).sin(), (1.25 * PI).sin()];
        assert!(s[0] > s[1]);
        let ite = compute_ite(&p, &[33.0, 0.0], &big, 1).unwrap();
        // rounded values are +2 and -2, both clipped to zero
        assert_eq!(ite, [0.0, 0.0]);
        let ite = compute_ite(&p, &[10.0, 10.0], &big, 1).unwrap();
        assert_eq!(ite, [2.0, -2.0]);
        let d = compute_ite_detailed(&p, &[32.0, 1.0], &big, 1).unwrap();
        assert_eq!(d.ite, [1.0, -1.0]);
        assert_eq!((d.n_censored, d.n_clipped), (2, 2));
        let d = compute_ite_detailed(&p, &[31.0, 2.0], &big, 1).unwrap();
        assert_eq!(d.ite, [2.0, -2.0]);
        assert_eq!((d.n_censored, d.n_clipped), (2, 0));
    }

    #[test]
    fn moderate_effects_on_synthetic_population() {
        let pop = small_pop(30_000, ItesSpec::default(), 7);
        let n = pop.n() as f64;
        let share = pop.n_censored as f64 / n;
        let mean = pop.ite.iter().sum::<f64>() / n;
        let sd = (pop.ite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((0.20..=0.55).contains(&share), "censored share {share}");
        assert!((1.0..=3.0).contains(&sd), "sd {sd}");
        assert!(pop.n_clipped < pop.n_censored);
    }

    #[test]
    fn degenerate_propensity_with_positive_alpha_fails() {
        let spec = ItesSpec { alpha: 2.0, noise: Noise::None, ..ItesSpec::default() };
        assert!(compute_ite(&[0.3, 0.3, 0.3], &[1.0, 2.0, 3.0], &spec, 1).is_err());
    }

    #[test]
    fn uncensored_rounding_is_unbiased() {
        let spec = ItesSpec { alpha: 2.0, noise: Noise::None, censoring: false, ..ItesSpec::default() };
        let n = 40_000;
        let p: Vec<f64> = (0..n).map(|i| 0.05 + 0.9 * (i % 400) as f64 / 400.0).collect();
        let ite = compute_ite(&p, &vec![0.0; n], &spec, 3).unwrap();
        assert!(ite.iter().all(|v| v.fract() == 0.0));
        // standardized signal has mean zero, so the rounded mean is near zero
        let mean = ite.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "{mean}");
    }

    #[test]
    fn shift_reaches_target_and_trim_holds() {
        let index: Vec<f64> = (0..5000).map(|i| -4.0 + 7.0 * i as f64 / 5000.0).collect();
        let (c, kept) = shift_and_trim(&index, 0.5, 0.05, 0.95).unwrap();
        let p: Vec<f64> = kept.iter().map(|&i| logistic(index[i] + c)).collect();
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert!((mean - 0.5).abs() < 1e-6);
        assert!(p.iter().all(|&v| (0.05..=0.95).contains(&v)));
        assert!(kept.len() < index.len());
    }

    #[test]
    fn shift_preserves_ranking() {
        let index = [-2.0, 0.5, 0.1, 3.0, -1.0];
        let c = solve_intercept_shift(&index, 0.3, 0.0).unwrap();
        let p: Vec<f64> = index.iter().map(|&z| logistic(z + c)).collect();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(index[i] < index[j], p[i] < p[j]);
            }
        }
    }

    #[test]
    fn population_invariants() {
        let pop = small_pop(6000, ItesSpec::default(), 11);
        let mean = pop.p_full.iter().sum::<f64>() / pop.n() as f64;
        assert!((mean - 0.5).abs() < 1e-6);
        assert!(pop.p_full.iter().all(|&p| (0.05..=0.95).contains(&p)));
        for i in 0..pop.n() {
            let y1 = pop.y0[i] + pop.ite[i];
            assert!((0.0..=33.0).contains(&y1) && pop.ite[i].fract() == 0.0);
        }
        assert_eq!(pop.validation_rows.len() + pop.pool_rows.len(), pop.n());
        assert!(pop.validation_rows.iter().all(|v| pop.pool_rows.binary_search(v).is_err()));
    }

    #[test]
    fn alpha_zero_without_noise_gives_zero_targets() {
        let spec = ItesSpec { alpha: 0.0, noise: Noise::None, ..ItesSpec::default() };
        let pop = small_pop(4000, spec, 2);
        assert!(pop.ite.iter().all(|&v| v == 0.0));
        let t = true_targets(&pop).unwrap();
        assert_eq!(t.ate, 0.0);
        assert!(t.gate.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn targets_are_consistent() {
        let pop = small_pop(5000, ItesSpec::default(), 4);
        let a = true_targets(&pop).unwrap();
        let b = true_targets(&pop).unwrap();
        assert_eq!(a, b);
        let sizes = pop.groups.sizes();
        let weighted: f64 = a.gate.iter().zip(&sizes).map(|(g, &s)| g * s as f64).sum::<f64>() / a.ite.len() as f64;
        assert!((weighted - a.ate).abs() < 1e-12);
    }

    #[test]
    fn replication_reveals_untreated_outcome() {
        let pop = small_pop(5000, ItesSpec::default(), 5);
        let s = draw_replication(&pop, 800, 9).unwrap();
        assert_eq!(s.n(), 800);
        let ite = s.true_ite.as_ref().unwrap();
        for i in 0..s.n() {
            let expected = if s.treatment[i] == 0.0 { s.outcome[i] } else { s.outcome[i] - ite[i] };
            let row = pop.unit_ids.iter().position(|&u| u == s.unit_ids[i]).unwrap();
            assert_eq!(expected, pop.y0[row]);
            assert!(pop.pool_rows.binary_search(&row).is_ok());
        }
        assert_eq!(s, draw_replication(&pop, 800, 9).unwrap());
        assert!(draw_replication(&pop, pop.pool_rows.len() + 1, 9).is_err());
    }

    #[test]
    fn random_half_treated_share() {
        let spec = ItesSpec { assignment: Assignment::RandomHalf, ..ItesSpec::default() };
        let pop = small_pop(10_000, spec, 6);
        let inside = (0..100)
            .filter(|&s| {
                let share = draw_replication(&pop, 4000, s).unwrap().n_treated() as f64 / 4000.0;
                (0.45..=0.55).contains(&share)
            })
            .count();
        assert!(inside >= 99);
    }

    #[test]
    fn csv_source_needs_treatment_column() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("pop.csv");
        let schema = dir.path().join("schema.csv");
        std::fs::write(&data, "a,y0\n1,2\n0,3\n").unwrap();
        std::fs::write(&schema, "a,binary\n").unwrap();
        let source = PopulationSource::Csv(CsvSource {
            path: data,
            schema,
            y0_column: "y0".into(),
            treatment_column: "treatment".into(),
        });
        let err = build_population(&source, &ItesSpec::default(), &PopulationOptions::default(), 1).unwrap_err();
        assert!(err.to_string().contains("treatment"), "{err}");
    }
}
