//! Synthetic stand-in for an administrative population of job seekers.
//!
//! Covariates load on two correlated latent factors and are pushed through
//! monotone maps into continuous, ordered and binary columns. The untreated
//! outcome is a censored count in `0..=y_max` with point masses at both
//! bounds.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

/// Named columns, in order, with their kind and factor loadings.
const COLUMNS: [(&str, ColumnKind, f64, f64); 16] = [
    ("age", ColumnKind::Continuous, -0.3, 0.5),
    ("past_earnings", ColumnKind::Continuous, 0.7, 0.2),
    ("unemp_months", ColumnKind::Continuous, -0.6, 0.1),
    ("cw_tenure", ColumnKind::Continuous, 0.0, 0.2),
    ("local_unemp_rate", ColumnKind::Continuous, -0.3, 0.0),
    ("education_years", ColumnKind::OrderedDiscrete, 0.6, 0.0),
    ("employability", ColumnKind::OrderedDiscrete, 0.7, 0.0),
    ("n_children", ColumnKind::OrderedDiscrete, 0.0, 0.6),
    ("female", ColumnKind::Binary, -0.2, 0.3),
    ("foreigner", ColumnKind::Binary, -0.3, -0.2),
    ("qualification", ColumnKind::Binary, 0.6, 0.0),
    ("german", ColumnKind::Binary, 0.2, 0.0),
    ("married", ColumnKind::Binary, 0.0, 0.6),
    ("past_program", ColumnKind::Binary, -0.4, 0.0),
    ("cw_same_gender", ColumnKind::Binary, 0.0, 0.1),
    ("city", ColumnKind::Binary, 0.1, -0.2),
];

const BINARY_SHARES: [f64; 8] = [0.45, 0.35, 0.6, 0.7, 0.5, 0.3, 0.55, 0.4];

const N_CONTINUOUS: usize = 5;
const N_BINARY: usize = 8;

/// Outcome generator: a latent uniform, partly driven by a covariate index,
/// is cut into the two boundary masses and 32 equally likely interior values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Y0Model {
    pub share_zero: f64,
    pub share_max: f64,
    /// Correlation between the latent index and the covariate index.
    pub signal: f64,
    /// Coefficients on the standardized named columns.
    pub coefficients: Vec<f64>,
}

impl Default for Y0Model {
    fn default() -> Self {
        Self {
            share_zero: 0.30,
            share_max: 0.10,
            signal: 0.45,
            coefficients: vec![-0.4, 0.6, -0.6, 0.0, -0.3, 0.2, 0.7, -0.1, -0.2, -0.2, 0.3, 0.1, 0.1, -0.2, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticPopConfig {
    pub n_population: usize,
    /// Continuous columns; beyond the five named ones, generic columns are added.
    pub k_continuous: usize,
    /// Binary columns; beyond the eight named ones, generic columns are added.
    pub k_binary: usize,
    /// Logistic coefficients on the standardized named columns.
    pub propensity_coefficients: Vec<f64>,
    pub propensity_intercept: f64,
    pub factor_correlation: f64,
    pub y_max: u32,
    pub y0_model: Y0Model,
}

impl Default for SyntheticPopConfig {
    fn default() -> Self {
        Self {
            n_population: 90_000,
            k_continuous: N_CONTINUOUS,
            k_binary: N_BINARY,
            propensity_coefficients: vec![
                -0.3, 0.5, -0.4, 0.2, 0.3, 0.2, 0.6, -0.1, 0.2, -0.3, 0.3, 0.2, 0.1, 0.4, 0.3, -0.1,
            ],
            propensity_intercept: 0.0,
            factor_correlation: 0.3,
            y_max: 33,
            y0_model: Y0Model::default(),
        }
    }
}

impl SyntheticPopConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_population < 2 {
            return bad(format!("n_population must be at least 2, got {}", self.n_population));
        }
        if self.k_continuous < N_CONTINUOUS || self.k_binary < N_BINARY {
            return bad(format!(
                "synthetic population needs k_continuous >= {N_CONTINUOUS} and k_binary >= {N_BINARY}"
            ));
        }
        let m = &self.y0_model;
        if !(m.share_zero > 0.0 && m.share_max > 0.0 && m.share_zero + m.share_max < 1.0) {
            return bad(format!(
                "infeasible boundary shares: zero {} and max {} must be positive and sum below 1",
                m.share_zero, m.share_max
            ));
        }
        if !(0.0..1.0).contains(&m.signal) {
            return bad(format!("y0 signal must lie in [0, 1), got {}", m.signal));
        }
        if self.propensity_coefficients.len() != COLUMNS.len() || m.coefficients.len() != COLUMNS.len() {
            return bad(format!("propensity and y0 coefficient lists need {} entries", COLUMNS.len()));
        }
        if !(self.factor_correlation.abs() < 1.0) {
            return bad("factor_correlation must lie in (-1, 1)".into());
        }
        if self.y_max < 2 {
            return bad("y_max must be at least 2".into());
        }
        Ok(())
    }
}

/// Covariates, propensity index and untreated outcome of a synthetic population.
pub struct SyntheticDraw {
    pub data: Dataset,
    pub propensity_index: Vec<f64>,
    pub y0: Vec<f64>,
}

fn standardized(col: &[f64]) -> Vec<f64> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        col.iter().map(|v| (v - mean) / sd).collect()
    } else {
        vec![0.0; col.len()]
    }
}

fn linear_index(cols: &[Vec<f64>], coef: &[f64], intercept: f64) -> Vec<f64> {
    let n = cols[0].len();
    let std: Vec<Vec<f64>> = cols.iter().map(|c| standardized(c)).collect();
    (0..n)
        .map(|i| intercept + coef.iter().zip(&std).map(|(b, c)| b * c[i]).sum::<f64>())
        .collect()
}

pub fn generate(config: &SyntheticPopConfig, seed: u64) -> Result<SyntheticDraw> {
    config.validate()?;
    let n = config.n_population;
    let phi = Normal::standard();
    let mut r = stream(derive_seed(seed, "synthetic-covariates", 0));
    let rho = config.factor_correlation;
    let draw = |r: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(r) };

    let factors: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let a = draw(&mut r);
            let b = rho * a + (1.0 - rho * rho).sqrt() * draw(&mut r);
            (a, b)
        })
        .collect();

    let latent = |l1: f64, l2: f64, r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        // unit variance: loadings plus idiosyncratic part
        let common_var = l1 * l1 + l2 * l2 + 2.0 * rho * l1 * l2;
        let idio = (1.0 - common_var).max(0.05).sqrt();
        let scale = (common_var + idio * idio).sqrt();
        factors
            .iter()
            .map(|&(a, b)| {
                let e: f64 = StandardNormal.sample(r);
                (l1 * a + l2 * b + idio * e) / scale
            })
            .collect()
    };

    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut kinds: Vec<ColumnKind> = Vec::new();
    for (c, &(name, kind, l1, l2)) in COLUMNS.iter().enumerate() {
        let z = latent(l1, l2, &mut r);
        let u: Vec<f64> = z.iter().map(|&v| phi.cdf(v)).collect();
        let col: Vec<f64> = match name {
            "age" => z.iter().map(|v| (40.0 + 10.0 * v).clamp(18.0, 64.0)).collect(),
            "past_earnings" => z.iter().map(|v| (3.3 + 0.5 * v).exp()).collect(),
            "unemp_months" => z.iter().map(|v| (1.2 + 0.7 * v).exp().min(48.0)).collect(),
            "cw_tenure" => u.iter().map(|v| 20.0 * v).collect(),
            "local_unemp_rate" => u.iter().map(|v| 1.5 + 4.0 * v).collect(),
            "education_years" => u.iter().map(|v| 9.0 + (7.0 * v).floor().min(6.0)).collect(),
            "employability" => u.iter().map(|&v| if v < 0.25 { 0.0 } else if v < 0.75 { 1.0 } else { 2.0 }).collect(),
            "n_children" => u
                .iter()
                .map(|&v| if v < 0.5 { 0.0 } else if v < 0.75 { 1.0 } else if v < 0.92 { 2.0 } else { 3.0 })
                .collect(),
            _ => {
                let share = BINARY_SHARES[c - 8];
                u.iter().map(|&v| if v < share { 1.0 } else { 0.0 }).collect()
            }
        };
        cols.push(col);
        names.push(name.to_string());
        kinds.push(kind);
    }
    let named = cols.clone();

    for j in N_CONTINUOUS..config.k_continuous {
        cols.push(latent(0.3, 0.3, &mut r));
        names.push(format!("x_cont_{}", j + 1));
        kinds.push(ColumnKind::Continuous);
    }
    for j in N_BINARY..config.k_binary {
        let z = latent(0.2, -0.2, &mut r);
        cols.push(z.iter().map(|&v| if v < 0.0 { 1.0 } else { 0.0 }).collect());
        names.push(format!("x_bin_{}", j + 1));
        kinds.push(ColumnKind::Binary);
    }

    let propensity_index = linear_index(&named, &config.propensity_coefficients, config.propensity_intercept);
    let y0 = draw_y0(&named, config, seed);
    let x = Array2::from_shape_fn((n, cols.len()), |(i, j)| cols[j][i]);
    let data = Dataset::new(x, kinds, names)?;
    Ok(SyntheticDraw { data, propensity_index, y0 })
}

fn draw_y0(named: &[Vec<f64>], config: &SyntheticPopConfig, seed: u64) -> Vec<f64> {
    let m = &config.y0_model;
    let eta = standardized(&linear_index(named, &m.coefficients, 0.0));
    let phi = Normal::standard();
    let mut r = stream(derive_seed(seed, "synthetic-y0", 0));
    let s = m.signal;
    let interior = (config.y_max - 1) as f64;
    eta.iter()
        .map(|&e| {
            let noise: f64 = StandardNormal.sample(&mut r);
            let u = phi.cdf(s * e + (1.0 - s * s).sqrt() * noise);
            if u < m.share_zero {
                0.0
            } else if u > 1.0 - m.share_max {
                config.y_max as f64
            } else {
                let frac = (u - m.share_zero) / (1.0 - m.share_zero - m.share_max);
                1.0 + (frac * interior).floor().min(interior - 1.0)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticPopConfig {
        SyntheticPopConfig { n_population: 20_000, ..SyntheticPopConfig::default() }
    }

    #[test]
    fn columns_and_kinds() {
        let d = generate(&small(), 1).unwrap();
        assert_eq!(d.data.k(), 16);
        assert_eq!(d.data.names()[6], "employability");
        let emp = d.data.column(6);
        let share1 = emp.iter().filter(|&&v| v == 1.0).count() as f64 / 20_000.0;
        assert!((share1 - 0.5).abs() < 0.02);
    }

    #[test]
    fn y0_has_boundary_masses() {
        let cfg = small();
        let d = generate(&cfg, 2).unwrap();
        let n = d.y0.len() as f64;
        let zero = d.y0.iter().filter(|&&v| v == 0.0).count() as f64 / n;
        let max = d.y0.iter().filter(|&&v| v == 33.0).count() as f64 / n;
        assert!((zero - 0.30).abs() < 0.05, "{zero}");
        assert!((max - 0.10).abs() < 0.05, "{max}");
        assert!(d.y0.iter().all(|&v| v.fract() == 0.0 && (0.0..=33.0).contains(&v)));
    }

    #[test]
    fn extra_columns_are_appended() {
        let cfg = SyntheticPopConfig { n_population: 500, k_continuous: 7, k_binary: 10, ..SyntheticPopConfig::default() };
        let d = generate(&cfg, 3).unwrap();
        assert_eq!(d.data.k(), 20);
        assert_eq!(d.data.names()[16], "x_cont_6");
        assert_eq!(d.data.names()[19], "x_bin_10");
    }

    #[test]
    fn infeasible_shares_rejected() {
        let mut cfg = small();
        cfg.y0_model.share_zero = 0.7;
        cfg.y0_model.share_max = 0.4;
        assert!(matches!(generate(&cfg, 4), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic() {
        let cfg = SyntheticPopConfig { n_population: 300, ..SyntheticPopConfig::default() };
        let a = generate(&cfg, 5).unwrap();
        let b = generate(&cfg, 5).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.y0, b.y0);
    }
}
