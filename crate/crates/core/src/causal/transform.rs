//! Weights and modified outcomes that turn each approach into a weighted
//! regression of a pseudo-outcome on covariates.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateMode {
    Raw,
    McmModified,
    RlModified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformedProblem {
    pub weights: Vec<f64>,
    pub pseudo_outcome: Vec<f64>,
    pub covariate_mode: CovariateMode,
}

fn check_lengths(n: usize, others: &[&[f64]]) -> Result<()> {
    for v in others {
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
    }
    Ok(())
}

fn check_propensity(p: &[f64]) -> Result<()> {
    if let Some(i) = p.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::InvalidArgument(format!("propensity {} at unit {i} outside (0, 1)", p[i])));
    }
    Ok(())
}

/// `y (d - p) / (p (1 - p))`, unit weights.
pub fn transform_mom_ipw(y: &[f64], d: &[f64], p: &[f64]) -> Result<TransformedProblem> {
    check_lengths(y.len(), &[d, p])?;
    check_propensity(p)?;
    let pseudo_outcome = (0..y.len())
        .map(|i| y[i] * (d[i] - p[i]) / (p[i] * (1.0 - p[i])))
        .collect();
    Ok(TransformedProblem {
        weights: vec![1.0; y.len()],
        pseudo_outcome,
        covariate_mode: CovariateMode::Raw,
    })
}

/// Doubly robust score `mu1 - mu0 + d (y - mu1) / p - (1 - d)(y - mu0) / (1 - p)`.
pub fn transform_mom_dr(y: &[f64], d: &[f64], p: &[f64], mu1: &[f64], mu0: &[f64]) -> Result<TransformedProblem> {
    check_lengths(y.len(), &[d, p, mu1, mu0])?;
    check_propensity(p)?;
    let pseudo_outcome = (0..y.len())
        .map(|i| {
            mu1[i] - mu0[i] + d[i] * (y[i] - mu1[i]) / p[i] - (1.0 - d[i]) * (y[i] - mu0[i]) / (1.0 - p[i])
        })
        .collect();
    Ok(TransformedProblem {
        weights: vec![1.0; y.len()],
        pseudo_outcome,
        covariate_mode: CovariateMode::Raw,
    })
}

/// Weights `T (d - p) / (4 p (1 - p))` and outcome `2 T y`, or `2 T (y - mu)`
/// with efficiency augmentation, where `T = 2d - 1`.
pub fn transform_mcm(y: &[f64], d: &[f64], p: &[f64], mu: Option<&[f64]>) -> Result<TransformedProblem> {
    check_lengths(y.len(), &[d, p])?;
    if let Some(mu) = mu {
        check_lengths(y.len(), &[mu])?;
    }
    check_propensity(p)?;
    let mut weights = Vec::with_capacity(y.len());
    let mut pseudo_outcome = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        let t = 2.0 * d[i] - 1.0;
        let w = t * (d[i] - p[i]) / (4.0 * p[i] * (1.0 - p[i]));
        debug_assert!(w > 0.0);
        weights.push(w);
        let resid = match mu {
            Some(mu) => y[i] - mu[i],
            None => y[i],
        };
        pseudo_outcome.push(2.0 * t * resid);
    }
    Ok(TransformedProblem { weights, pseudo_outcome, covariate_mode: CovariateMode::Raw })
}

/// Weights `(d - p)^2` and outcome `(y - mu) / (d - p)`.
pub fn transform_rlearn(y: &[f64], d: &[f64], p: &[f64], mu: &[f64]) -> Result<TransformedProblem> {
    check_lengths(y.len(), &[d, p, mu])?;
    check_propensity(p)?;
    let weights = (0..y.len()).map(|i| (d[i] - p[i]).powi(2)).collect();
    let pseudo_outcome = (0..y.len()).map(|i| (y[i] - mu[i]) / (d[i] - p[i])).collect();
    Ok(TransformedProblem { weights, pseudo_outcome, covariate_mode: CovariateMode::Raw })
}

/// Modified-covariate form of MCM: design `(T/2) [1, x]` (no separate
/// intercept), weights `T (d - p) / (p (1 - p))`, outcome `y` (or `y - mu`).
pub fn mcm_modified_problem(
    x: ArrayView2<f64>,
    y: &[f64],
    d: &[f64],
    p: &[f64],
    mu: Option<&[f64]>,
) -> Result<(Array2<f64>, TransformedProblem)> {
    check_lengths(x.nrows(), &[y, d, p])?;
    check_propensity(p)?;
    let design = with_constant(x, |i| (2.0 * d[i] - 1.0) / 2.0);
    let weights = (0..y.len())
        .map(|i| (2.0 * d[i] - 1.0) * (d[i] - p[i]) / (p[i] * (1.0 - p[i])))
        .collect();
    let pseudo_outcome = (0..y.len()).map(|i| y[i] - mu.map_or(0.0, |m| m[i])).collect();
    Ok((design, TransformedProblem { weights, pseudo_outcome, covariate_mode: CovariateMode::McmModified }))
}

/// Modified-covariate form of R-learning: design `(d - p) [1, x]`, unit
/// weights, outcome `y - mu`.
pub fn rl_modified_problem(
    x: ArrayView2<f64>,
    y: &[f64],
    d: &[f64],
    p: &[f64],
    mu: &[f64],
) -> Result<(Array2<f64>, TransformedProblem)> {
    check_lengths(x.nrows(), &[y, d, p, mu])?;
    let design = with_constant(x, |i| d[i] - p[i]);
    let pseudo_outcome = (0..y.len()).map(|i| y[i] - mu[i]).collect();
    Ok((
        design,
        TransformedProblem { weights: vec![1.0; y.len()], pseudo_outcome, covariate_mode: CovariateMode::RlModified },
    ))
}

fn with_constant(x: ArrayView2<f64>, scale: impl Fn(usize) -> f64) -> Array2<f64> {
    Array2::from_shape_fn((x.nrows(), x.ncols() + 1), |(i, j)| {
        let v = if j == 0 { 1.0 } else { x[[i, j - 1]] };
        scale(i) * v
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ipw_examples() {
        let t = transform_mom_ipw(&[1.0, 1.0], &[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert_eq!(t.pseudo_outcome, [2.0, -2.0]);
        assert_eq!(t.weights, [1.0, 1.0]);
    }

    #[test]
    fn dr_examples() {
        let t = transform_mom_dr(&[2.0], &[1.0], &[0.5], &[1.0], &[0.0]).unwrap();
        assert_eq!(t.pseudo_outcome, [3.0]);
        // outcome equal to its conditional mean leaves mu1 - mu0
        let t = transform_mom_dr(&[4.0, 1.5], &[1.0, 0.0], &[0.3, 0.7], &[4.0, 2.5], &[2.0, 1.5]).unwrap();
        assert_eq!(t.pseudo_outcome, [2.0, 1.0]);
    }

    #[test]
    fn mcm_examples() {
        let t = transform_mcm(&[3.0], &[1.0], &[0.25], None).unwrap();
        assert!((t.weights[0] - 1.0).abs() < 1e-15);
        assert_eq!(t.pseudo_outcome, [6.0]);
        let t = transform_mcm(&[3.0], &[0.0], &[0.5], None).unwrap();
        assert_eq!(t.weights, [0.5]);
        assert_eq!(t.pseudo_outcome, [-6.0]);
        let t = transform_mcm(&[3.0], &[0.0], &[0.5], Some(&[1.0])).unwrap();
        assert_eq!(t.pseudo_outcome, [-4.0]);
    }

    #[test]
    fn mcm_weights_positive_on_grid() {
        for k in 1..100 {
            let p = k as f64 / 100.0;
            for d in [0.0, 1.0] {
                let t = transform_mcm(&[1.0], &[d], &[p], None).unwrap();
                assert!(t.weights[0] > 0.0);
            }
        }
    }

    #[test]
    fn rlearn_examples() {
        let t = transform_rlearn(&[2.0], &[1.0], &[0.3], &[0.6]).unwrap();
        assert!((t.weights[0] - 0.49).abs() < 1e-15);
        assert!((t.pseudo_outcome[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn propensity_outside_unit_interval_is_rejected() {
        assert!(transform_mom_ipw(&[1.0], &[1.0], &[1.0]).is_err());
        assert!(transform_mcm(&[1.0], &[1.0], &[0.0], None).is_err());
    }
}
