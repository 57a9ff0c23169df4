//! Weighted Lasso for least-squares and logistic losses.
//!
//! The solver minimizes `0.5 * sum_i v_i r_i^2 + lambda * |beta|_1` with
//! `v = w / sum(w)`, on standardized columns, by cyclic coordinate descent
//! with an active-set strategy and warm starts along a decreasing penalty
//! path. The logistic fit wraps the same solver in iteratively reweighted
//! least squares.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::make_folds;
use crate::error::{Error, Result};

/// Clamp applied to logistic predictions.
pub const LOGISTIC_CLAMP: (f64, f64) = (0.01, 0.99);

const WORKING_WEIGHT_FLOOR: f64 = 1e-5;
const MAX_IRLS_ITER: usize = 50;
const LAMBDA_MAX_PAD: f64 = 1.0 + 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// A single penalty, no cross-validation.
    Fixed(f64),
    /// Explicit descending grid, selected by cross-validation.
    Grid(Vec<f64>),
    /// `n_lambda` log-spaced values from `lambda_max` to `min_ratio * lambda_max`.
    Auto { n_lambda: usize, min_ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoParams {
    pub penalty: Penalty,
    pub n_folds: usize,
    /// Maximum number of coordinate sweeps per penalty value.
    pub max_iter: usize,
    /// Sweeps stop once the largest weighted squared coefficient change
    /// falls below `tol` times the response variance.
    pub tol: f64,
    pub standardize: bool,
    pub fit_intercept: bool,
    /// Seed of the cross-validation fold assignment.
    pub seed: u64,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self {
            penalty: Penalty::Auto { n_lambda: 100, min_ratio: 1e-3 },
            n_folds: 10,
            max_iter: 100_000,
            tol: 1e-7,
            standardize: true,
            fit_intercept: true,
            seed: 0,
        }
    }
}

impl LassoParams {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn fixed(lambda: f64) -> Self {
        Self { penalty: Penalty::Fixed(lambda), ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        match &self.penalty {
            Penalty::Fixed(l) if !(*l >= 0.0 && l.is_finite()) => {
                Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {l}")))
            }
            Penalty::Grid(g) => {
                if g.is_empty() || g.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                    return Err(Error::InvalidArgument("lambda grid must be non-empty and positive".into()));
                }
                if g.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(Error::InvalidArgument("lambda grid must be strictly descending".into()));
                }
                Ok(())
            }
            Penalty::Auto { n_lambda, min_ratio } => {
                if *n_lambda == 0 || !(*min_ratio > 0.0 && *min_ratio < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "auto grid needs n_lambda >= 1 and 0 < min_ratio < 1, got {n_lambda}, {min_ratio}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub intercept: f64,
    /// Slopes on the original covariate scale.
    pub coefficients: Vec<f64>,
    pub lambda_selected: f64,
    pub family: Family,
    /// Penalty grid and its mean cross-validation loss, when CV was run.
    pub lambda_path: Vec<f64>,
    pub cv_loss: Vec<f64>,
}

impl LassoModel {
    pub fn n_nonzero(&self) -> usize {
        self.coefficients.iter().filter(|&&b| b != 0.0).count()
    }

    /// Linear index `intercept + x'beta`.
    pub fn predict_link_row(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(Error::DimensionMismatch { expected: self.coefficients.len(), got: x.len() });
        }
        Ok(self.intercept + x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Mean prediction: the linear index, or a clamped probability.
    pub fn predict_row(&self, x: ArrayView1<f64>) -> Result<f64> {
        let eta = self.predict_link_row(x)?;
        Ok(match self.family {
            Family::Gaussian => eta,
            Family::Binomial => sigmoid(eta).clamp(LOGISTIC_CLAMP.0, LOGISTIC_CLAMP.1),
        })
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        x.outer_iter().map(|row| self.predict_row(row)).collect()
    }
}

fn sigmoid(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// Dot product with four fixed accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Standardized column-major design.
struct Design {
    z: Vec<Vec<f64>>,
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl Design {
    fn new(x: ArrayView2<f64>, v: &[f64], standardize: bool, fit_intercept: bool) -> Self {
        let p = x.ncols();
        let mut z = Vec::with_capacity(p);
        let mut center = vec![0.0; p];
        let mut scale = vec![1.0; p];
        for j in 0..p {
            let col = x.column(j);
            let c = if fit_intercept {
                col.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
            } else {
                0.0
            };
            let mut zj: Vec<f64> = col.iter().map(|&a| a - c).collect();
            let ss: f64 = zj.iter().zip(v).map(|(a, b)| b * a * a).sum();
            let s = ss.sqrt();
            // a column without spread keeps a zero coefficient
            let degenerate = !(s > 1e-12 * (1.0 + c.abs()));
            if degenerate {
                zj.iter_mut().for_each(|a| *a = 0.0);
            } else if standardize {
                zj.iter_mut().for_each(|a| *a /= s);
                scale[j] = s;
            }
            center[j] = c;
            z.push(zj);
        }
        Self { z, center, scale }
    }

    fn p(&self) -> usize {
        self.z.len()
    }

    fn original_scale(&self, b0: f64, beta: &[f64]) -> (f64, Vec<f64>) {
        let coef: Vec<f64> = beta.iter().zip(&self.scale).map(|(b, s)| b / s).collect();
        let intercept = b0 - coef.iter().zip(&self.center).map(|(b, c)| b * c).sum::<f64>();
        (intercept, coef)
    }
}

/// Coordinate descent on `0.5 sum_i u_i (t_i - b0 - z_i'beta)^2 + lambda |beta|_1`.
trait CoordinateDescent {
    fn n_coords(&self) -> usize;
    fn curvature(&self, j: usize) -> f64;
    /// `sum_i u_i z_ij r_i` at the current residuals.
    fn gradient(&self, j: usize) -> f64;
    /// Returns the change in the intercept times its curvature root.
    fn update_intercept(&mut self, b0: &mut f64, beta: &[f64]) -> f64;
    fn update_coordinate(&mut self, j: usize, beta: &mut [f64], lambda: f64) -> f64;
    fn objective(&self, b0: f64, beta: &[f64], lambda: f64) -> f64;

    fn sweep(&mut self, b0: &mut f64, beta: &mut [f64], lambda: f64, coords: &[usize]) -> f64 {
        let mut change = self.update_intercept(b0, beta);
        for &j in coords {
            change = change.max(self.update_coordinate(j, beta, lambda));
        }
        change
    }

    /// Sweeps to convergence at one penalty value.
    fn solve(
        &mut self,
        b0: &mut f64,
        beta: &mut [f64],
        lambda: f64,
        threshold: f64,
        max_iter: usize,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<()> {
        let all: Vec<usize> = (0..self.n_coords()).collect();
        let mut sweeps = 0;
        loop {
            let mut last = self.sweep(b0, beta, lambda, &all);
            sweeps += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(*b0, beta, lambda));
            }
            if last < threshold {
                return Ok(());
            }
            let active: Vec<usize> = all.iter().copied().filter(|&j| beta[j] != 0.0).collect();
            loop {
                if sweeps >= max_iter {
                    return Err(Error::NonConvergence { iterations: sweeps, last_change: last });
                }
                last = self.sweep(b0, beta, lambda, &active);
                sweeps += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(self.objective(*b0, beta, lambda));
                }
                if last < threshold {
                    break;
                }
            }
            if sweeps >= max_iter {
                return Err(Error::NonConvergence { iterations: sweeps, last_change: last });
            }
        }
    }
}

fn coordinate_step(g: f64, hj: f64, beta: &mut [f64], j: usize, lambda: f64) -> f64 {
    let new = soft_threshold(g + beta[j] * hj, lambda) / hj;
    let delta = new - beta[j];
    beta[j] = new;
    delta
}

fn weighted_objective(design: &Design, u: &[f64], target: &[f64], b0: f64, beta: &[f64], lambda: f64) -> f64 {
    let mut resid: Vec<f64> = target.iter().map(|t| t - b0).collect();
    for (&b, zj) in beta.iter().zip(&design.z) {
        if b != 0.0 {
            resid.iter_mut().zip(zj).for_each(|(r, z)| *r -= b * z);
        }
    }
    let loss: f64 = u.iter().zip(&resid).map(|(w, r)| w * r * r).sum();
    0.5 * loss + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Residual-based updates, used for the changing IRLS weights of the
/// logistic fit. A step costs O(n).
struct Wls<'a> {
    design: &'a Design,
    u: Vec<f64>,
    /// `u * z_j` per column.
    uz: Vec<Vec<f64>>,
    u_sum: f64,
    h: Vec<f64>,
    target: Vec<f64>,
    resid: Vec<f64>,
    fit_intercept: bool,
}

impl<'a> Wls<'a> {
    /// Subproblem with weights `u` and response `target`, residuals at `(b0, beta)`.
    fn new(design: &'a Design, u: Vec<f64>, target: &[f64], b0: f64, beta: &[f64], fit_intercept: bool) -> Self {
        let uz: Vec<Vec<f64>> = design.z.iter().map(|zj| zj.iter().zip(&u).map(|(a, w)| a * w).collect()).collect();
        let h = uz.iter().zip(&design.z).map(|(a, b)| dot(a, b)).collect();
        let mut resid: Vec<f64> = target.iter().map(|t| t - b0).collect();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (r, zij) in resid.iter_mut().zip(&design.z[j]) {
                    *r -= b * zij;
                }
            }
        }
        let u_sum = u.iter().sum();
        Self { design, u, uz, u_sum, h, target: target.to_vec(), resid, fit_intercept }
    }
}

impl CoordinateDescent for Wls<'_> {
    fn n_coords(&self) -> usize {
        self.design.p()
    }

    fn curvature(&self, j: usize) -> f64 {
        self.h[j]
    }

    fn gradient(&self, j: usize) -> f64 {
        dot(&self.uz[j], &self.resid)
    }

    fn update_intercept(&mut self, b0: &mut f64, _beta: &[f64]) -> f64 {
        if !self.fit_intercept {
            return 0.0;
        }
        let delta = dot(&self.u, &self.resid) / self.u_sum;
        if delta != 0.0 {
            *b0 += delta;
            self.resid.iter_mut().for_each(|r| *r -= delta);
        }
        delta.abs() * self.u_sum.sqrt()
    }

    fn update_coordinate(&mut self, j: usize, beta: &mut [f64], lambda: f64) -> f64 {
        let hj = self.h[j];
        if hj <= 0.0 {
            return 0.0;
        }
        let delta = coordinate_step(self.gradient(j), hj, beta, j, lambda);
        if delta != 0.0 {
            for (r, z) in self.resid.iter_mut().zip(&self.design.z[j]) {
                *r -= delta * z;
            }
        }
        delta.abs() * hj.sqrt()
    }

    fn objective(&self, b0: f64, beta: &[f64], lambda: f64) -> f64 {
        weighted_objective(self.design, &self.u, &self.target, b0, beta, lambda)
    }
}

/// Covariance updates for fixed weights: the full gradient is kept and
/// moved along Gram rows, computed once per variable that turns non-zero.
/// A step costs O(p), and O(1) for a coordinate that stays at zero.
///
/// The state starts at `b0 = 0, beta = 0` and must only be changed
/// through this solver.
struct CovWls<'a> {
    design: &'a Design,
    u: Vec<f64>,
    u_sum: f64,
    h: Vec<f64>,
    /// `sum_i u_i z_ij`, zero up to rounding when the design is centred.
    s: Vec<f64>,
    c0: f64,
    /// `sum_k s_k beta_k`.
    s_beta: f64,
    grad: Vec<f64>,
    gram: Vec<Option<Vec<f64>>>,
    target: Vec<f64>,
    fit_intercept: bool,
}

impl<'a> CovWls<'a> {
    fn new(design: &'a Design, u: Vec<f64>, target: &[f64], fit_intercept: bool) -> Self {
        let p = design.p();
        let (mut s, mut grad, mut h) = (vec![0.0; p], vec![0.0; p], vec![0.0; p]);
        let ut: Vec<f64> = u.iter().zip(target).map(|(w, t)| w * t).collect();
        for (j, zj) in design.z.iter().enumerate() {
            s[j] = dot(zj, &u);
            grad[j] = dot(zj, &ut);
            let uz: Vec<f64> = zj.iter().zip(&u).map(|(a, w)| a * w).collect();
            h[j] = dot(&uz, zj);
        }
        let c0 = ut.iter().sum();
        let u_sum = u.iter().sum();
        Self {
            design,
            u,
            u_sum,
            h,
            s,
            c0,
            s_beta: 0.0,
            grad,
            gram: vec![None; p],
            target: target.to_vec(),
            fit_intercept,
        }
    }

    fn fill_gram_row(&mut self, j: usize) {
        if self.gram[j].is_none() {
            let uz: Vec<f64> = self.design.z[j].iter().zip(&self.u).map(|(a, w)| a * w).collect();
            self.gram[j] = Some(self.design.z.iter().map(|zk| dot(&uz, zk)).collect());
        }
    }
}

impl CoordinateDescent for CovWls<'_> {
    fn n_coords(&self) -> usize {
        self.design.p()
    }

    fn curvature(&self, j: usize) -> f64 {
        self.h[j]
    }

    fn gradient(&self, j: usize) -> f64 {
        self.grad[j]
    }

    fn update_intercept(&mut self, b0: &mut f64, _beta: &[f64]) -> f64 {
        if !self.fit_intercept {
            return 0.0;
        }
        let delta = (self.c0 - self.s_beta) / self.u_sum - *b0;
        if delta != 0.0 {
            *b0 += delta;
            for (g, s) in self.grad.iter_mut().zip(&self.s) {
                *g -= delta * s;
            }
        }
        delta.abs() * self.u_sum.sqrt()
    }

    fn update_coordinate(&mut self, j: usize, beta: &mut [f64], lambda: f64) -> f64 {
        let hj = self.h[j];
        if hj <= 0.0 {
            return 0.0;
        }
        let delta = coordinate_step(self.grad[j], hj, beta, j, lambda);
        if delta != 0.0 {
            self.s_beta += delta * self.s[j];
            self.fill_gram_row(j);
            let row = self.gram[j].as_deref().expect("filled");
            for (g, r) in self.grad.iter_mut().zip(row) {
                *g -= delta * r;
            }
        }
        delta.abs() * hj.sqrt()
    }

    fn objective(&self, b0: f64, beta: &[f64], lambda: f64) -> f64 {
        weighted_objective(self.design, &self.u, &self.target, b0, beta, lambda)
    }
}

/// One family-specific fit at a sequence of penalties with warm starts.
struct PathFitter<'a> {
    y: &'a [f64],
    v: Vec<f64>,
    family: Family,
    params: &'a LassoParams,
    design: Design,
}

impl<'a> PathFitter<'a> {
    fn new(x: ArrayView2<'a, f64>, y: &'a [f64], w: &[f64], family: Family, params: &'a LassoParams) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("unit weights must not all be zero".into()));
        }
        let v: Vec<f64> = w.iter().map(|wi| wi / total).collect();
        let design = Design::new(x, &v, params.standardize, params.fit_intercept);
        Ok(Self { y, v, family, params, design })
    }

    fn response_scale(&self) -> f64 {
        match self.family {
            Family::Binomial => 1.0,
            Family::Gaussian => {
                let mean = if self.params.fit_intercept {
                    self.v.iter().zip(self.y).map(|(v, y)| v * y).sum::<f64>()
                } else {
                    0.0
                };
                let sd = self
                    .v
                    .iter()
                    .zip(self.y)
                    .map(|(v, y)| v * (y - mean) * (y - mean))
                    .sum::<f64>()
                    .sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            }
        }
    }

    /// Logistic working problem at the current linear index.
    fn working(&self, b0: f64, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.y.len();
        let mut u = Vec::with_capacity(n);
        let mut target = Vec::with_capacity(n);
        for i in 0..n {
            let eta = b0 + (0..beta.len()).map(|j| beta[j] * self.design.z[j][i]).sum::<f64>();
            let p = sigmoid(eta);
            let q = (p * (1.0 - p)).max(WORKING_WEIGHT_FLOOR);
            u.push(self.v[i] * q);
            target.push(eta + (self.y[i] - p) / q);
        }
        (u, target)
    }

    fn initial_intercept(&self) -> f64 {
        match self.family {
            Family::Gaussian => 0.0,
            Family::Binomial => {
                if !self.params.fit_intercept {
                    return 0.0;
                }
                let m: f64 = self.v.iter().zip(self.y).map(|(v, y)| v * y).sum();
                let m = m.clamp(1e-6, 1.0 - 1e-6);
                (m / (1.0 - m)).ln()
            }
        }
    }

    /// Largest penalty with a non-zero slope, evaluated by the same
    /// arithmetic as the first coordinate sweep from the null model and
    /// padded so later sweeps cannot cross it through rounding.
    fn lambda_max(&self) -> f64 {
        let p = self.design.p();
        let beta = vec![0.0; p];
        let mut b0 = self.initial_intercept();
        let mut cd: Box<dyn CoordinateDescent> = match self.family {
            Family::Gaussian => Box::new(CovWls::new(&self.design, self.v.clone(), self.y, self.params.fit_intercept)),
            Family::Binomial => {
                let (u, target) = self.working(b0, &beta);
                Box::new(Wls::new(&self.design, u, &target, b0, &beta, self.params.fit_intercept))
            }
        };
        cd.update_intercept(&mut b0, &beta);
        (0..p)
            .filter(|&j| cd.curvature(j) > 0.0)
            .map(|j| cd.gradient(j).abs())
            .fold(0.0, f64::max)
            * LAMBDA_MAX_PAD
    }

    fn grid(&self) -> Vec<f64> {
        match &self.params.penalty {
            Penalty::Fixed(l) => vec![*l],
            Penalty::Grid(g) => g.clone(),
            Penalty::Auto { n_lambda, min_ratio } => auto_grid(self.lambda_max(), *n_lambda, *min_ratio),
        }
    }

    /// Fit at each penalty in `grid`, calling `visit` with the
    /// original-scale model after each one.
    fn fit_path(&self, grid: &[f64], mut trace: Option<&mut Vec<f64>>, mut visit: impl FnMut(usize, f64, &[f64])) -> Result<()> {
        let p = self.design.p();
        let mut beta = vec![0.0; p];
        let mut b0 = self.initial_intercept();
        let threshold = self.params.tol.sqrt() * self.response_scale();
        let mut gaussian = (self.family == Family::Gaussian)
            .then(|| CovWls::new(&self.design, self.v.clone(), self.y, self.params.fit_intercept));
        for (idx, &lambda) in grid.iter().enumerate() {
            match self.family {
                Family::Gaussian => {
                    let wls = gaussian.as_mut().expect("gaussian solver");
                    wls.solve(&mut b0, &mut beta, lambda, threshold, self.params.max_iter, trace.as_deref_mut())?;
                }
                Family::Binomial => {
                    for _ in 0..MAX_IRLS_ITER {
                        let (u, target) = self.working(b0, &beta);
                        let mut wls = Wls::new(&self.design, u, &target, b0, &beta, self.params.fit_intercept);
                        let (old_b0, old_beta) = (b0, beta.clone());
                        wls.solve(&mut b0, &mut beta, lambda, threshold, self.params.max_iter, None)?;
                        // same weighted-change measure as the inner sweeps
                        let change = beta
                            .iter()
                            .zip(&old_beta)
                            .zip(&wls.h)
                            .map(|((a, b), h)| (a - b).abs() * h.sqrt())
                            .fold((b0 - old_b0).abs() * wls.u_sum.sqrt(), f64::max);
                        if change < threshold {
                            break;
                        }
                    }
                }
            }
            let (intercept, coef) = self.design.original_scale(b0, &beta);
            visit(idx, intercept, &coef);
        }
        Ok(())
    }

    fn loss(&self, x: ArrayView2<f64>, y: &[f64], w: &[f64], intercept: f64, coef: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, row) in x.outer_iter().enumerate() {
            let eta = intercept + row.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>();
            let l = match self.family {
                Family::Gaussian => (y[i] - eta).powi(2),
                Family::Binomial => {
                    let p = sigmoid(eta).clamp(LOGISTIC_CLAMP.0, LOGISTIC_CLAMP.1);
                    -2.0 * (y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln())
                }
            };
            num += w[i] * l;
            den += w[i];
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

fn auto_grid(lambda_max: f64, n_lambda: usize, min_ratio: f64) -> Vec<f64> {
    let top = if lambda_max > 0.0 { lambda_max } else { 1e-10 };
    if n_lambda == 1 {
        return vec![top];
    }
    let step = min_ratio.ln() / (n_lambda - 1) as f64;
    (0..n_lambda).map(|i| top * (step * i as f64).exp()).collect()
}

fn check_inputs(x: ArrayView2<f64>, y: &[f64], w: &[f64]) -> Result<()> {
    let n = x.nrows();
    for len in [y.len(), w.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidArgument("lasso needs at least one covariate".into()));
    }
    if w.iter().any(|&wi| !(wi >= 0.0 && wi.is_finite())) {
        return Err(Error::InvalidArgument("unit weights must be finite and non-negative".into()));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("lasso inputs must be finite".into()));
    }
    Ok(())
}

/// Weighted Lasso with cross-validated penalty.
pub fn fit_lasso(x: ArrayView2<f64>, y: &[f64], w: &[f64], params: &LassoParams, family: Family) -> Result<LassoModel> {
    fit_lasso_traced(x, y, w, params, family, None)
}

/// Penalized logistic regression with unit weights.
pub fn fit_logistic_lasso(x: ArrayView2<f64>, d: &[f64], params: &LassoParams) -> Result<LassoModel> {
    if d.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("logistic lasso needs a 0/1 outcome".into()));
    }
    let ones = d.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == d.len() {
        return Err(Error::Estimation("logistic lasso needs both classes present".into()));
    }
    fit_lasso(x, d, &vec![1.0; d.len()], params, Family::Binomial)
}

/// Largest penalty at which some slope is non-zero.
pub fn lambda_max(x: ArrayView2<f64>, y: &[f64], w: &[f64], params: &LassoParams, family: Family) -> Result<f64> {
    check_inputs(x, y, w)?;
    Ok(PathFitter::new(x, y, w, family, params)?.lambda_max())
}

pub(crate) fn fit_lasso_traced(
    x: ArrayView2<f64>,
    y: &[f64],
    w: &[f64],
    params: &LassoParams,
    family: Family,
    trace: Option<&mut Vec<f64>>,
) -> Result<LassoModel> {
    check_inputs(x, y, w)?;
    params.validate()?;
    let full = PathFitter::new(x, y, w, family, params)?;
    let grid = full.grid();
    let (selected, cv_loss) = if grid.len() == 1 {
        (0, Vec::new())
    } else {
        let loss = cross_validate(x, y, w, params, family, &grid)?;
        let best = loss
            .iter()
            .enumerate()
            .fold(0, |b, (i, &l)| if l < loss[b] { i } else { b });
        (best, loss)
    };
    let mut result = (0.0, Vec::new());
    full.fit_path(&grid[..=selected], trace, |idx, b0, coef| {
        if idx == selected {
            result = (b0, coef.to_vec());
        }
    })?;
    Ok(LassoModel {
        intercept: result.0,
        coefficients: result.1,
        lambda_selected: grid[selected],
        family,
        lambda_path: if cv_loss.is_empty() { Vec::new() } else { grid },
        cv_loss,
    })
}

fn cross_validate(
    x: ArrayView2<f64>,
    y: &[f64],
    w: &[f64],
    params: &LassoParams,
    family: Family,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let n = x.nrows();
    let plan = make_folds(n, params.n_folds.min(n), params.seed)?;
    let mut total = vec![0.0; grid.len()];
    for (f, test) in plan.folds().iter().enumerate() {
        let train = plan.complement(f);
        let xt = x.select(ndarray::Axis(0), &train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let wt: Vec<f64> = train.iter().map(|&i| w[i]).collect();
        let xv = x.select(ndarray::Axis(0), test);
        let yv: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let wv: Vec<f64> = test.iter().map(|&i| w[i]).collect();
        if family == Family::Binomial && (yt.iter().all(|&v| v == 1.0) || yt.iter().all(|&v| v == 0.0)) {
            return Err(Error::Estimation(format!("cross-validation fold {f} has a single class")));
        }
        let fitter = PathFitter::new(xt.view(), &yt, &wt, family, params)?;
        fitter.fit_path(grid, None, |idx, b0, coef| {
            total[idx] += fitter.loss(xv.view(), &yv, &wv, b0, coef);
        })?;
    }
    Ok(total.into_iter().map(|t| t / plan.n_folds as f64).collect())
}
