use std::sync::OnceLock;

use ndarray::{Array2, ArrayView2, Axis};

use super::spec::{EstimatorSpec, Learner, LearnerConfig, Method, NuisanceKind};
use super::transform::{transform_mcm, transform_mom_dr, transform_mom_ipw, transform_rlearn, TransformedProblem};
use crate::data::{split_half, Dataset, Sample, SplitPlan};
use crate::error::{Error, Result};
use crate::ml::forest::{
    fit_causal_forest, fit_probability_forest_with_ids, fit_regression_forest_with_ids, Centering, ForestModel,
};
use crate::ml::lasso::{fit_lasso, fit_logistic_lasso, Family, LassoModel};
use crate::ml::{expand_features, FeatureExpansion};
use crate::rng::derive_seed;

/// Assignment of the replication sample to two halves, plus the seed each
/// half's models use. Seeds travel with the half, so swapping the halves
/// swaps the seeds too.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFit {
    plan: SplitPlan,
    half_seeds: [u64; 2],
}

impl CrossFit {
    pub fn new(n: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            plan: split_half(n, derive_seed(seed, "halves", 0))?,
            half_seeds: [derive_seed(seed, "half", 0), derive_seed(seed, "half", 1)],
        })
    }

    /// Same partition with the roles of the two halves exchanged.
    pub fn mirrored(&self) -> Self {
        let mut plan = self.plan.clone();
        plan.fold_assignments.iter_mut().for_each(|f| *f = 1 - *f);
        Self { plan, half_seeds: [self.half_seeds[1], self.half_seeds[0]] }
    }

    pub fn plan(&self) -> &SplitPlan {
        &self.plan
    }

    fn halves(&self) -> Vec<Vec<usize>> {
        self.plan.folds()
    }
}

/// Cross-fitted nuisance predictions for every unit of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Nuisances {
    pub p_hat: Option<Vec<f64>>,
    pub mu_hat: Option<Vec<f64>>,
    pub mu1_hat: Option<Vec<f64>>,
    pub mu0_hat: Option<Vec<f64>>,
    /// Half each unit belongs to; its predictions come from the other half.
    pub fold_of: Vec<usize>,
}

impl Nuisances {
    /// Half whose models produced unit `i`'s predictions.
    pub fn trained_on(&self, i: usize) -> usize {
        1 - self.fold_of[i]
    }

    pub fn get(&self, kind: NuisanceKind) -> Option<&[f64]> {
        match kind {
            NuisanceKind::P => self.p_hat.as_deref(),
            NuisanceKind::Mu => self.mu_hat.as_deref(),
            NuisanceKind::Mu1 => self.mu1_hat.as_deref(),
            NuisanceKind::Mu0 => self.mu0_hat.as_deref(),
        }
    }
}

struct Expanded {
    train: Array2<f64>,
    validation: Array2<f64>,
    expansion: FeatureExpansion,
}

enum Fitted {
    Forest(ForestModel),
    Lasso(LassoModel),
}

impl Fitted {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        match self {
            Fitted::Forest(m) => m.predict(x),
            Fitted::Lasso(m) => m.predict(x),
        }
    }
}

type Cache = OnceLock<Result<Vec<f64>>>;

/// Everything the estimators of one replication share: the data, the
/// half split, the feature expansion and the cross-fitted nuisances. Each
/// shared piece is computed at most once.
pub struct ReplicationContext<'a> {
    train: &'a Sample,
    validation: &'a Dataset,
    config: &'a LearnerConfig,
    seed: u64,
    cross_fit: CrossFit,
    expanded: OnceLock<Result<Expanded>>,
    nuisances: [[Cache; 4]; 2],
}

impl<'a> ReplicationContext<'a> {
    pub fn new(train: &'a Sample, validation: &'a Dataset, config: &'a LearnerConfig, seed: u64) -> Result<Self> {
        train.data.check_same_columns(validation)?;
        train.require_both_arms()?;
        Ok(Self {
            train,
            validation,
            config,
            seed,
            cross_fit: CrossFit::new(train.n(), seed)?,
            expanded: OnceLock::new(),
            nuisances: Default::default(),
        })
    }

    pub fn with_cross_fit(mut self, cross_fit: CrossFit) -> Result<Self> {
        if cross_fit.plan.n() != self.train.n() {
            return Err(Error::DimensionMismatch { expected: self.train.n(), got: cross_fit.plan.n() });
        }
        self.cross_fit = cross_fit;
        self.nuisances = Default::default();
        Ok(self)
    }

    pub fn cross_fit(&self) -> &CrossFit {
        &self.cross_fit
    }

    /// Replace a nuisance by externally supplied values (e.g. the truth).
    pub fn inject_nuisance(&self, learner: Learner, kind: NuisanceKind, values: Vec<f64>) -> Result<()> {
        if values.len() != self.train.n() {
            return Err(Error::DimensionMismatch { expected: self.train.n(), got: values.len() });
        }
        self.nuisances[learner as usize][kind.index()]
            .set(Ok(values))
            .map_err(|_| Error::InvalidArgument(format!("nuisance {} already computed", kind.as_str())))
    }

    /// Feature expansion used by the Lasso, fitted on the training sample.
    pub fn feature_expansion(&self) -> Result<&FeatureExpansion> {
        self.expanded().map(|e| &e.expansion)
    }

    fn expanded(&self) -> Result<&Expanded> {
        self.expanded
            .get_or_init(|| {
                let (train, expansion) = expand_features(&self.train.data)?;
                let validation = expansion.apply(self.validation)?;
                Ok(Expanded {
                    train: train.x().to_owned(),
                    validation: validation.x().to_owned(),
                    expansion,
                })
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Learner inputs: raw covariates for forests, expanded terms for the Lasso.
    fn features(&self, learner: Learner) -> Result<(ArrayView2<'_, f64>, ArrayView2<'_, f64>)> {
        match learner {
            Learner::Forest => Ok((self.train.data.x(), self.validation.x())),
            Learner::Lasso => {
                let e = self.expanded()?;
                Ok((e.train.view(), e.validation.view()))
            }
        }
    }

    fn fit_outcome(&self, learner: Learner, x: ArrayView2<f64>, y: &[f64], w: &[f64], ids: &[u64], seed: u64) -> Result<Fitted> {
        match learner {
            Learner::Forest => {
                if w.iter().any(|&v| v != 1.0) {
                    return Err(Error::InvalidArgument("forests do not take unit weights".into()));
                }
                let params = self.config.forest.with_seed(seed);
                Ok(Fitted::Forest(fit_regression_forest_with_ids(x, y, ids, &params)?))
            }
            Learner::Lasso => {
                let params = self.config.lasso.with_seed(seed);
                Ok(Fitted::Lasso(fit_lasso(x, y, w, &params, Family::Gaussian)?))
            }
        }
    }

    fn fit_propensity(&self, learner: Learner, x: ArrayView2<f64>, d: &[f64], ids: &[u64], seed: u64) -> Result<Fitted> {
        match learner {
            Learner::Forest => {
                let params = self.config.forest.with_seed(seed);
                Ok(Fitted::Forest(fit_probability_forest_with_ids(x, d, ids, &params)?))
            }
            Learner::Lasso => {
                let params = self.config.lasso.with_seed(seed);
                Ok(Fitted::Lasso(fit_logistic_lasso(x, d, &params)?))
            }
        }
    }

    /// Out-of-half predictions of one nuisance function for every unit.
    pub fn nuisance(&self, learner: Learner, kind: NuisanceKind) -> Result<&[f64]> {
        self.nuisances[learner as usize][kind.index()]
            .get_or_init(|| self.compute_nuisance(learner, kind))
            .as_deref()
            .map_err(Clone::clone)
    }

    fn compute_nuisance(&self, learner: Learner, kind: NuisanceKind) -> Result<Vec<f64>> {
        let (x, _) = self.features(learner)?;
        let s = self.train;
        let halves = self.cross_fit.halves();
        let mut out = vec![0.0; s.n()];
        for h in 0..2 {
            let rows = match kind {
                NuisanceKind::P | NuisanceKind::Mu => halves[h].clone(),
                NuisanceKind::Mu1 => s.arm_rows(&halves[h], 1.0),
                NuisanceKind::Mu0 => s.arm_rows(&halves[h], 0.0),
            };
            if rows.is_empty() {
                return Err(Error::Estimation(format!(
                    "no {} units in sample half {h} to fit {}; increase the sample size",
                    if kind == NuisanceKind::Mu1 { "treated" } else { "control" },
                    kind.as_str()
                )));
            }
            let xt = x.select(Axis(0), &rows);
            let ids: Vec<u64> = rows.iter().map(|&i| s.unit_ids[i]).collect();
            let seed = derive_seed(self.cross_fit.half_seeds[h], &format!("nuisance/{}/{}", learner.as_str(), kind.as_str()), 0);
            let model = match kind {
                NuisanceKind::P => {
                    let d: Vec<f64> = rows.iter().map(|&i| s.treatment[i]).collect();
                    self.fit_propensity(learner, xt.view(), &d, &ids, seed)?
                }
                _ => {
                    let y: Vec<f64> = rows.iter().map(|&i| s.outcome[i]).collect();
                    self.fit_outcome(learner, xt.view(), &y, &vec![1.0; y.len()], &ids, seed)?
                }
            };
            let other = &halves[1 - h];
            let pred = model.predict(x.select(Axis(0), other).view())?;
            for (&i, v) in other.iter().zip(pred) {
                out[i] = v;
            }
        }
        Ok(out)
    }

    pub fn nuisances(&self, learner: Learner, which: &[NuisanceKind]) -> Result<Nuisances> {
        let mut n = Nuisances {
            p_hat: None,
            mu_hat: None,
            mu1_hat: None,
            mu0_hat: None,
            fold_of: self.cross_fit.plan.fold_assignments.clone(),
        };
        for &kind in which {
            let v = Some(self.nuisance(learner, kind)?.to_vec());
            match kind {
                NuisanceKind::P => n.p_hat = v,
                NuisanceKind::Mu => n.mu_hat = v,
                NuisanceKind::Mu1 => n.mu1_hat = v,
                NuisanceKind::Mu0 => n.mu0_hat = v,
            }
        }
        Ok(n)
    }

    /// Pseudo-outcome problem over the whole training sample.
    pub fn transformed_problem(&self, spec: &EstimatorSpec) -> Result<TransformedProblem> {
        let s = self.train;
        let l = spec.learner();
        let (y, d) = (&s.outcome[..], &s.treatment[..]);
        match spec.method() {
            Method::MomIpw => transform_mom_ipw(y, d, self.nuisance(l, NuisanceKind::P)?),
            Method::MomDr => transform_mom_dr(
                y,
                d,
                self.nuisance(l, NuisanceKind::P)?,
                self.nuisance(l, NuisanceKind::Mu1)?,
                self.nuisance(l, NuisanceKind::Mu0)?,
            ),
            Method::Mcm => transform_mcm(y, d, self.nuisance(l, NuisanceKind::P)?, None),
            Method::McmEa => transform_mcm(
                y,
                d,
                self.nuisance(l, NuisanceKind::P)?,
                Some(self.nuisance(l, NuisanceKind::Mu)?),
            ),
            Method::Rlearn => transform_rlearn(
                y,
                d,
                self.nuisance(l, NuisanceKind::P)?,
                self.nuisance(l, NuisanceKind::Mu)?,
            ),
            m => Err(Error::InvalidArgument(format!("{} has no pseudo-outcome", m.as_str()))),
        }
    }

    /// Effect regression on each half with out-of-half nuisances, averaged
    /// over the two halves on the validation units.
    fn cross_fitted_effect(&self, spec: &EstimatorSpec) -> Result<Vec<f64>> {
        let problem = self.transformed_problem(spec)?;
        let (x, xv) = self.features(spec.learner())?;
        let halves = self.cross_fit.halves();
        let mut preds = Vec::with_capacity(2);
        for (h, rows) in halves.iter().enumerate() {
            let xt = x.select(Axis(0), rows);
            let y: Vec<f64> = rows.iter().map(|&i| problem.pseudo_outcome[i]).collect();
            let w: Vec<f64> = rows.iter().map(|&i| problem.weights[i]).collect();
            let ids: Vec<u64> = rows.iter().map(|&i| self.train.unit_ids[i]).collect();
            let seed = derive_seed(self.cross_fit.half_seeds[h], &format!("effect/{spec}"), 0);
            let model = self.fit_outcome(spec.learner(), xt.view(), &y, &w, &ids, seed)?;
            preds.push(model.predict(xv)?);
        }
        Ok(preds[0].iter().zip(&preds[1]).map(|(a, b)| 0.5 * (a + b)).collect())
    }

    /// IATE predictions for the validation units.
    pub fn estimate(&self, spec: &EstimatorSpec) -> Result<Vec<f64>> {
        let s = self.train;
        let all: Vec<usize> = (0..s.n()).collect();
        let seed = derive_seed(self.seed, &format!("effect/{spec}"), 0);
        match spec.method() {
            Method::Infeasible => {
                let ite = s.true_ite.as_ref().ok_or_else(|| {
                    Error::Estimation("the infeasible benchmark needs the true effects of the sample".into())
                })?;
                let (x, xv) = self.features(spec.learner())?;
                let model = self.fit_outcome(spec.learner(), x, ite, &vec![1.0; s.n()], &s.unit_ids, seed)?;
                model.predict(xv)
            }
            Method::Cmr => {
                let (x, xv) = self.features(spec.learner())?;
                let mut arm_pred = Vec::with_capacity(2);
                for arm in [1.0, 0.0] {
                    let rows = s.arm_rows(&all, arm);
                    let y: Vec<f64> = rows.iter().map(|&i| s.outcome[i]).collect();
                    let ids: Vec<u64> = rows.iter().map(|&i| s.unit_ids[i]).collect();
                    let arm_seed = derive_seed(seed, "arm", arm as u64);
                    let xt = x.select(Axis(0), &rows);
                    let model = self.fit_outcome(spec.learner(), xt.view(), &y, &vec![1.0; y.len()], &ids, arm_seed)?;
                    arm_pred.push(model.predict(xv)?);
                }
                Ok(arm_pred[0].iter().zip(&arm_pred[1]).map(|(a, b)| a - b).collect())
            }
            Method::Cf | Method::CfLc => {
                let centering = if spec.method() == Method::CfLc {
                    Centering::Supplied {
                        p_hat: self.nuisance(Learner::Forest, NuisanceKind::P)?.to_vec(),
                        mu_hat: self.nuisance(Learner::Forest, NuisanceKind::Mu)?.to_vec(),
                    }
                } else {
                    Centering::None
                };
                let params = self.config.forest.with_seed(derive_seed(self.seed, "causal-forest", 0));
                let model = fit_causal_forest(
                    s.data.x(),
                    &s.outcome,
                    &s.treatment,
                    &s.unit_ids,
                    &params,
                    &centering,
                )?;
                model.predict(self.validation.x())
            }
            _ => self.cross_fitted_effect(spec),
        }
    }
}

/// Cross-fitted nuisances for a sample on its own.
pub fn estimate_nuisances(
    sample: &Sample,
    learner: Learner,
    which: &[NuisanceKind],
    config: &LearnerConfig,
    seed: u64,
) -> Result<Nuisances> {
    let ctx = ReplicationContext::new(sample, &sample.data, config, seed)?;
    ctx.nuisances(learner, which)
}

/// IATE predictions of one estimator for the validation units.
pub fn estimate_iate(
    spec: &EstimatorSpec,
    train: &Sample,
    validation: &Dataset,
    config: &LearnerConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    ReplicationContext::new(train, validation, config, seed)?.estimate(spec)
}

/// Group means and overall mean of unit-level predictions.
pub fn aggregate(iate: &[f64], groups: &[usize], n_groups: usize) -> Result<(Vec<f64>, f64)> {
    if groups.len() != iate.len() {
        return Err(Error::DimensionMismatch { expected: iate.len(), got: groups.len() });
    }
    if iate.is_empty() {
        return Err(Error::InvalidArgument("cannot aggregate an empty prediction vector".into()));
    }
    let mut sums = vec![0.0; n_groups];
    let mut counts = vec![0usize; n_groups];
    for (&v, &g) in iate.iter().zip(groups) {
        if g >= n_groups {
            return Err(Error::InvalidArgument(format!("group label {g} out of range 0..{n_groups}")));
        }
        sums[g] += v;
        counts[g] += 1;
    }
    if let Some(g) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!("group {g} has no units")));
    }
    let gate = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let ate = iate.iter().sum::<f64>() / iate.len() as f64;
    Ok((gate, ate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::{ForestParams, LassoParams, Penalty};
    use crate::rng;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn config(n_trees: usize) -> LearnerConfig {
        LearnerConfig {
            forest: ForestParams { n_trees, ..ForestParams::default() },
            lasso: LassoParams { penalty: Penalty::Auto { n_lambda: 30, min_ratio: 1e-3 }, n_folds: 5, ..LassoParams::default() },
        }
    }

    /// `y = tau d + x1 + noise` with 50:50 assignment and three covariates.
    fn sample(n: usize, tau: f64, noise_sd: f64, seed: u64) -> Sample {
        let mut r = rng::stream(seed);
        let x = Array2::from_shape_fn((n, 3), |_| r.random::<f64>() * 2.0 - 1.0);
        let noise = Normal::new(0.0, noise_sd.max(1e-300)).unwrap();
        let d: Vec<f64> = (0..n).map(|_| if r.random::<f64>() < 0.5 { 1.0 } else { 0.0 }).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| tau * d[i] + x[[i, 0]] + if noise_sd > 0.0 { noise.sample(&mut r) } else { 0.0 })
            .collect();
        Sample::new(Dataset::from_continuous(x).unwrap(), d, y)
            .unwrap()
            .with_true_ite(vec![tau; n])
            .unwrap()
    }

    fn validation(n: usize, seed: u64) -> Dataset {
        let mut r = rng::stream(seed);
        Dataset::from_continuous(Array2::from_shape_fn((n, 3), |_| r.random::<f64>() * 2.0 - 1.0)).unwrap()
    }

    fn spec(id: &str) -> EstimatorSpec {
        id.parse().unwrap()
    }

    #[test]
    fn constant_outcome_nuisances() {
        let mut s = sample(200, 0.0, 0.0, 1);
        s.outcome = vec![5.0; 200];
        let cfg = config(20);
        let f = estimate_nuisances(&s, Learner::Forest, &[NuisanceKind::Mu], &cfg, 2).unwrap();
        assert!(f.mu_hat.unwrap().iter().all(|&v| v == 5.0));
        let l = estimate_nuisances(&s, Learner::Lasso, &[NuisanceKind::Mu], &cfg, 2).unwrap();
        assert!(l.mu_hat.unwrap().iter().all(|&v| (v - 5.0).abs() < 1e-6));
    }

    #[test]
    fn propensity_near_half_under_randomization() {
        let s = sample(2000, 1.0, 1.0, 3);
        let cfg = config(50);
        for learner in [Learner::Forest, Learner::Lasso] {
            let n = estimate_nuisances(&s, learner, &[NuisanceKind::P], &cfg, 4).unwrap();
            let p = n.p_hat.unwrap();
            let mean = p.iter().sum::<f64>() / p.len() as f64;
            assert!((0.45..=0.55).contains(&mean), "{learner:?}: {mean}");
        }
    }

    #[test]
    fn nuisance_provenance_is_out_of_half() {
        let s = sample(100, 1.0, 1.0, 5);
        let cfg = config(10);
        let n = estimate_nuisances(&s, Learner::Forest, &[NuisanceKind::P], &cfg, 6).unwrap();
        for i in 0..100 {
            assert_ne!(n.trained_on(i), n.fold_of[i]);
        }
        let sizes = [0, 1].map(|h| n.fold_of.iter().filter(|&&f| f == h).count());
        assert_eq!(sizes, [50, 50]);
    }

    #[test]
    fn empty_arm_in_half_is_reported() {
        let mut s = sample(40, 1.0, 1.0, 7);
        s.treatment = vec![0.0; 40];
        s.treatment[0] = 1.0;
        let cfg = config(5);
        let ctx = ReplicationContext::new(&s, &s.data, &cfg, 8).unwrap();
        let err = ctx.nuisances(Learner::Forest, &[NuisanceKind::Mu1]).unwrap_err();
        assert!(err.to_string().contains("increase the sample size"), "{err}");
    }

    #[test]
    fn cmr_forest_recovers_constant_effect() {
        let s = sample(2000, 2.0, 1.0, 9);
        let v = validation(500, 10);
        let iate = estimate_iate(&spec("cmr_forest"), &s, &v, &config(100), 11).unwrap();
        let mean = iate.iter().sum::<f64>() / iate.len() as f64;
        assert!((1.6..=2.4).contains(&mean), "{mean}");
    }

    #[test]
    fn infeasible_is_exact_under_zero_effect() {
        let s = sample(300, 0.0, 1.0, 12);
        let v = validation(50, 13);
        for id in ["infeasible_forest", "infeasible_lasso"] {
            let iate = estimate_iate(&spec(id), &s, &v, &config(20), 14).unwrap();
            assert!(iate.iter().all(|&t| t == 0.0), "{id}");
        }
        let mut no_truth = s.clone();
        no_truth.true_ite = None;
        assert!(estimate_iate(&spec("infeasible_forest"), &no_truth, &v, &config(5), 1).is_err());
    }

    #[test]
    fn oracle_nuisances_reduce_mom_dr_to_direct_regression() {
        let s = sample(400, 1.0, 1.0, 15);
        let v = validation(60, 16);
        let cfg = config(30);
        let n = s.n();
        let p = vec![0.5; n];
        let mu1: Vec<f64> = (0..n).map(|i| 1.0 + s.data.x()[[i, 0]]).collect();
        let mu0: Vec<f64> = (0..n).map(|i| s.data.x()[[i, 0]]).collect();
        let ctx = ReplicationContext::new(&s, &v, &cfg, 17).unwrap();
        ctx.inject_nuisance(Learner::Forest, NuisanceKind::P, p.clone()).unwrap();
        ctx.inject_nuisance(Learner::Forest, NuisanceKind::Mu1, mu1.clone()).unwrap();
        ctx.inject_nuisance(Learner::Forest, NuisanceKind::Mu0, mu0.clone()).unwrap();
        let est = ctx.estimate(&spec("mom_dr_forest")).unwrap();

        let y_star = transform_mom_dr(&s.outcome, &s.treatment, &p, &mu1, &mu0).unwrap().pseudo_outcome;
        let halves = ctx.cross_fit().halves();
        let mut direct = vec![0.0; v.n()];
        for (h, rows) in halves.iter().enumerate() {
            let sub = s.select_rows(rows);
            let y: Vec<f64> = rows.iter().map(|&i| y_star[i]).collect();
            let seed = derive_seed(ctx.cross_fit().half_seeds[h], "effect/mom_dr_forest", 0);
            let f = fit_regression_forest_with_ids(sub.data.x(), &y, &sub.unit_ids, &cfg.forest.with_seed(seed)).unwrap();
            for (o, p) in direct.iter_mut().zip(f.predict(v.x()).unwrap()) {
                *o += p;
            }
        }
        let direct: Vec<f64> = direct.iter().map(|&t| 0.5 * t).collect();
        assert_eq!(est, direct);
    }

    #[test]
    fn mirrored_halves_give_identical_estimates() {
        let s = sample(300, 1.0, 1.0, 18);
        let v = validation(40, 19);
        let cfg = config(20);
        for id in ["mom_ipw_forest", "mom_dr_lasso", "mcm_ea_lasso", "rlearn_lasso"] {
            let a = ReplicationContext::new(&s, &v, &cfg, 20).unwrap();
            let mirrored = a.cross_fit().mirrored();
            let b = ReplicationContext::new(&s, &v, &cfg, 20).unwrap().with_cross_fit(mirrored).unwrap();
            assert_eq!(a.estimate(&spec(id)).unwrap(), b.estimate(&spec(id)).unwrap(), "{id}");
        }
    }

    #[test]
    fn constant_centering_matches_plain_causal_forest() {
        let s = sample(300, 1.0, 1.0, 21);
        let v = validation(40, 22);
        let cfg = config(20);
        let ctx = ReplicationContext::new(&s, &v, &cfg, 23).unwrap();
        ctx.inject_nuisance(Learner::Forest, NuisanceKind::P, vec![0.5; 300]).unwrap();
        ctx.inject_nuisance(Learner::Forest, NuisanceKind::Mu, vec![0.0; 300]).unwrap();
        assert_eq!(ctx.estimate(&spec("cf_forest")).unwrap(), ctx.estimate(&spec("cf_lc_forest")).unwrap());
    }

    #[test]
    fn lasso_estimators_are_scale_equivariant() {
        let s = sample(300, 1.0, 1.0, 24);
        let mut s2 = s.clone();
        s2.outcome.iter_mut().for_each(|y| *y *= 2.0);
        let v = validation(30, 25);
        let cfg = config(5);
        for id in ["cmr_lasso", "mom_ipw_lasso", "mom_dr_lasso", "mcm_ea_lasso", "rlearn_lasso"] {
            let a = estimate_iate(&spec(id), &s, &v, &cfg, 26).unwrap();
            let b = estimate_iate(&spec(id), &s2, &v, &cfg, 26).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(2.0 * x, *y, "{id}");
            }
        }
    }

    #[test]
    fn every_estimator_runs() {
        let s = sample(400, 1.0, 1.0, 27);
        let v = validation(30, 28);
        let cfg = config(20);
        let ctx = ReplicationContext::new(&s, &v, &cfg, 29).unwrap();
        for spec in EstimatorSpec::all() {
            let iate = ctx.estimate(&spec).unwrap();
            assert_eq!(iate.len(), 30);
            assert!(iate.iter().all(|t| t.is_finite()), "{spec}");
        }
    }

    #[test]
    fn aggregate_examples() {
        let (gate, ate) = aggregate(&[1.0, 3.0, 5.0], &[0, 0, 1], 2).unwrap();
        assert_eq!(gate, [2.0, 5.0]);
        assert_eq!(ate, 3.0);
        let (gate, ate) = aggregate(&[0.7; 5], &[0, 1, 2, 1, 0], 3).unwrap();
        assert!(gate.iter().all(|&g| (g - 0.7).abs() < 1e-15));
        assert!((ate - 0.7).abs() < 1e-15);
        assert!(aggregate(&[1.0, 2.0], &[0, 0], 2).is_err());
        assert!(aggregate(&[1.0], &[3], 2).is_err());
    }

    #[test]
    fn size_weighted_gates_average_to_ate() {
        let mut r = rng::stream(30);
        let iate: Vec<f64> = (0..500).map(|_| r.random::<f64>() * 4.0 - 1.0).collect();
        let groups: Vec<usize> = (0..500).map(|i| i % 7).collect();
        let (gate, ate) = aggregate(&iate, &groups, 7).unwrap();
        let weighted: f64 = (0..7)
            .map(|g| gate[g] * groups.iter().filter(|&&x| x == g).count() as f64)
            .sum::<f64>()
            / 500.0;
        assert!((weighted - ate).abs() < 1e-12);
    }
}
