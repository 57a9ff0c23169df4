//! Effect estimators built on the base learners.

mod estimator;
mod spec;
pub mod transform;

pub use estimator::{aggregate, estimate_iate, estimate_nuisances, CrossFit, Nuisances, ReplicationContext};
pub use spec::{EstimatorSpec, Learner, LearnerConfig, Method, NuisanceKind};
pub use transform::{
    mcm_modified_problem, rl_modified_problem, transform_mcm, transform_mom_dr, transform_mom_ipw,
    transform_rlearn, CovariateMode, TransformedProblem,
};
