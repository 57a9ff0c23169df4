//! Base learners.

pub mod features;
pub mod forest;
pub mod lasso;

pub use features::{expand_features, FeatureExpansion};
pub use forest::{
    fit_causal_forest, fit_probability_forest, fit_regression_forest, CausalForestModel, Centering,
    ForestModel, ForestParams,
};
pub use lasso::{fit_lasso, fit_logistic_lasso, Family, LassoModel, LassoParams, Penalty};
