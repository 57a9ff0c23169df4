use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::causal::{EstimatorSpec, LearnerConfig};
use crate::dgp::{
    Assignment, CsvSource, GroupingScheme, ItesSpec, Noise, PopulationOptions, PopulationSource, SyntheticPopConfig,
};
use crate::error::{Error, Result};
use crate::ml::{ForestParams, LassoParams, Penalty};

pub const ENV_OUTPUT_DIR: &str = "HETSIM_OUTPUT_DIR";
pub const ENV_PARALLELISM: &str = "HETSIM_PARALLELISM";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Synthetic,
    Csv,
}

/// Study configuration, read from a flat TOML file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    /// Load a population saved by `build-pop` instead of building one.
    pub population_dir: Option<PathBuf>,
    pub population_source: SourceKind,
    pub csv_path: Option<PathBuf>,
    pub csv_schema: Option<PathBuf>,
    pub y0_column: String,
    pub treatment_column: String,
    pub n_population: usize,
    pub k_continuous: usize,
    pub k_binary: usize,

    pub alpha: f64,
    pub noise: Noise,
    pub assignment: Assignment,
    pub censoring: bool,
    pub y_max: u32,

    pub n_validation: usize,
    pub target_share: f64,
    pub trim_low: f64,
    pub trim_high: f64,
    pub min_group_size: usize,

    pub n_s: usize,
    pub n_replications: usize,
    /// Estimator ids, or `["all"]`.
    pub estimators: Vec<String>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub parallelism: usize,

    pub n_trees: usize,
    /// Defaults to `min(70, number of covariates)` when absent.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub honest_build: f64,
    pub honest_estimate: f64,
    pub lasso_folds: usize,
    pub lasso_n_lambda: usize,
    pub lasso_min_ratio: f64,
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let syn = SyntheticPopConfig::default();
        let ites = ItesSpec::default();
        let opts = PopulationOptions::default();
        let forest = ForestParams::default();
        let lasso = LassoParams::default();
        Self {
            population_dir: None,
            population_source: SourceKind::Synthetic,
            csv_path: None,
            csv_schema: None,
            y0_column: "y0".into(),
            treatment_column: "treatment".into(),
            n_population: syn.n_population,
            k_continuous: syn.k_continuous,
            k_binary: syn.k_binary,
            alpha: ites.alpha,
            noise: ites.noise,
            assignment: ites.assignment,
            censoring: ites.censoring,
            y_max: ites.y_max,
            n_validation: opts.n_validation,
            target_share: opts.target_share,
            trim_low: opts.trim_low,
            trim_high: opts.trim_high,
            min_group_size: 0,
            n_s: 1000,
            n_replications: 2000,
            estimators: vec!["all".into()],
            master_seed: 1,
            output_dir: PathBuf::from("results"),
            parallelism: 1,
            n_trees: forest.n_trees,
            mtry: None,
            min_leaf: forest.min_leaf,
            honest_build: forest.honest_fractions.0,
            honest_estimate: forest.honest_fractions.1,
            lasso_folds: lasso.n_folds,
            lasso_n_lambda: 100,
            lasso_min_ratio: 1e-3,
            lasso_tol: lasso.tol,
            lasso_max_iter: lasso.max_iter,
        }
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Read a config file and apply the environment overrides.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(dir) = std::env::var(ENV_OUTPUT_DIR) {
            if !dir.is_empty() {
                self.output_dir = PathBuf::from(dir);
            }
        }
        if let Ok(p) = std::env::var(ENV_PARALLELISM) {
            self.parallelism = p
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{ENV_PARALLELISM} must be a positive integer, got `{p}`")))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_replications < 2 {
            return bad(format!("n_replications must be at least 2, got {}", self.n_replications));
        }
        if self.n_s < 4 {
            return bad(format!("n_s must be at least 4, got {}", self.n_s));
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if self.population_dir.is_none() {
            if self.population_source == SourceKind::Csv && (self.csv_path.is_none() || self.csv_schema.is_none()) {
                return bad("population_source = \"csv\" needs csv_path and csv_schema".into());
            }
            if self.population_source == SourceKind::Synthetic && self.n_s + self.n_validation > self.n_population {
                return bad(format!(
                    "n_s + n_validation = {} exceeds n_population = {}",
                    self.n_s + self.n_validation,
                    self.n_population
                ));
            }
            self.ites().validate()?;
            self.population_options().validate()?;
        }
        if !(self.honest_build > 0.0 && self.honest_estimate > 0.0 && self.honest_build + self.honest_estimate <= 1.0) {
            return bad("honest_build and honest_estimate must be positive with a sum of at most 1".into());
        }
        if self.lasso_folds < 2 {
            return bad("lasso_folds must be at least 2".into());
        }
        self.estimator_specs()?;
        Ok(())
    }

    pub fn estimator_specs(&self) -> Result<Vec<EstimatorSpec>> {
        if self.estimators.iter().any(|e| e == "all") {
            return Ok(EstimatorSpec::all());
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        let mut out: Vec<EstimatorSpec> = Vec::new();
        for id in &self.estimators {
            let spec: EstimatorSpec = id.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
            if out.contains(&spec) {
                return Err(Error::Config(format!("estimator `{id}` listed twice")));
            }
            out.push(spec);
        }
        Ok(out)
    }

    pub fn ites(&self) -> ItesSpec {
        ItesSpec {
            alpha: self.alpha,
            noise: self.noise,
            assignment: self.assignment,
            y_max: self.y_max,
            censoring: self.censoring,
        }
    }

    pub fn population_options(&self) -> PopulationOptions {
        PopulationOptions {
            n_validation: self.n_validation,
            target_share: self.target_share,
            trim_low: self.trim_low,
            trim_high: self.trim_high,
            grouping: GroupingScheme { min_group_size: self.min_group_size, ..GroupingScheme::default() },
        }
    }

    pub fn population_source(&self) -> PopulationSource {
        match self.population_source {
            SourceKind::Synthetic => PopulationSource::Synthetic(SyntheticPopConfig {
                n_population: self.n_population,
                k_continuous: self.k_continuous,
                k_binary: self.k_binary,
                y_max: self.y_max,
                ..SyntheticPopConfig::default()
            }),
            SourceKind::Csv => PopulationSource::Csv(CsvSource {
                path: self.csv_path.clone().unwrap_or_default(),
                schema: self.csv_schema.clone().unwrap_or_default(),
                y0_column: self.y0_column.clone(),
                treatment_column: self.treatment_column.clone(),
            }),
        }
    }

    pub fn learners(&self) -> LearnerConfig {
        LearnerConfig {
            forest: ForestParams {
                n_trees: self.n_trees,
                mtry: self.mtry,
                min_leaf: self.min_leaf,
                honest_fractions: (self.honest_build, self.honest_estimate, 1.0 - self.honest_build - self.honest_estimate),
                seed: 0,
            },
            lasso: LassoParams {
                penalty: Penalty::Auto { n_lambda: self.lasso_n_lambda, min_ratio: self.lasso_min_ratio },
                n_folds: self.lasso_folds,
                max_iter: self.lasso_max_iter,
                tol: self.lasso_tol,
                ..LassoParams::default()
            },
        }
    }

    /// Hash of every setting that affects results; output location and
    /// worker count are excluded.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.parallelism = 1;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_study_design() {
        let c = StudyConfig::from_toml("").unwrap();
        assert_eq!(c, StudyConfig::default());
        assert_eq!((c.n_trees, c.n_validation, c.lasso_folds), (1000, 10_000, 10));
        assert_eq!((c.trim_low, c.trim_high, c.target_share), (0.05, 0.95, 0.5));
        assert_eq!(c.estimator_specs().unwrap().len(), 13);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(StudyConfig::from_toml("n_trees = 5\nbogus = 1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn enum_values_parse() {
        let c = StudyConfig::from_toml("noise = \"none\"\nassignment = \"random_half\"\nestimators = [\"cf_forest\"]\n")
            .unwrap();
        assert_eq!(c.noise, Noise::None);
        assert_eq!(c.assignment, Assignment::RandomHalf);
        assert_eq!(c.estimator_specs().unwrap()[0].id(), "cf_forest");
    }

    #[test]
    fn invalid_settings() {
        let c = StudyConfig { n_replications: 1, ..StudyConfig::default() };
        assert!(c.validate().is_err());
        let c = StudyConfig { estimators: vec!["cf_lasso".into()], ..StudyConfig::default() };
        assert!(c.validate().is_err());
        let c = StudyConfig { n_s: 85_000, ..StudyConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn fingerprint_ignores_location_and_workers() {
        let a = StudyConfig::default();
        let b = StudyConfig { output_dir: "elsewhere".into(), parallelism: 8, ..a.clone() };
        let c = StudyConfig { master_seed: 2, ..a.clone() };
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn toml_round_trip() {
        let c = StudyConfig { mtry: Some(5), alpha: 8.0, ..StudyConfig::default() };
        assert_eq!(StudyConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}
