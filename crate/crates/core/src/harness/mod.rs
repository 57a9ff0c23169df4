//! Study orchestration: replications in a worker pool, per-replication
//! checkpoint files, tensors and reports.
//!
//! Output directory:
//!
//! - `study.json`: fingerprint and configuration, written first
//! - `replications/rep_NNNNN.json`: predictions of one replication, checksummed
//! - `tensors/<estimator>_<level>.csv`, `tensors/truth_<level>.csv`
//! - `iate.csv`, `gate.csv`, `ate.csv`, `report.txt`
//! - `manifest.json`: seeds, failures and timings

mod cli;
mod config;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::causal::{aggregate, EstimatorSpec, ReplicationContext};
use crate::dgp::{build_population, draw_replication, load_population, true_targets, Population, Targets};
use crate::error::{Error, Result};
use crate::metrics::{flag_best, summarize, write_report_csv, write_text_report, Level, PerformanceRow, PredictionTensor};
use crate::rng::{derive_seed, RNG_FAMILY};

pub use cli::{cli_main, Cli};
pub use config::{SourceKind, StudyConfig, ENV_OUTPUT_DIR, ENV_PARALLELISM};

/// Test hook: returning an error makes that estimator fail in that replication.
pub type FaultHook = dyn Fn(usize, &EstimatorSpec) -> Option<Error> + Sync;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutcome {
    pub estimator: String,
    pub iate: Option<Vec<f64>>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub fingerprint: String,
    pub outcomes: Vec<EstimatorOutcome>,
    pub checksum: String,
}

impl ReplicationRecord {
    fn digest(&self) -> String {
        let body = serde_json::to_string(&(self.replication, self.seed, &self.fingerprint, &self.outcomes))
            .expect("record serializes");
        config::hex(&Sha256::digest(body.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub spec: EstimatorSpec,
    /// Replications that succeeded, in order; rows of the tensors.
    pub replications: Vec<usize>,
    pub iate: PredictionTensor,
    pub gate: PredictionTensor,
    pub ate: PredictionTensor,
    pub failures: Vec<(usize, String)>,
    /// Wall-clock seconds per replication, failed ones included.
    pub seconds: Vec<f64>,
}

impl EstimatorResult {
    pub fn tensor(&self, level: Level) -> &PredictionTensor {
        match level {
            Level::Iate => &self.iate,
            Level::Gate => &self.gate,
            Level::Ate => &self.ate,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub fingerprint: String,
    pub population: PopulationSummary,
    pub validation_ids: Vec<u64>,
    pub group_names: Vec<String>,
    pub targets: Targets,
    pub estimators: Vec<EstimatorResult>,
    pub started_unix: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub seed: u64,
    pub n_units: usize,
    pub n_pool: usize,
    pub n_validation: usize,
    pub n_groups: usize,
    pub n_trimmed: usize,
    pub n_censored: usize,
    pub intercept_shift: f64,
}

impl PopulationSummary {
    fn of(pop: &Population) -> Self {
        Self {
            seed: pop.seed,
            n_units: pop.n(),
            n_pool: pop.pool_rows.len(),
            n_validation: pop.validation_rows.len(),
            n_groups: pop.groups.n_groups(),
            n_trimmed: pop.n_trimmed,
            n_censored: pop.n_censored,
            intercept_shift: pop.intercept_shift,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StudyHeader {
    fingerprint: String,
    config: StudyConfig,
}

pub fn population_seed(config: &StudyConfig) -> u64 {
    derive_seed(config.master_seed, "population", 0)
}

pub fn replication_seed(config: &StudyConfig, r: usize) -> u64 {
    derive_seed(config.master_seed, "replication", r as u64)
}

/// Build the population the config describes, or load the saved one.
pub fn obtain_population(config: &StudyConfig) -> Result<Population> {
    match &config.population_dir {
        Some(dir) => load_population(dir),
        None => build_population(
            &config.population_source(),
            &config.ites(),
            &config.population_options(),
            population_seed(config),
        ),
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn rep_path(dir: &Path, r: usize) -> PathBuf {
    dir.join("replications").join(format!("rep_{r:05}.json"))
}

/// A stored replication that can be reused, if any.
fn load_checkpoint(path: &Path, r: usize, seed: u64, fingerprint: &str) -> Option<ReplicationRecord> {
    let text = std::fs::read_to_string(path).ok()?;
    let rec: ReplicationRecord = match serde_json::from_str(&text) {
        Ok(rec) => rec,
        Err(e) => {
            log::warn!("{}: unreadable checkpoint ({e}); recomputing", path.display());
            return None;
        }
    };
    if rec.replication != r || rec.seed != seed || rec.fingerprint != fingerprint || rec.checksum != rec.digest() {
        log::warn!("{}: checkpoint does not verify; recomputing", path.display());
        return None;
    }
    Some(rec)
}

fn check_or_write_header(dir: &Path, config: &StudyConfig, fingerprint: &str) -> Result<()> {
    let path = dir.join("study.json");
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let header: StudyHeader = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: cannot read existing study header: {e}", path.display())))?;
        if header.fingerprint != fingerprint {
            return Err(Error::Config(format!(
                "{} holds a study with a different configuration (fingerprint {}, expected {fingerprint}); \
                 use a fresh output_dir",
                dir.display(),
                header.fingerprint
            )));
        }
        return Ok(());
    }
    let header = StudyHeader { fingerprint: fingerprint.to_string(), config: config.clone() };
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    write_atomic(&path, (text + "\n").as_bytes())
}

fn run_replication(
    r: usize,
    config: &StudyConfig,
    specs: &[EstimatorSpec],
    pop: &Population,
    validation: &crate::data::Dataset,
    fingerprint: &str,
    hook: Option<&FaultHook>,
) -> Result<ReplicationRecord> {
    let seed = replication_seed(config, r);
    let sample = draw_replication(pop, config.n_s, derive_seed(seed, "draw", 0))?;
    let learners = config.learners();
    let ctx = ReplicationContext::new(&sample, validation, &learners, derive_seed(seed, "estimate", 0));
    let outcomes = specs
        .iter()
        .map(|spec| {
            let start = Instant::now();
            let result = match (&ctx, hook.and_then(|h| h(r, spec))) {
                (_, Some(e)) => Err(e),
                (Err(e), None) => Err(e.clone()),
                (Ok(ctx), None) => ctx.estimate(spec).and_then(|p| {
                    if p.iter().all(|v| v.is_finite()) {
                        Ok(p)
                    } else {
                        Err(Error::Estimation("non-finite prediction".into()))
                    }
                }),
            };
            let seconds = start.elapsed().as_secs_f64();
            let (iate, error) = match result {
                Ok(p) => (Some(p), None),
                Err(e) => {
                    log::warn!("replication {r}: {spec} failed: {e}");
                    (None, Some(e.to_string()))
                }
            };
            EstimatorOutcome { estimator: spec.id(), iate, error, seconds }
        })
        .collect();
    let mut rec = ReplicationRecord { replication: r, seed, fingerprint: fingerprint.to_string(), outcomes, checksum: String::new() };
    rec.checksum = rec.digest();
    Ok(rec)
}

pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    run_study_with_hook(config, None)
}

pub fn run_study_with_hook(config: &StudyConfig, hook: Option<&FaultHook>) -> Result<StudyResult> {
    config.validate()?;
    let started_unix = unix_now();
    let clock = Instant::now();
    let specs = config.estimator_specs()?;
    let fingerprint = config.fingerprint();
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir.join("replications")).map_err(|e| Error::io(dir, e))?;
    check_or_write_header(dir, config, &fingerprint)?;

    let pop = obtain_population(config)?;
    if config.n_s > pop.pool_rows.len() {
        return Err(Error::Config(format!(
            "n_s = {} exceeds the sampling pool of {} units",
            config.n_s,
            pop.pool_rows.len()
        )));
    }
    let targets = true_targets(&pop)?;
    let validation = pop.validation_data();
    log::info!(
        "population: {} units, {} in the pool, {} groups; running {} replications of {} estimators",
        pop.n(),
        pop.pool_rows.len(),
        pop.groups.n_groups(),
        config.n_replications,
        specs.len()
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.parallelism)))?;
    let records: Vec<ReplicationRecord> = pool.install(|| {
        (0..config.n_replications)
            .into_par_iter()
            .map(|r| {
                let path = rep_path(dir, r);
                let seed = replication_seed(config, r);
                if let Some(rec) = load_checkpoint(&path, r, seed, &fingerprint) {
                    log::debug!("replication {r}: reusing checkpoint");
                    return Ok(rec);
                }
                let rec = run_replication(r, config, &specs, &pop, &validation, &fingerprint, hook)?;
                let text = serde_json::to_string(&rec).expect("record serializes");
                write_atomic(&path, text.as_bytes())?;
                log::info!("replication {r} done");
                Ok(rec)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let labels = &pop.groups.labels;
    let n_groups = pop.groups.n_groups();
    let mut estimators = Vec::with_capacity(specs.len());
    for (e, spec) in specs.iter().enumerate() {
        let (mut reps, mut iate, mut gate, mut ate) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let (mut failures, mut seconds) = (Vec::new(), Vec::new());
        for rec in &records {
            let out = &rec.outcomes[e];
            seconds.push(out.seconds);
            match &out.iate {
                Some(p) => {
                    let (g, a) = aggregate(p, labels, n_groups)?;
                    reps.push(rec.replication);
                    iate.extend_from_slice(p);
                    gate.extend(g);
                    ate.push(a);
                }
                None => failures.push((rec.replication, out.error.clone().unwrap_or_default())),
            }
        }
        let r = reps.len();
        let tensor = |v: Vec<f64>, truth: &[f64]| {
            let shape = (r, truth.len());
            PredictionTensor::new(Array2::from_shape_vec(shape, v).expect("rows of equal length"), truth.to_vec())
        };
        estimators.push(EstimatorResult {
            spec: *spec,
            replications: reps,
            iate: tensor(iate, &targets.ite)?,
            gate: tensor(gate, &targets.gate)?,
            ate: tensor(ate, &[targets.ate])?,
            failures,
            seconds,
        });
    }

    Ok(StudyResult {
        config: config.clone(),
        fingerprint,
        population: PopulationSummary::of(&pop),
        validation_ids: pop.validation_rows.iter().map(|&i| pop.unit_ids[i]).collect(),
        group_names: pop.groups.names.clone(),
        targets,
        estimators,
        started_unix,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub replication: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorManifest {
    pub id: String,
    pub n_succeeded: usize,
    pub n_failed: usize,
    pub failures: Vec<FailureEntry>,
    pub mean_seconds: f64,
    pub seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub fingerprint: String,
    pub rng_family: String,
    pub version: String,
    pub master_seed: u64,
    pub replication_seeds: Vec<u64>,
    pub population: PopulationSummary,
    pub config: StudyConfig,
    pub estimators: Vec<EstimatorManifest>,
    pub started_unix: u64,
    pub wall_seconds: f64,
}

fn write_wide_csv(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e))?;
    w.write_record(&header).map_err(|e| Error::io(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn tensor_header(level: Level, result: &StudyResult) -> Vec<String> {
    let cols: Vec<String> = match level {
        Level::Iate => result.validation_ids.iter().map(|id| format!("u{id}")).collect(),
        Level::Gate => (0..result.group_names.len()).map(|g| format!("g{g}")).collect(),
        Level::Ate => vec!["ate".into()],
    };
    std::iter::once("replication".to_string()).chain(cols).collect()
}

/// Write tensors, manifest and the three report tables.
pub fn write_reports(result: &StudyResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let tdir = dir.join("tensors");
    std::fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
    for level in Level::ALL {
        let truth = match level {
            Level::Iate => result.targets.ite.clone(),
            Level::Gate => result.targets.gate.clone(),
            Level::Ate => vec![result.targets.ate],
        };
        let mut header = tensor_header(level, result);
        header[0] = "target".into();
        let row = std::iter::once("truth".to_string()).chain(truth.iter().map(f64::to_string)).collect();
        write_wide_csv(&tdir.join(format!("truth_{}.csv", level.as_str())), header, std::iter::once(row))?;
        for est in &result.estimators {
            let t = est.tensor(level);
            let rows = est.replications.iter().zip(t.values.rows()).map(|(r, row)| {
                std::iter::once(r.to_string()).chain(row.iter().map(f64::to_string)).collect()
            });
            let path = tdir.join(format!("{}_{}.csv", est.spec.id(), level.as_str()));
            write_wide_csv(&path, tensor_header(level, result), rows)?;
        }
    }

    let manifest = Manifest {
        fingerprint: result.fingerprint.clone(),
        rng_family: RNG_FAMILY.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: result.config.master_seed,
        replication_seeds: (0..result.config.n_replications).map(|r| replication_seed(&result.config, r)).collect(),
        population: result.population.clone(),
        config: result.config.clone(),
        estimators: result
            .estimators
            .iter()
            .map(|e| EstimatorManifest {
                id: e.spec.id(),
                n_succeeded: e.replications.len(),
                n_failed: e.failures.len(),
                failures: e
                    .failures
                    .iter()
                    .map(|(r, msg)| FailureEntry { replication: *r, error: msg.clone() })
                    .collect(),
                mean_seconds: e.seconds.iter().sum::<f64>() / e.seconds.len().max(1) as f64,
                seconds: e.seconds.clone(),
            })
            .collect(),
        started_unix: result.started_unix,
        wall_seconds: result.wall_seconds,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join("manifest.json"), (text + "\n").as_bytes())?;
    regenerate_reports(dir)
}

fn read_tensor(path: &Path) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    if !path.exists() {
        return Err(Error::Io { path: path.display().to_string(), msg: "file not found".into() });
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e))?;
    let (mut keys, mut rows) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let bad = |msg: String| Error::Parse { path: path.display().to_string(), line: i + 2, msg };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        keys.push(rec[0].parse().unwrap_or(0));
        let row = rec
            .iter()
            .skip(1)
            .map(|c| c.parse::<f64>().map_err(|_| bad(format!("cannot parse `{c}`"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((keys, rows))
}

/// Recompute the report tables from the tensors and manifest in `dir`.
pub fn regenerate_reports(dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let mpath = dir.join("manifest.json");
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: mpath.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let tdir = dir.join("tensors");
    let mut tables = Vec::new();
    for level in Level::ALL {
        let (_, truth) = read_tensor(&tdir.join(format!("truth_{}.csv", level.as_str())))?;
        let truth = truth.into_iter().next().unwrap_or_default();
        let mut rows = Vec::new();
        for est in &manifest.estimators {
            let (_, values) = read_tensor(&tdir.join(format!("{}_{}.csv", est.id, level.as_str())))?;
            let total = est.n_succeeded + est.n_failed;
            if values.len() < 2 {
                rows.push(PerformanceRow::unavailable(&est.id, values.len(), est.n_failed));
                continue;
            }
            let flat: Vec<f64> = values.iter().flatten().copied().collect();
            let arr = Array2::from_shape_vec((values.len(), truth.len()), flat)
                .map_err(|e| Error::Schema(format!("{}: ragged tensor: {e}", est.id)))?;
            let t = PredictionTensor::new(arr, truth.clone())?;
            let mut row = summarize(&est.id, &t, level, est.n_failed)?;
            debug_assert_eq!(row.n_replications + row.n_failed, total);
            row.n_replications = values.len();
            rows.push(row);
        }
        flag_best(&mut rows);
        write_report_csv(dir.join(format!("{}.csv", level.as_str())), level, &rows)?;
        tables.push((level, rows));
    }
    write_text_report(dir.join("report.txt"), &tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> StudyConfig {
        StudyConfig {
            n_population: 1500,
            n_validation: 300,
            n_s: 200,
            n_replications: 3,
            estimators: vec!["infeasible_lasso".into(), "cmr_forest".into()],
            n_trees: 10,
            lasso_n_lambda: 10,
            lasso_folds: 3,
            output_dir: dir.to_path_buf(),
            ..StudyConfig::default()
        }
    }

    #[test]
    fn study_writes_all_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let res = run_study(&cfg).unwrap();
        write_reports(&res, dir.path()).unwrap();
        for f in ["iate.csv", "gate.csv", "ate.csv", "report.txt", "manifest.json", "study.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert!(rep_path(dir.path(), 2).exists());
        assert_eq!(res.estimators[0].iate.n_replications(), 3);
        assert_eq!(res.estimators[1].gate.n_units(), res.group_names.len());
    }

    #[test]
    fn corrupt_checkpoint_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let a = run_study(&cfg).unwrap();
        let path = rep_path(dir.path(), 1);
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replacen("\"iate\":[", "\"iate\":[1e6,", 1)).unwrap();
        let b = run_study(&cfg).unwrap();
        for (x, y) in a.estimators.iter().zip(&b.estimators) {
            assert_eq!((&x.iate, &x.failures), (&y.iate, &y.failures));
        }
    }

    #[test]
    fn mismatched_fingerprint_refused() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        run_study(&cfg).unwrap();
        let other = StudyConfig { master_seed: 99, ..cfg };
        let err = run_study(&other).unwrap_err();
        assert!(err.to_string().contains("different configuration"), "{err}");
    }
}
