//! Population directory layout:
//!
//! - `covariates.csv`: one row per population unit, header = column names
//! - `schema.csv`: `name,kind` per column
//! - `outcomes.csv`: `unit_id,y0,ite,p_hlm,p_full,validation`
//! - `groups.csv`: `unit_id,group` for the validation units
//! - `meta.json`: seed, RNG family, effect spec, options and build log
//!
//! Floats are written in shortest round-trip form, so loading reproduces
//! the population bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Grouping, ItesSpec, Population, PopulationOptions};
use crate::data::{load_csv, write_csv, Schema};
use crate::error::{Error, Result};
use crate::rng::RNG_FAMILY;

#[derive(Serialize, Deserialize)]
struct Meta {
    rng_family: String,
    seed: u64,
    ites: ItesSpec,
    options: PopulationOptions,
    intercept_shift: f64,
    n_trimmed: usize,
    n_censored: usize,
    n_clipped: usize,
    group_names: Vec<String>,
    group_log: Vec<String>,
}

pub fn save_population(pop: &Population, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(dir.join("covariates.csv"), &pop.data)?;
    pop.data.schema().save(dir.join("schema.csv"))?;

    let path = dir.join("outcomes.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, e))?;
    let err = |e: csv::Error| Error::io(&path, e);
    w.write_record(["unit_id", "y0", "ite", "p_hlm", "p_full", "validation"]).map_err(err)?;
    let mut is_val = vec![false; pop.n()];
    for &i in &pop.validation_rows {
        is_val[i] = true;
    }
    for i in 0..pop.n() {
        w.write_record([
            pop.unit_ids[i].to_string(),
            pop.y0[i].to_string(),
            pop.ite[i].to_string(),
            pop.p_hlm[i].to_string(),
            pop.p_full[i].to_string(),
            (is_val[i] as u8).to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("groups.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, e))?;
    let err = |e: csv::Error| Error::io(&path, e);
    w.write_record(["unit_id", "group"]).map_err(err)?;
    for (k, &i) in pop.validation_rows.iter().enumerate() {
        w.write_record([pop.unit_ids[i].to_string(), pop.groups.labels[k].to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let meta = Meta {
        rng_family: RNG_FAMILY.to_string(),
        seed: pop.seed,
        ites: pop.ites.clone(),
        options: pop.options.clone(),
        intercept_shift: pop.intercept_shift,
        n_trimmed: pop.n_trimmed,
        n_censored: pop.n_censored,
        n_clipped: pop.n_clipped,
        group_names: pop.groups.names.clone(),
        group_log: pop.groups.log.clone(),
    };
    let path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::io(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn parse<T: std::str::FromStr>(path: &Path, line: usize, column: &str, cell: &str) -> Result<T> {
    cell.trim().parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line,
        msg: format!("column `{column}`: cannot parse `{cell}`"),
    })
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    if !path.exists() {
        return Err(Error::Io { path: path.display().to_string(), msg: "file not found".into() });
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e))?;
    let got: Vec<String> = r.headers().map_err(|e| Error::io(path, e))?.iter().map(String::from).collect();
    if got != header {
        return Err(Error::Schema(format!("{}: expected header {header:?}, got {got:?}", path.display())));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            rec.map_err(|e| Error::Parse { path: path.display().to_string(), line: i + 2, msg: e.to_string() })
        })
        .collect()
}

pub fn load_population(dir: impl AsRef<Path>) -> Result<Population> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::Io { path: dir.display().to_string(), msg: "population directory not found".into() });
    }
    let meta_path = dir.join("meta.json");
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: meta_path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    if meta.rng_family != RNG_FAMILY {
        return Err(Error::Schema(format!(
            "population was built with RNG `{}`, this build uses `{RNG_FAMILY}`",
            meta.rng_family
        )));
    }
    let schema = Schema::load(dir.join("schema.csv"))?;
    let data = load_csv(dir.join("covariates.csv"), &schema)?;

    let path = dir.join("outcomes.csv");
    let rows = read_rows(&path, &["unit_id", "y0", "ite", "p_hlm", "p_full", "validation"])?;
    if rows.len() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), got: rows.len() });
    }
    let n = rows.len();
    let (mut unit_ids, mut y0, mut ite, mut p_hlm, mut p_full) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut validation_rows, mut pool_rows) = (Vec::new(), Vec::new());
    for (i, rec) in rows.iter().enumerate() {
        let line = i + 2;
        if rec.len() != 6 {
            return Err(Error::Parse { path: path.display().to_string(), line, msg: "expected 6 cells".into() });
        }
        unit_ids.push(parse::<u64>(&path, line, "unit_id", &rec[0])?);
        y0.push(parse::<f64>(&path, line, "y0", &rec[1])?);
        ite.push(parse::<f64>(&path, line, "ite", &rec[2])?);
        p_hlm.push(parse::<f64>(&path, line, "p_hlm", &rec[3])?);
        p_full.push(parse::<f64>(&path, line, "p_full", &rec[4])?);
        match parse::<u8>(&path, line, "validation", &rec[5])? {
            0 => pool_rows.push(i),
            1 => validation_rows.push(i),
            v => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line,
                    msg: format!("validation flag must be 0 or 1, got {v}"),
                })
            }
        }
    }

    let path = dir.join("groups.csv");
    let rows = read_rows(&path, &["unit_id", "group"])?;
    if rows.len() != validation_rows.len() {
        return Err(Error::DimensionMismatch { expected: validation_rows.len(), got: rows.len() });
    }
    let mut labels = Vec::with_capacity(rows.len());
    for (k, rec) in rows.iter().enumerate() {
        let line = k + 2;
        let id: u64 = parse(&path, line, "unit_id", &rec[0])?;
        if id != unit_ids[validation_rows[k]] {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                msg: format!("unit {id} is not the next validation unit"),
            });
        }
        let g: usize = parse(&path, line, "group", &rec[1])?;
        if g >= meta.group_names.len() {
            return Err(Error::Parse { path: path.display().to_string(), line, msg: format!("unknown group {g}") });
        }
        labels.push(g);
    }

    Ok(Population {
        data,
        unit_ids,
        y0,
        ite,
        p_hlm,
        p_full,
        validation_rows,
        pool_rows,
        groups: Grouping { labels, names: meta.group_names, log: meta.group_log },
        ites: meta.ites,
        options: meta.options,
        seed: meta.seed,
        intercept_shift: meta.intercept_shift,
        n_trimmed: meta.n_trimmed,
        n_censored: meta.n_censored,
        n_clipped: meta.n_clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{build_population, PopulationSource, SyntheticPopConfig};

    #[test]
    fn round_trip_is_exact() {
        let source = PopulationSource::Synthetic(SyntheticPopConfig { n_population: 3000, ..SyntheticPopConfig::default() });
        let options = PopulationOptions { n_validation: 600, ..PopulationOptions::default() };
        let pop = build_population(&source, &ItesSpec::default(), &options, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_population(&pop, dir.path()).unwrap();
        let back = load_population(dir.path()).unwrap();
        assert_eq!(back, pop);
    }

    #[test]
    fn missing_directory_names_the_path() {
        let err = load_population("/nonexistent/pop").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/pop"));
    }
}
