//! Polynomial and interaction expansion of a covariate set for the Lasso.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::Result;

pub const RARE_BINARY_SHARE: f64 = 0.01;
pub const MAX_ABS_CORRELATION: f64 = 0.99;

/// Product of base columns raised to exponents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub factors: Vec<(usize, u32)>,
}

impl Term {
    fn name(&self, names: &[String]) -> String {
        self.factors
            .iter()
            .map(|&(j, e)| if e == 1 { names[j].clone() } else { format!("{}^{e}", names[j]) })
            .collect::<Vec<_>>()
            .join("*")
    }

    fn evaluate(&self, data: &Dataset, row: usize) -> f64 {
        self.factors
            .iter()
            .map(|&(j, e)| data.x()[[row, j]].powi(e as i32))
            .product()
    }

    fn is_binary(&self, kinds: &[ColumnKind]) -> bool {
        self.factors.iter().all(|&(j, _)| kinds[j] == ColumnKind::Binary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    RareBinary { share: f64 },
    Constant,
    Correlated { with: String, corr: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedTerm {
    pub term: String,
    pub reason: DropReason,
}

/// Terms chosen on a training sample, re-applicable to other data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExpansion {
    pub base_columns: Vec<String>,
    pub terms: Vec<Term>,
    pub term_names: Vec<String>,
    pub drop_log: Vec<DroppedTerm>,
}

impl FeatureExpansion {
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Build the retained terms on `data`, which must share the base columns.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.names() != self.base_columns.as_slice() {
            return Err(crate::error::Error::Schema(format!(
                "expansion was built on columns {:?}, got {:?}",
                self.base_columns,
                data.names()
            )));
        }
        let mut x = Array2::zeros((data.n(), self.terms.len()));
        for (t, term) in self.terms.iter().enumerate() {
            for i in 0..data.n() {
                x[[i, t]] = term.evaluate(data, i);
            }
        }
        let kinds = self
            .terms
            .iter()
            .map(|t| if t.is_binary(data.kinds()) { ColumnKind::Binary } else { ColumnKind::Continuous })
            .collect();
        Dataset::new(x, kinds, self.term_names.clone())
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Base columns, pairwise interactions and powers 2 to 4 of continuous
/// columns, screened for rare binaries, constants and near-collinearity.
pub fn expand_features(data: &Dataset) -> Result<(Dataset, FeatureExpansion)> {
    let names = data.names();
    let kinds = data.kinds();
    let k = data.k();
    let mut drop_log = Vec::new();

    let mut base = Vec::new();
    for j in 0..k {
        let term = Term { factors: vec![(j, 1)] };
        let col: Vec<f64> = data.column(j).to_vec();
        match screen(&term, &col, kinds) {
            Some(reason) => drop_log.push(DroppedTerm { term: names[j].clone(), reason }),
            None => base.push(j),
        }
    }

    let mut candidates: Vec<Term> = base.iter().map(|&j| Term { factors: vec![(j, 1)] }).collect();
    for (a, &i) in base.iter().enumerate() {
        for &j in &base[a + 1..] {
            candidates.push(Term { factors: vec![(i, 1), (j, 1)] });
        }
    }
    for &j in &base {
        if kinds[j] == ColumnKind::Continuous {
            for e in 2..=4 {
                candidates.push(Term { factors: vec![(j, e)] });
            }
        }
    }

    let mut kept: Vec<Term> = Vec::new();
    let mut kept_std: Vec<Vec<f64>> = Vec::new();
    let mut kept_names = Vec::new();
    let n = data.n();
    for term in candidates {
        let name = term.name(names);
        let col: Vec<f64> = (0..n).map(|i| term.evaluate(data, i)).collect();
        if term.factors.len() > 1 || term.factors[0].1 > 1 {
            if let Some(reason) = screen(&term, &col, kinds) {
                log::debug!("dropping feature {name}: {reason:?}");
                drop_log.push(DroppedTerm { term: name, reason });
                continue;
            }
        }
        let (mean, sd) = mean_sd(&col);
        let std: Vec<f64> = col.iter().map(|v| (v - mean) / sd).collect();
        let clash = kept_std.iter().zip(&kept_names).find_map(|(other, other_name): (&Vec<f64>, &String)| {
            let corr = std.iter().zip(other).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            (corr.abs() > MAX_ABS_CORRELATION).then(|| (other_name.clone(), corr))
        });
        if let Some((with, corr)) = clash {
            log::debug!("dropping feature {name}: correlation {corr:.4} with {with}");
            drop_log.push(DroppedTerm { term: name, reason: DropReason::Correlated { with, corr } });
            continue;
        }
        kept.push(term);
        kept_std.push(std);
        kept_names.push(name);
    }

    let expansion = FeatureExpansion {
        base_columns: names.to_vec(),
        terms: kept,
        term_names: kept_names,
        drop_log,
    };
    let expanded = expansion.apply(data)?;
    Ok((expanded, expansion))
}

fn screen(term: &Term, col: &[f64], kinds: &[ColumnKind]) -> Option<DropReason> {
    let (mean, sd) = mean_sd(col);
    if term.is_binary(kinds) && !(RARE_BINARY_SHARE..=1.0 - RARE_BINARY_SHARE).contains(&mean) {
        return Some(DropReason::RareBinary { share: mean });
    }
    if !(sd > 0.0) {
        return Some(DropReason::Constant);
    }
    None
}
