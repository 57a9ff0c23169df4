//! Cross-classification of units into groups for group-level effects.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};

/// `"col"` for a discrete column, or `"col:c1,c2"` to bin any column at
/// the given cut points (`x < c1`, `c1 <= x < c2`, `x >= c2`).
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub column: String,
    pub cuts: Option<Vec<f64>>,
}

impl std::str::FromStr for Factor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (column, cuts) = match s.split_once(':') {
            None => (s.trim(), None),
            Some((c, rest)) => {
                let cuts = rest
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Config(format!("bad cut points in factor `{s}`: {e}")))?;
                if cuts.is_empty() || cuts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config(format!("cut points in `{s}` must be increasing")));
                }
                (c.trim(), Some(cuts))
            }
        };
        if column.is_empty() {
            return Err(Error::Config(format!("empty column name in factor `{s}`")));
        }
        Ok(Self { column: column.to_string(), cuts })
    }
}

/// Groups are the cells of the `factors` cross-table; the cell where
/// `refine_column == refine_value` is split further by `refine_factors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupingScheme {
    pub factors: Vec<String>,
    pub refine_column: Option<String>,
    pub refine_value: f64,
    pub refine_factors: Vec<String>,
    /// Refined cells smaller than this are folded back into their parent cell.
    pub min_group_size: usize,
}

impl Default for GroupingScheme {
    fn default() -> Self {
        Self {
            factors: ["employability", "female", "foreigner", "qualification"].map(String::from).to_vec(),
            refine_column: Some("employability".into()),
            refine_value: 1.0,
            refine_factors: vec!["age:30,40".into(), "german".into()],
            min_group_size: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    /// Group index per unit.
    pub labels: Vec<usize>,
    pub names: Vec<String>,
    /// Cells that were dropped (empty) or merged, with the reason.
    pub log: Vec<String>,
}

impl Grouping {
    pub fn n_groups(&self) -> usize {
        self.names.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.names.len()];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

struct ResolvedFactor {
    name: String,
    col: usize,
    /// Level boundaries: distinct values for discrete columns, cuts otherwise.
    levels: Levels,
}

enum Levels {
    Values(Vec<f64>),
    Cuts(Vec<f64>),
}

impl ResolvedFactor {
    fn new(spec: &str, data: &Dataset) -> Result<Self> {
        let f: Factor = spec.parse()?;
        let col = data
            .column_index(&f.column)
            .ok_or_else(|| Error::Config(format!("grouping column `{}` not in the data", f.column)))?;
        let levels = match f.cuts {
            Some(cuts) => Levels::Cuts(cuts),
            None => {
                if data.kinds()[col] == ColumnKind::Continuous {
                    return Err(Error::Config(format!(
                        "grouping column `{}` is continuous; give cut points as `{}:c1,c2`",
                        f.column, f.column
                    )));
                }
                let mut v: Vec<f64> = data.column(col).to_vec();
                v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                v.dedup();
                Levels::Values(v)
            }
        };
        Ok(Self { name: f.column, col, levels })
    }

    fn n_levels(&self) -> usize {
        match &self.levels {
            Levels::Values(v) => v.len(),
            Levels::Cuts(c) => c.len() + 1,
        }
    }

    fn level(&self, x: f64) -> usize {
        match &self.levels {
            Levels::Values(v) => v.iter().position(|&a| a == x).expect("value seen at resolution"),
            Levels::Cuts(c) => c.iter().filter(|&&cut| x >= cut).count(),
        }
    }

    fn level_name(&self, l: usize) -> String {
        match &self.levels {
            Levels::Values(v) => format!("{}={}", self.name, v[l]),
            Levels::Cuts(c) => {
                let lo = if l == 0 { "-inf".to_string() } else { c[l - 1].to_string() };
                let hi = if l == c.len() { "inf".to_string() } else { c[l].to_string() };
                format!("{}=[{lo},{hi})", self.name)
            }
        }
    }
}

fn all_keys(factors: &[ResolvedFactor]) -> Vec<Vec<usize>> {
    let mut keys = vec![Vec::new()];
    for f in factors {
        keys = keys
            .into_iter()
            .flat_map(|k| {
                (0..f.n_levels()).map(move |l| {
                    let mut k = k.clone();
                    k.push(l);
                    k
                })
            })
            .collect();
    }
    keys
}

/// Assign every unit of `data` to a group.
pub fn assign_groups(data: &Dataset, scheme: &GroupingScheme) -> Result<Grouping> {
    if scheme.factors.is_empty() {
        return Err(Error::Config("grouping needs at least one factor".into()));
    }
    let base: Vec<ResolvedFactor> = scheme.factors.iter().map(|s| ResolvedFactor::new(s, data)).collect::<Result<_>>()?;
    let refine: Vec<ResolvedFactor> = scheme
        .refine_factors
        .iter()
        .map(|s| ResolvedFactor::new(s, data))
        .collect::<Result<_>>()?;
    // the refined cell is a level of one of the base factors
    let refine_at: Option<(usize, usize)> = match &scheme.refine_column {
        Some(name) if !refine.is_empty() => {
            let pos = base
                .iter()
                .position(|f| &f.name == name)
                .ok_or_else(|| Error::Config(format!("refinement column `{name}` is not a grouping factor")))?;
            let level = match &base[pos].levels {
                Levels::Values(v) => v.iter().position(|&a| a == scheme.refine_value),
                Levels::Cuts(_) => None,
            };
            level.map(|l| (pos, l))
        }
        _ => None,
    };

    // key: base levels, then refinement levels (empty outside the refined cell)
    let unit_key = |i: usize| -> Vec<usize> {
        let row = data.row(i);
        let mut key: Vec<usize> = base.iter().map(|f| f.level(row[f.col])).collect();
        if refine_at.is_some_and(|(pos, l)| key[pos] == l) {
            key.extend(refine.iter().map(|f| f.level(row[f.col])));
        }
        key
    };
    let mut members: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for i in 0..data.n() {
        members.entry(unit_key(i)).or_default().push(i);
    }

    let mut log = Vec::new();
    let name_of = |key: &[usize]| -> String {
        let mut parts: Vec<String> = base.iter().zip(key).map(|(f, &l)| f.level_name(l)).collect();
        parts.extend(refine.iter().zip(&key[base.len()..]).map(|(f, &l)| f.level_name(l)));
        parts.join(",")
    };

    // fold small refined cells into their parent
    if scheme.min_group_size > 0 {
        let small: Vec<Vec<usize>> = members
            .iter()
            .filter(|(k, v)| k.len() > base.len() && v.len() < scheme.min_group_size)
            .map(|(k, _)| k.clone())
            .collect();
        for key in small {
            let units = members.remove(&key).expect("present");
            log.push(format!("merged {} ({} units) into its parent cell", name_of(&key), units.len()));
            members.entry(key[..base.len()].to_vec()).or_default().extend(units);
        }
        for v in members.values_mut() {
            v.sort_unstable();
        }
    }

    for key in all_keys(&base) {
        let in_refined = refine_at.is_some_and(|(pos, l)| key[pos] == l);
        if in_refined {
            for sub in all_keys(&refine) {
                let mut full = key.clone();
                full.extend(sub);
                if !members.contains_key(&full) && !members.contains_key(&key) {
                    log.push(format!("dropped empty cell {}", name_of(&full)));
                }
            }
        } else if !members.contains_key(&key) {
            log.push(format!("dropped empty cell {}", name_of(&key)));
        }
    }
    for line in &log {
        log::info!("grouping: {line}");
    }

    let mut labels = vec![0; data.n()];
    let mut names = Vec::with_capacity(members.len());
    for (g, (key, units)) in members.iter().enumerate() {
        names.push(name_of(key));
        for &i in units {
            labels[i] = g;
        }
    }
    Ok(Grouping { labels, names, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::synthetic::{generate, SyntheticPopConfig};
    use ndarray::Array2;

    #[test]
    fn factor_syntax() {
        let f: Factor = "age:30,40".parse().unwrap();
        assert_eq!(f.column, "age");
        assert_eq!(f.cuts, Some(vec![30.0, 40.0]));
        let f: Factor = "female".parse().unwrap();
        assert_eq!(f.cuts, None);
        assert!("age:40,30".parse::<Factor>().is_err());
        assert!("age:x".parse::<Factor>().is_err());
    }

    #[test]
    fn single_binary_gives_two_groups() {
        let x = Array2::from_shape_vec((5, 1), vec![0.0, 1.0, 1.0, 0.0, 1.0]).unwrap();
        let d = Dataset::new(x, vec![ColumnKind::Binary], vec!["b".into()]).unwrap();
        let scheme = GroupingScheme {
            factors: vec!["b".into()],
            refine_column: None,
            refine_factors: vec![],
            ..GroupingScheme::default()
        };
        let g = assign_groups(&d, &scheme).unwrap();
        assert_eq!(g.n_groups(), 2);
        assert_eq!(g.labels, [0, 1, 1, 0, 1]);
        assert_eq!(g.sizes().iter().sum::<usize>(), 5);
    }

    #[test]
    fn continuous_without_cuts_is_rejected() {
        let x = Array2::from_shape_vec((3, 1), vec![0.5, 1.5, 2.5]).unwrap();
        let d = Dataset::from_continuous(x).unwrap();
        let scheme = GroupingScheme { factors: vec![d.names()[0].clone()], refine_column: None, ..GroupingScheme::default() };
        assert!(assign_groups(&d, &scheme).is_err());
    }

    #[test]
    fn default_scheme_gives_64_groups() {
        let cfg = SyntheticPopConfig { n_population: 90_000, ..SyntheticPopConfig::default() };
        let pop = generate(&cfg, 1).unwrap();
        let g = assign_groups(&pop.data, &GroupingScheme::default()).unwrap();
        assert_eq!(g.n_groups(), 64);
        assert_eq!(g.sizes().iter().sum::<usize>(), 90_000);
        assert!(g.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn small_refined_cells_merge_into_parent() {
        let cfg = SyntheticPopConfig { n_population: 2_000, ..SyntheticPopConfig::default() };
        let pop = generate(&cfg, 2).unwrap();
        let scheme = GroupingScheme { min_group_size: 40, ..GroupingScheme::default() };
        let g = assign_groups(&pop.data, &scheme).unwrap();
        assert!(g.log.iter().any(|l| l.starts_with("merged")));
        assert_eq!(g.sizes().iter().sum::<usize>(), 2_000);
        assert!(g.n_groups() < 64);
    }
}
