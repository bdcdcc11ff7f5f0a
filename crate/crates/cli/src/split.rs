//! Scaffold split: whole scaffold groups go to one split, largest first.

use himol_core::{canonicalize, parse, scaffold};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("only {0} scaffold groups; a split needs at least 3")]
    TooFewScaffolds(usize),
    #[error("molecule {index} ({smiles:?}) is not valid")]
    InvalidMolecule { index: usize, smiles: String },
    #[error("split ratios must be positive and sum below 1")]
    BadRatios,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    /// Indices into the input, in input order.
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Canonical Bemis–Murcko scaffold; acyclic molecules share the empty
/// scaffold.
pub fn scaffold_key(smiles: &str) -> Option<String> {
    let g = parse(smiles).ok()?;
    let s = scaffold(&g).ok()?;
    if s.is_empty() {
        return Some(String::new());
    }
    canonicalize(&s).ok()
}

/// Groups sorted by descending size (ties in seeded random order) fill train
/// until it holds `train_ratio` of the molecules, then valid until
/// `valid_ratio`, then test. Valid and test are each kept at least one group.
pub fn scaffold_split(data: &[String], train_ratio: f64, valid_ratio: f64, seed: u64) -> Result<Split, SplitError> {
    if !(train_ratio > 0.0 && valid_ratio > 0.0 && train_ratio + valid_ratio < 1.0) {
        return Err(SplitError::BadRatios);
    }
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (index, smiles) in data.iter().enumerate() {
        let key = scaffold_key(smiles).ok_or_else(|| SplitError::InvalidMolecule {
            index,
            smiles: smiles.clone(),
        })?;
        groups.entry(key).or_default().push(index);
    }
    if groups.len() < 3 {
        return Err(SplitError::TooFewScaffolds(groups.len()));
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));
    let total = data.len() as f64;
    let mut split = Split::default();
    let count = groups.len();
    for (taken, group) in groups.into_iter().enumerate() {
        let left = count - taken;
        let target = if (split.train.len() as f64) < train_ratio * total && left > 2 {
            &mut split.train
        } else if (split.valid.len() as f64) < valid_ratio * total && left > 1 || split.valid.is_empty() {
            &mut split.valid
        } else {
            &mut split.test
        };
        target.extend(group);
    }
    for part in [&mut split.train, &mut split.valid, &mut split.test] {
        part.sort_unstable();
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn three_singletons_one_per_split() {
        let s = scaffold_split(&v(&["c1ccccc1", "C1CCCCC1", "c1ccncc1"]), 0.8, 0.1, 0).unwrap();
        assert_eq!([s.train.len(), s.valid.len(), s.test.len()], [1, 1, 1]);
    }

    #[test]
    fn one_group_is_too_few() {
        assert_eq!(
            scaffold_split(&v(&["CCO", "CCC", "CCN"]), 0.8, 0.1, 0),
            Err(SplitError::TooFewScaffolds(1))
        );
    }

    #[test]
    fn scaffolds_ignore_side_chains() {
        assert_eq!(scaffold_key("CCc1ccccc1"), scaffold_key("Oc1ccccc1"));
        assert_eq!(scaffold_key("CCCO"), Some(String::new()));
        assert_eq!(scaffold_key("C1CC"), None);
    }
}
