//! Molecule classifiers and scorers over Tanimoto similarity.

use himol_core::{canonical_smiles, ecfp4, parse, tanimoto, Fingerprint, MolGraph};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("cannot featurize molecule: {0}")]
    Featurize(String),
    #[error("classifier has no training data")]
    Untrained,
}

/// Binary activity predictor.
pub trait Classifier: Sync {
    fn predict(&self, graph: &MolGraph) -> Result<bool, ClassifierError>;
}

/// Real-valued activity score, higher meaning more likely active.
pub trait Scorer: Sync {
    fn score(&self, graph: &MolGraph) -> Result<f64, ClassifierError>;
}

/// Always predicts the same class.
pub struct Constant(pub bool);

impl Classifier for Constant {
    fn predict(&self, _: &MolGraph) -> Result<bool, ClassifierError> {
        Ok(self.0)
    }
}

/// k nearest neighbours by Tanimoto similarity on ECFP4 bits. Training pairs
/// with the same canonical form and label are kept once, so duplicating the
/// training set does not change any prediction.
pub struct Knn {
    k: usize,
    examples: Vec<(Fingerprint, bool)>,
}

fn featurize(graph: &MolGraph) -> Result<Fingerprint, ClassifierError> {
    ecfp4(graph).map_err(|e| ClassifierError::Featurize(e.to_string()))
}

impl Knn {
    /// Fit on `(smiles, label)` pairs; invalid SMILES are skipped.
    pub fn fit<'a, I>(k: usize, labeled: I) -> Knn
    where
        I: IntoIterator<Item = (&'a str, bool)>,
    {
        let mut seen = HashSet::new();
        let mut examples = Vec::new();
        for (smiles, label) in labeled {
            let Ok(form) = canonical_smiles(smiles) else { continue };
            if !seen.insert((form.clone(), label)) {
                continue;
            }
            if let Ok(fp) = parse(&form).map_err(|e| ClassifierError::Featurize(e.to_string())).and_then(|g| featurize(&g)) {
                examples.push((fp, label));
            }
        }
        Knn { k: k.max(1), examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// The k most similar examples as (similarity, label); ties in similarity
    /// keep training order.
    fn neighbors(&self, graph: &MolGraph) -> Result<Vec<(f64, bool)>, ClassifierError> {
        if self.examples.is_empty() {
            return Err(ClassifierError::Untrained);
        }
        let fp = featurize(graph)?;
        let mut sims: Vec<(f64, bool)> = self
            .examples
            .iter()
            .map(|(e, label)| (tanimoto(&fp, e).expect("same fingerprint shape"), *label))
            .collect();
        sims.sort_by(|a, b| b.0.total_cmp(&a.0));
        sims.truncate(self.k);
        Ok(sims)
    }
}

impl Classifier for Knn {
    /// Majority vote; an even split predicts inactive.
    fn predict(&self, graph: &MolGraph) -> Result<bool, ClassifierError> {
        let near = self.neighbors(graph)?;
        let active = near.iter().filter(|n| n.1).count();
        Ok(2 * active > near.len())
    }
}

impl Scorer for Knn {
    /// Similarity-weighted share of active neighbours. Falls back to the
    /// plain share when every neighbour has similarity zero.
    fn score(&self, graph: &MolGraph) -> Result<f64, ClassifierError> {
        let near = self.neighbors(graph)?;
        let total: f64 = near.iter().map(|n| n.0).sum();
        if total > 0.0 {
            Ok(near.iter().filter(|n| n.1).map(|n| n.0).sum::<f64>() / total)
        } else {
            Ok(near.iter().filter(|n| n.1).count() as f64 / near.len() as f64)
        }
    }
}

/// Percentage of valid molecules predicted active, with the number of
/// molecules the classifier failed on (excluded from the denominator).
pub fn active_ratio(gen: &[String], classifier: &dyn Classifier) -> (f64, usize) {
    let mut active = 0;
    let mut scored = 0;
    let mut failed = 0;
    for s in gen {
        let Ok(graph) = parse(s) else { continue };
        if canonical_smiles(s).is_err() {
            continue;
        }
        match classifier.predict(&graph) {
            Ok(p) => {
                scored += 1;
                active += p as usize;
            }
            Err(_) => failed += 1,
        }
    }
    let ratio = if scored == 0 { 0.0 } else { 100.0 * active as f64 / scored as f64 };
    (ratio, failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_classifiers() {
        let gen: Vec<String> = ["CCO", "c1ccccc1", "C1CC"].iter().map(|s| s.to_string()).collect();
        assert_eq!(active_ratio(&gen, &Constant(true)), (100.0, 0));
        assert_eq!(active_ratio(&gen, &Constant(false)), (0.0, 0));
    }

    #[test]
    fn duplicates_are_ignored() {
        let base = [("CCO", true), ("CCN", false), ("c1ccccc1", true)];
        let once = Knn::fit(5, base.iter().copied());
        let twice = Knn::fit(5, base.iter().chain(base.iter()).copied());
        assert_eq!(once.len(), twice.len());
        let g = parse("CCCO").unwrap();
        assert_eq!(Scorer::score(&once, &g).unwrap(), Scorer::score(&twice, &g).unwrap());
    }

    #[test]
    fn untrained_is_an_error() {
        let knn = Knn::fit(3, std::iter::empty());
        assert_eq!(Classifier::predict(&knn, &parse("C").unwrap()), Err(ClassifierError::Untrained));
    }
}
