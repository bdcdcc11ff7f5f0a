//! Low-shot augmentation: ROC-AUC of a k-NN scorer trained on a few labeled
//! molecules, with and without extra molecules generated per class.

use crate::classifier::{Knn, Scorer};
use himol_core::hash::hash_words;
use himol_core::{canonical_smiles, parse};
use himol_model::inversion::train;
use himol_model::{sample, Backbone, InversionConfig, SamplerConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LowShotError {
    #[error("pool has {have} molecules of class {class}, {need} shots requested")]
    InsufficientPool { class: bool, have: usize, need: usize },
    #[error("test molecule {0} also appears in the pool")]
    TestOverlap(String),
    #[error("ROC-AUC needs both classes among the labels")]
    SingleClass,
    #[error("{0} scores for {1} labels")]
    LengthMismatch(usize, usize),
    #[error("every seed failed")]
    NoSeeds,
}

/// Mann–Whitney ROC-AUC with half credit for tied scores.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, LowShotError> {
    if scores.len() != labels.len() {
        return Err(LowShotError::LengthMismatch(scores.len(), labels.len()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average ranks over tie groups, 1-based
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(LowShotError::SingleClass);
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// Mean and two-sided 95% Student-t interval. Fewer than two values give an
/// unbounded interval.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NEG_INFINITY, f64::INFINITY);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NEG_INFINITY, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom").inverse_cdf(0.975);
    let half = t * (var / n as f64).sqrt();
    (mean, mean - half, mean + half)
}

/// Produces extra molecules for one class from its shots.
pub trait Augmenter: Sync {
    fn augment(&self, shots: &[String], label: bool, count: usize, seed: u64) -> Result<Vec<String>, String>;
}

/// Returns the shots themselves, repeated up to `count`.
pub struct CopyAugmenter;

impl Augmenter for CopyAugmenter {
    fn augment(&self, shots: &[String], _: bool, count: usize, _: u64) -> Result<Vec<String>, String> {
        Ok(shots.iter().cycle().take(count.min(shots.len() * 3)).cloned().collect())
    }
}

/// Draws real same-class molecules that are not among the shots.
pub struct OracleAugmenter {
    pub pool: Vec<(String, bool)>,
}

impl Augmenter for OracleAugmenter {
    fn augment(&self, shots: &[String], label: bool, count: usize, seed: u64) -> Result<Vec<String>, String> {
        let taken: HashSet<&String> = shots.iter().collect();
        let mut candidates: Vec<&String> = self
            .pool
            .iter()
            .filter(|(s, l)| *l == label && !taken.contains(s))
            .map(|(s, _)| s)
            .collect();
        candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(candidates.into_iter().take(count).cloned().collect())
    }
}

/// Hierarchical inversion on the shots followed by strict interpolation
/// sampling.
pub struct HiMolAugmenter<'a> {
    pub backbone: &'a Backbone,
    pub inversion: InversionConfig,
    pub sampler: SamplerConfig,
}

impl Augmenter for HiMolAugmenter<'_> {
    fn augment(&self, shots: &[String], _: bool, count: usize, seed: u64) -> Result<Vec<String>, String> {
        let cfg = InversionConfig {
            k: self.inversion.k.min(shots.len().saturating_sub(1)).max(1),
            seed,
            ..self.inversion.clone()
        };
        let (state, _) = train(shots, self.backbone, &cfg).map_err(|e| e.to_string())?;
        let sampler = SamplerConfig {
            max_samples: count,
            strict: true,
            seed,
            ..self.sampler.clone()
        };
        let batch = sample(&state, self.backbone, shots, &sampler).map_err(|e| e.to_string())?;
        Ok(batch.records.iter().map(|r| r.final_smiles().to_string()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowShotTask {
    pub shots: usize,
    pub pool: Vec<(String, bool)>,
    pub test: Vec<(String, bool)>,
    pub seeds: Vec<u64>,
    /// Generated molecules per shot.
    pub multiplier: usize,
    /// Neighbours used by the scorer.
    pub k: usize,
}

impl LowShotTask {
    pub fn new(shots: usize, pool: Vec<(String, bool)>, test: Vec<(String, bool)>) -> LowShotTask {
        LowShotTask {
            shots,
            pool,
            test,
            seeds: (0..20).collect(),
            multiplier: 3,
            k: 5,
        }
    }

    fn check(&self) -> Result<(), LowShotError> {
        for class in [false, true] {
            let have = self.pool.iter().filter(|(_, l)| *l == class).count();
            if have < self.shots || have == 0 {
                return Err(LowShotError::InsufficientPool {
                    class,
                    have,
                    need: self.shots,
                });
            }
        }
        let pool: HashSet<String> = self.pool.iter().filter_map(|(s, _)| canonical_smiles(s).ok()).collect();
        for (s, _) in &self.test {
            if canonical_smiles(s).map(|f| pool.contains(&f)).unwrap_or(false) {
                return Err(LowShotError::TestOverlap(s.clone()));
            }
        }
        let labels: Vec<bool> = self.test.iter().map(|t| t.1).collect();
        if !labels.contains(&true) || !labels.contains(&false) {
            return Err(LowShotError::SingleClass);
        }
        Ok(())
    }
}

const ACTIVE_CORES: &[&str] = &["c1ccccc1", "c1ccncc1", "c1ccsc1", "C1CC1"];
const INACTIVE_CORES: &[&str] = &["C1CCCCC1", "C1CCNCC1", "C1CCOC1", "c1ccoc1"];
const PREFIXES: &[&str] = &["", "C", "CC", "OC", "NC(=O)", "FC", "C=CC"];
const SUFFIXES: &[&str] = &["", "C", "O", "CC", "C(=O)O", "N"];

/// Labeled molecules built from ring cores with short substituents; four
/// cores per class, so a few shots rarely cover every core. Returns a task
/// with `test_per_class` test molecules per class and the rest as the pool.
pub fn separable_task(shots: usize, test_per_class: usize, seed: u64) -> LowShotTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = Vec::new();
    let mut test = Vec::new();
    for (label, cores) in [(true, ACTIVE_CORES), (false, INACTIVE_CORES)] {
        let mut seen = HashSet::new();
        let mut members = Vec::new();
        for core in cores {
            for p in PREFIXES {
                for s in SUFFIXES {
                    let form = canonical_smiles(&format!("{p}{core}{s}")).expect("core with substituents is valid");
                    if seen.insert(form.clone()) {
                        members.push(form);
                    }
                }
            }
        }
        members.shuffle(&mut rng);
        let cut = test_per_class.min(members.len());
        test.extend(members[..cut].iter().map(|s| (s.clone(), label)));
        pool.extend(members[cut..].iter().map(|s| (s.clone(), label)));
    }
    LowShotTask::new(shots, pool, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub auc_shots: f64,
    pub auc_augmented: f64,
    pub delta: f64,
    pub generated: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowShotReport {
    pub outcomes: Vec<SeedOutcome>,
    /// Seeds whose augmentation failed, with the reason.
    pub skipped: Vec<(u64, String)>,
    pub mean_delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn test_auc(model: &Knn, test: &[(String, bool)]) -> Result<f64, LowShotError> {
    let mut scores = Vec::with_capacity(test.len());
    let mut labels = Vec::with_capacity(test.len());
    for (s, l) in test {
        // unparsable test molecules are left out of the ranking
        let Ok(g) = parse(s) else { continue };
        if let Ok(score) = model.score(&g) {
            scores.push(score);
            labels.push(*l);
        }
    }
    roc_auc(&scores, &labels)
}

fn run_seed(task: &LowShotTask, augmenter: &dyn Augmenter, seed: u64) -> Result<SeedOutcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shots: Vec<(String, bool)> = Vec::new();
    let mut generated: Vec<(String, bool)> = Vec::new();
    let mut counts = [0; 2];
    for class in [false, true] {
        let mut members: Vec<&String> = task.pool.iter().filter(|(_, l)| *l == class).map(|(s, _)| s).collect();
        members.shuffle(&mut rng);
        let picked: Vec<String> = members.into_iter().take(task.shots).cloned().collect();
        let extra = augmenter.augment(&picked, class, task.multiplier * task.shots, hash_words([seed, class as u64]))?;
        counts[class as usize] = extra.len();
        shots.extend(picked.into_iter().map(|s| (s, class)));
        generated.extend(extra.into_iter().map(|s| (s, class)));
    }
    let base = Knn::fit(task.k, shots.iter().map(|(s, l)| (s.as_str(), *l)));
    let augmented = Knn::fit(task.k, shots.iter().chain(&generated).map(|(s, l)| (s.as_str(), *l)));
    let auc_shots = test_auc(&base, &task.test).map_err(|e| e.to_string())?;
    let auc_augmented = test_auc(&augmented, &task.test).map_err(|e| e.to_string())?;
    Ok(SeedOutcome {
        seed,
        auc_shots,
        auc_augmented,
        delta: auc_augmented - auc_shots,
        generated: counts,
    })
}

/// ΔROC-AUC per seed and its mean with a 95% interval. Seeds whose
/// augmentation fails are skipped and listed.
pub fn run_augmentation(task: &LowShotTask, augmenter: &dyn Augmenter) -> Result<LowShotReport, LowShotError> {
    task.check()?;
    let results: Vec<(u64, Result<SeedOutcome, String>)> =
        task.seeds.par_iter().map(|&seed| (seed, run_seed(task, augmenter, seed))).collect();
    let mut outcomes = Vec::new();
    let mut skipped = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => skipped.push((seed, e)),
        }
    }
    if outcomes.is_empty() {
        return Err(LowShotError::NoSeeds);
    }
    let deltas: Vec<f64> = outcomes.iter().map(|o| o.delta).collect();
    let (mean_delta, ci_low, ci_high) = mean_ci95(&deltas);
    Ok(LowShotReport {
        outcomes,
        skipped,
        mean_delta,
        ci_low,
        ci_high,
    })
}
