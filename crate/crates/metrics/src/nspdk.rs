//! Neighborhood subgraph pairwise distance kernel with feature hashing.

use himol_core::canon::{canonical_ranks, certificate};
use himol_core::hash::hash_words;
use himol_core::MolGraph;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NspdkConfig {
    pub radius: usize,
    pub distance: usize,
    /// Number of hash buckets.
    pub width: u64,
}

impl Default for NspdkConfig {
    fn default() -> Self {
        NspdkConfig {
            radius: 2,
            distance: 4,
            width: 1 << 20,
        }
    }
}

/// Sparse count vector, sorted by bucket.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub entries: Vec<(u64, f64)>,
}

impl SparseVector {
    pub fn from_counts(counts: BTreeMap<u64, f64>) -> SparseVector {
        SparseVector {
            entries: counts.into_iter().collect(),
        }
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(&self) -> SparseVector {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        SparseVector {
            entries: self.entries.iter().map(|&(k, v)| (k, v / n)).collect(),
        }
    }
}

/// Hash of the canonical form of the radius-`r` neighborhood rooted at
/// `root`. Vertex labels carry element, charge, aromaticity and the distance
/// from the root; edge labels carry the bond order.
pub fn neighborhood_label(graph: &MolGraph, dist_from_root: &[usize], r: usize) -> u64 {
    let members: Vec<usize> = (0..graph.atom_count()).filter(|&v| dist_from_root[v] <= r).collect();
    let mut local = vec![usize::MAX; graph.atom_count()];
    for (i, &v) in members.iter().enumerate() {
        local[v] = i;
    }
    let keys: Vec<(usize, u8, i8, bool)> = members
        .iter()
        .map(|&v| {
            let a = graph.atom(v);
            (dist_from_root[v], a.element.atomic_number(), a.charge, a.aromatic)
        })
        .collect();
    let edges: Vec<(usize, usize, u8)> = graph
        .bonds()
        .iter()
        .filter(|b| local[b.a] != usize::MAX && local[b.b] != usize::MAX)
        .map(|b| (local[b.a], local[b.b], b.order.code()))
        .collect();
    let ranks = canonical_ranks(&keys, &edges, |r: &[usize]| certificate(&keys, &edges, r));
    let (k, e) = certificate(&keys, &edges, &ranks);
    let mut words = vec![k.len() as u64];
    for (d, z, q, arom) in k {
        words.extend([d as u64, z as u64, q as i64 as u64, arom as u64]);
    }
    words.push(e.len() as u64);
    for (a, b, l) in e {
        words.extend([a as u64, b as u64, l as u64]);
    }
    hash_words(words)
}

/// Feature counts: for every ordered atom pair `(u, v)` at distance `d ≤ D`
/// and every radius `r ≤ R`, one count at `hash(r, d, label_u, label_v)`.
pub fn nspdk_features(graph: &MolGraph, config: &NspdkConfig) -> SparseVector {
    let n = graph.atom_count();
    let dist = graph.distance_matrix();
    let labels: Vec<Vec<u64>> = (0..n)
        .map(|v| (0..=config.radius).map(|r| neighborhood_label(graph, &dist[v], r)).collect())
        .collect();
    let mut counts = BTreeMap::new();
    for u in 0..n {
        for v in 0..n {
            let d = dist[u][v];
            if d > config.distance {
                continue;
            }
            for (r, (&a, &b)) in labels[u].iter().zip(&labels[v]).enumerate().take(config.radius + 1) {
                let h = hash_words([r as u64, d as u64, a, b]) % config.width;
                *counts.entry(h).or_insert(0.0) += 1.0;
            }
        }
    }
    SparseVector::from_counts(counts)
}

/// Normalized kernel `⟨φx, φy⟩ / (‖φx‖ ‖φy‖)`.
pub fn kernel(a: &SparseVector, b: &SparseVector) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        a.dot(b) / denom
    }
}

fn mean_kernel(xs: &[SparseVector], ys: &[SparseVector]) -> f64 {
    if xs.is_empty() || ys.is_empty() {
        return 0.0;
    }
    let rows: Vec<f64> = xs.par_iter().map(|x| ys.iter().map(|y| x.dot(y)).sum()).collect();
    rows.iter().sum::<f64>() / (xs.len() * ys.len()) as f64
}

/// Squared MMD between two graph sets under the normalized kernel, clamped at
/// zero.
pub fn nspdk_mmd(a: &[MolGraph], b: &[MolGraph], config: &NspdkConfig) -> f64 {
    let feats = |gs: &[MolGraph]| -> Vec<SparseVector> { gs.par_iter().map(|g| nspdk_features(g, config).normalized()).collect() };
    let (fa, fb) = (feats(a), feats(b));
    mmd_from_features(&fa, &fb)
}

/// Squared MMD from already normalized feature vectors.
pub fn mmd_from_features(a: &[SparseVector], b: &[SparseVector]) -> f64 {
    (mean_kernel(a, a) + mean_kernel(b, b) - 2.0 * mean_kernel(a, b)).max(0.0)
}
