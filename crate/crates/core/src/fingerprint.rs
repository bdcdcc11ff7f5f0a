//! ECFP-style circular fingerprints and Tanimoto similarity.

use crate::graph::MolGraph;
use crate::hash::hash_words;
use thiserror::Error;

pub const DEFAULT_RADIUS: u32 = 2;
pub const DEFAULT_WIDTH: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("fingerprint width {0} is not a power of two")]
    BadWidth(usize),
    #[error("fingerprints differ in width or radius")]
    MismatchedParams,
    #[error("graph is not valence-consistent")]
    InvalidGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    width: usize,
    radius: u32,
}

impl Fingerprint {
    pub fn empty(width: usize, radius: u32) -> Result<Fingerprint, FingerprintError> {
        if width == 0 || !width.is_power_of_two() {
            return Err(FingerprintError::BadWidth(width));
        }
        Ok(Fingerprint {
            words: vec![0; width.div_ceil(64)],
            width,
            radius,
        })
    }

    /// Build from explicit on-bit positions.
    pub fn from_bits(width: usize, radius: u32, bits: &[usize]) -> Result<Fingerprint, FingerprintError> {
        let mut fp = Fingerprint::empty(width, radius)?;
        for &b in bits {
            fp.set(b % width);
        }
        Ok(fp)
    }

    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

/// Circular fingerprint: each atom starts from (element, charge, degree,
/// hydrogens, aromatic), then folds in sorted (bond order, neighbor id) pairs
/// once per layer. Every (atom, layer) identifier sets one bit.
pub fn fingerprint(graph: &MolGraph, radius: u32, width: usize) -> Result<Fingerprint, FingerprintError> {
    if !graph.is_valence_consistent(&Default::default()) {
        return Err(FingerprintError::InvalidGraph);
    }
    fingerprint_unchecked(graph, radius, width)
}

pub(crate) fn fingerprint_unchecked(
    graph: &MolGraph,
    radius: u32,
    width: usize,
) -> Result<Fingerprint, FingerprintError> {
    let mut fp = Fingerprint::empty(width, radius)?;
    let n = graph.atom_count();
    let mut ids: Vec<u64> = (0..n)
        .map(|i| {
            let a = graph.atom(i);
            hash_words([
                a.element.atomic_number() as u64,
                a.charge as i64 as u64,
                graph.degree(i) as u64,
                a.hydrogens as u64,
                a.aromatic as u64,
            ])
        })
        .collect();
    for &id in &ids {
        fp.set((id % width as u64) as usize);
    }
    for layer in 1..=radius {
        let next: Vec<u64> = (0..n)
            .map(|i| {
                let mut env: Vec<(u64, u64)> = graph
                    .neighbors(i)
                    .iter()
                    .map(|&(v, b)| (graph.bonds()[b].order.code() as u64, ids[v]))
                    .collect();
                env.sort_unstable();
                hash_words(
                    [layer as u64, ids[i]]
                        .into_iter()
                        .chain(env.into_iter().flat_map(|(o, id)| [o, id])),
                )
            })
            .collect();
        ids = next;
        for &id in &ids {
            fp.set((id % width as u64) as usize);
        }
    }
    Ok(fp)
}

/// Default ECFP4-like fingerprint (radius 2, 2048 bits).
pub fn ecfp4(graph: &MolGraph) -> Result<Fingerprint, FingerprintError> {
    fingerprint(graph, DEFAULT_RADIUS, DEFAULT_WIDTH)
}

/// |a ∧ b| / |a ∨ b|, defined as 1.0 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    if a.width != b.width || a.radius != b.radius {
        return Err(FingerprintError::MismatchedParams);
    }
    let (mut both, mut either) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        both += (x & y).count_ones();
        either += (x | y).count_ones();
    }
    Ok(if either == 0 {
        1.0
    } else {
        both as f64 / either as f64
    })
}
