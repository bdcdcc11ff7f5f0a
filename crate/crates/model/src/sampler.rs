//! Sampling by interpolating the intermediate and detail tokens of two
//! training molecules.

use crate::backbone::{Backbone, DecodeConfig, Decoded, ModelError};
use crate::inversion::{HierarchicalEmbeddings, Levels};
use crate::vocab::SAMPLE_PROMPT;
use himol_core::hash::hash_words;
use himol_core::{canonical_smiles, repair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("invalid sampler config: {0}")]
    BadConfig(String),
    #[error("molecule index {index} out of range for {n} molecules")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("strict sampling accepted {accepted} of {wanted} molecules within {draws} draws")]
    StrictExhausted { accepted: usize, wanted: usize, draws: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// λ is drawn from Uniform(l, 1 − l).
    pub l: f64,
    pub temperature: f64,
    pub greedy: bool,
    pub max_samples: usize,
    pub max_len: usize,
    pub seed: u64,
    /// Keep only valid, unique molecules absent from the training set.
    pub strict: bool,
    /// Run rule-based repair on every decoded string.
    pub repair: bool,
    /// Strict mode gives up after this many draws per requested sample.
    pub draw_budget_factor: usize,
    /// Interpolate the intermediate token (otherwise it comes from molecule i).
    pub interpolate_intermediate: bool,
    /// Interpolate the detail token (otherwise it comes from molecule i).
    pub interpolate_detail: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            l: 0.0,
            temperature: 1.0,
            greedy: false,
            max_samples: 100,
            max_len: 100,
            seed: 0,
            strict: false,
            repair: false,
            draw_budget_factor: 100,
            interpolate_intermediate: true,
            interpolate_detail: true,
        }
    }
}

impl SamplerConfig {
    /// Settings for the non-interpolating baseline path (τ = 2).
    pub fn baseline() -> SamplerConfig {
        SamplerConfig {
            temperature: 2.0,
            ..SamplerConfig::default()
        }
    }

    fn validate(&self) -> Result<(), SamplerError> {
        if !(0.0..0.5).contains(&self.l) {
            return Err(SamplerError::BadConfig(format!("l must lie in [0, 0.5), got {}", self.l)));
        }
        if !self.greedy && !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(SamplerError::BadConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.draw_budget_factor == 0 {
            return Err(SamplerError::BadConfig("draw budget factor must be positive".into()));
        }
        Ok(())
    }

    fn decode_config(&self) -> DecodeConfig {
        DecodeConfig {
            temperature: self.temperature,
            max_len: self.max_len,
            greedy: self.greedy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub raw: String,
    pub repaired: Option<String>,
    pub repair_failed: bool,
    pub valid: bool,
    /// Canonical form of the final string when it is valid.
    pub canonical: Option<String>,
    pub source: Option<(usize, usize)>,
    pub lambda: Option<f64>,
    pub seed: u64,
    pub truncated: bool,
}

impl SampleRecord {
    /// The repaired string when repair ran and succeeded, else the raw one.
    pub fn final_smiles(&self) -> &str {
        self.repaired.as_deref().unwrap_or(&self.raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub records: Vec<SampleRecord>,
    pub draws: usize,
    /// Total draws over accepted records.
    pub resampling_ratio: f64,
    pub config: SamplerConfig,
}

/// `(λ i_{c_a} + (1 − λ) i_{c_b}, λ d_a + (1 − λ) d_b)`.
pub fn interpolate(
    state: &HierarchicalEmbeddings,
    a: usize,
    b: usize,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), SamplerError> {
    let n = state.n();
    for index in [a, b] {
        if index >= n {
            return Err(SamplerError::IndexOutOfRange { index, n });
        }
    }
    let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| lambda * p + (1.0 - lambda) * q).collect() };
    Ok((
        mix(&state.i[state.c[a]], &state.i[state.c[b]]),
        mix(&state.d[a], &state.d[b]),
    ))
}

/// Uniform(l, 1 − l).
pub fn draw_lambda<R: Rng + ?Sized>(rng: &mut R, l: f64) -> f64 {
    if l == 0.0 {
        rng.random::<f64>()
    } else {
        rng.random_range(l..1.0 - l)
    }
}

/// Generation prompt "A similar chemical of" followed by the learned tokens
/// for the pair `(a, b)` at `lambda`. The shared token is never mixed.
pub fn sampling_prompt(
    state: &HierarchicalEmbeddings,
    backbone: &Backbone,
    a: usize,
    b: usize,
    lambda: f64,
    config: &SamplerConfig,
) -> Result<Vec<Vec<f64>>, SamplerError> {
    let (mixed_i, mixed_d) = interpolate(state, a, b, lambda)?;
    let mut prompt = backbone.word_vectors(&SAMPLE_PROMPT)?;
    let Levels {
        shared,
        intermediate,
        detail,
    } = state.levels;
    if shared {
        prompt.push(state.s.clone());
    }
    if intermediate {
        prompt.push(if config.interpolate_intermediate {
            mixed_i
        } else {
            state.i[state.c[a]].clone()
        });
    }
    if detail {
        prompt.push(if config.interpolate_detail {
            mixed_d
        } else {
            state.d[a].clone()
        });
    }
    Ok(prompt)
}

fn finish_record(decoded: Decoded, source: Option<(usize, usize)>, lambda: Option<f64>, seed: u64, do_repair: bool) -> SampleRecord {
    let (repaired, repair_failed) = if do_repair {
        match repair(&decoded.smiles, seed) {
            Ok(t) => (Some(t.output), false),
            Err(_) => (None, true),
        }
    } else {
        (None, false)
    };
    let final_smiles = repaired.as_deref().unwrap_or(&decoded.smiles);
    let canonical = canonical_smiles(final_smiles).ok();
    SampleRecord {
        valid: canonical.is_some(),
        canonical,
        raw: decoded.smiles,
        repaired,
        repair_failed,
        source,
        lambda,
        seed,
        truncated: decoded.truncated,
    }
}

struct Draw {
    prompt: Vec<Vec<f64>>,
    source: Option<(usize, usize)>,
    lambda: Option<f64>,
    seed: u64,
}

/// Shared draw loop: `make_draw(rng, draw_index)` picks the prompt, decoding
/// runs in parallel chunks, acceptance is sequential in draw order.
fn run<F>(backbone: &Backbone, train: &[String], config: &SamplerConfig, mut make_draw: F) -> Result<SampleBatch, SamplerError>
where
    F: FnMut(&mut ChaCha8Rng, usize) -> Result<Draw, SamplerError>,
{
    config.validate()?;
    let train_forms: HashSet<String> = if config.strict {
        train.iter().filter_map(|s| canonical_smiles(s).ok()).collect()
    } else {
        HashSet::new()
    };
    let budget = if config.strict {
        config.max_samples.saturating_mul(config.draw_budget_factor)
    } else {
        config.max_samples
    };
    let decode_cfg = config.decode_config();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut emitted: HashSet<String> = HashSet::new();
    let mut records = Vec::with_capacity(config.max_samples);
    let mut draws = 0;
    while records.len() < config.max_samples && draws < budget {
        let chunk = (config.max_samples - records.len()).min(budget - draws).max(1);
        let batch: Vec<Draw> = (draws..draws + chunk)
            .map(|d| make_draw(&mut rng, d))
            .collect::<Result<_, _>>()?;
        let decoded: Vec<Result<SampleRecord, ModelError>> = batch
            .into_par_iter()
            .map(|d| {
                let out = backbone.decode(&d.prompt, &decode_cfg, d.seed)?;
                Ok(finish_record(out, d.source, d.lambda, d.seed, config.repair))
            })
            .collect();
        for rec in decoded {
            let rec = rec?;
            draws += 1;
            if config.strict {
                let Some(form) = rec.canonical.clone() else { continue };
                if train_forms.contains(&form) || !emitted.insert(form) {
                    continue;
                }
            }
            records.push(rec);
            if records.len() == config.max_samples {
                break;
            }
        }
    }
    if records.len() < config.max_samples {
        return Err(SamplerError::StrictExhausted {
            accepted: records.len(),
            wanted: config.max_samples,
            draws,
        });
    }
    let resampling_ratio = if records.is_empty() {
        1.0
    } else {
        draws as f64 / records.len() as f64
    };
    Ok(SampleBatch {
        records,
        draws,
        resampling_ratio,
        config: config.clone(),
    })
}

fn draw_seed(seed: u64, index: usize) -> u64 {
    hash_words([seed, index as u64])
}

/// Interpolation sampling. `train` is the training set used for the strict
/// novelty filter.
pub fn sample(
    state: &HierarchicalEmbeddings,
    backbone: &Backbone,
    train: &[String],
    config: &SamplerConfig,
) -> Result<SampleBatch, SamplerError> {
    if state.dim() != backbone.embed_dim() {
        return Err(ModelError::WidthMismatch {
            got: state.dim(),
            expected: backbone.embed_dim(),
        }
        .into());
    }
    let n = state.n();
    run(backbone, train, config, |rng, index| {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let lambda = draw_lambda(rng, config.l);
        Ok(Draw {
            prompt: sampling_prompt(state, backbone, a, b, lambda, config)?,
            source: Some((a, b)),
            lambda: Some(lambda),
            seed: draw_seed(config.seed, index),
        })
    })
}

/// Decode from "A similar chemical of" plus fixed `tokens`, without
/// interpolation.
pub fn sample_baseline(
    backbone: &Backbone,
    tokens: &[Vec<f64>],
    train: &[String],
    config: &SamplerConfig,
) -> Result<SampleBatch, SamplerError> {
    let mut prompt = backbone.word_vectors(&SAMPLE_PROMPT)?;
    prompt.extend(tokens.iter().cloned());
    run(backbone, train, config, |_, index| {
        Ok(Draw {
            prompt: prompt.clone(),
            source: None,
            lambda: None,
            seed: draw_seed(config.seed, index),
        })
    })
}
