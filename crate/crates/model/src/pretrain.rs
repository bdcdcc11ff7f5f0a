//! Teacher-forced pretraining of the backbone on a SMILES corpus.

use crate::backbone::{Backbone, ModelConfig, ModelError};
use crate::optim::{linear_decay, AdamW, AdamWConfig};
use crate::tensor::Matrix;
use crate::vocab::{Vocab, SAMPLE_PROMPT, TRAIN_PROMPT};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PretrainError {
    #[error("pretraining corpus is empty")]
    EmptyCorpus,
    #[error("corpus entry {index} is not valid SMILES: {smiles:?}")]
    InvalidSmiles { index: usize, smiles: String },
    #[error("loss became non-finite in epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Decay the learning rate linearly to zero over the run.
    pub linear_decay: bool,
    pub optimizer: AdamWConfig,
    /// Also train on the sampling phrasing and on three-slot prompts.
    pub prompt_variants: bool,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            model: ModelConfig::default(),
            epochs: 20,
            batch_size: 16,
            learning_rate: 3e-4,
            linear_decay: false,
            optimizer: AdamWConfig::default(),
            prompt_variants: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    /// Mean training loss per epoch.
    pub history: Vec<f64>,
}

/// Prompt token ids for one training sequence. The base form is
/// "The molecule is a <GEN>"; with variants enabled the phrase may be the
/// sampling phrase and the `<GEN>` slot may be repeated three times, which
/// matches the shape of the inversion and sampling prompts.
fn prompt_ids(vocab: &Vocab, rng: &mut ChaCha8Rng, variants: bool) -> Vec<usize> {
    let (words, slots) = if variants {
        let words = if rng.random_bool(0.5) { TRAIN_PROMPT } else { SAMPLE_PROMPT };
        (words, if rng.random_bool(0.5) { 1 } else { 3 })
    } else {
        (TRAIN_PROMPT, 1)
    };
    let mut ids = vocab.encode_words(&words).expect("prompt words are reserved");
    ids.extend(std::iter::repeat_n(vocab.gen_id(), slots));
    ids
}

/// Train a fresh backbone on `corpus` and return it frozen.
pub fn pretrain(corpus: &[String], config: &PretrainConfig) -> Result<(Backbone, PretrainReport), PretrainError> {
    if corpus.is_empty() {
        return Err(PretrainError::EmptyCorpus);
    }
    for (index, s) in corpus.iter().enumerate() {
        if !himol_core::is_valid(s) {
            return Err(PretrainError::InvalidSmiles {
                index,
                smiles: s.clone(),
            });
        }
    }
    let vocab = Vocab::build(corpus.iter().map(String::as_str)).map_err(ModelError::from)?;
    let encoded: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| vocab.encode_smiles(s))
        .collect::<Result<_, _>>()
        .map_err(ModelError::from)?;
    let mut model = Backbone::new(vocab, config.model, config.seed);
    let sizes: Vec<usize> = model.parameters().iter().map(|m| m.data.len()).collect();
    let mut opt = AdamW::new(config.optimizer, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let batch = config.batch_size.max(1);
    let total_steps = config.epochs * encoded.len().div_ceil(batch);
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let jobs: Vec<(Vec<usize>, &Vec<usize>)> = chunk
                .iter()
                .map(|&i| (prompt_ids(&model.vocab, &mut rng, config.prompt_variants), &encoded[i]))
                .collect();
            let results: Vec<Result<(f64, Vec<Matrix>), ModelError>> = jobs
                .par_iter()
                .map(|(prefix, target)| model.token_loss_and_grads(prefix, target))
                .collect();
            let mut sum: Option<Vec<Matrix>> = None;
            for r in results {
                let (loss, grads) = r?;
                epoch_loss += loss;
                match &mut sum {
                    None => sum = Some(grads),
                    Some(acc) => acc.iter_mut().zip(&grads).for_each(|(a, g)| a.add_assign(g)),
                }
            }
            let mut grads = sum.expect("non-empty batch");
            let inv = 1.0 / chunk.len() as f64;
            for g in &mut grads {
                g.data.iter_mut().for_each(|x| *x *= inv);
            }
            let lr = if config.linear_decay {
                linear_decay(config.learning_rate, opt.steps() as usize, total_steps)
            } else {
                config.learning_rate
            };
            let mut params: Vec<&mut [f64]> = model.parameters_mut()?.into_iter().map(|m| &mut m.data[..]).collect();
            let mut grad_slices: Vec<&mut [f64]> = grads.iter_mut().map(|m| &mut m.data[..]).collect();
            opt.step(&mut params, &mut grad_slices, lr);
        }
        let mean = epoch_loss / encoded.len() as f64;
        if !mean.is_finite() {
            return Err(PretrainError::DivergedLoss { epoch });
        }
        history.push(mean);
    }
    model.freeze();
    Ok((model, PretrainReport { history }))
}
