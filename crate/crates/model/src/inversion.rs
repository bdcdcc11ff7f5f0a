//! Hierarchical textual inversion: a shared token, one intermediate token per
//! cluster and one detail token per molecule, learned against a frozen
//! backbone while each molecule picks the intermediate token that explains it
//! best.

use crate::backbone::{Backbone, ModelError};
use crate::checkpoint::{read_file, write_file, CheckpointError, Reader, Writer};
use crate::optim::{linear_decay, AdamW, AdamWConfig};
use crate::vocab::TRAIN_PROMPT;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"HIMOLEMB";
pub const EMBEDDING_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InversionError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("number of clusters K = {k} must be below the number of molecules N = {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid inversion config: {0}")]
    BadConfig(String),
    #[error("loss became non-finite in epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("molecule {index}: {source}")]
    Model {
        index: usize,
        #[source]
        source: ModelError,
    },
    #[error("embedding width {got} does not match the backbone width {expected}")]
    WidthMismatch { got: usize, expected: usize },
}

/// Which token levels appear in the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Levels {
    pub shared: bool,
    pub intermediate: bool,
    pub detail: bool,
}

impl Levels {
    pub const ALL: Levels = Levels {
        shared: true,
        intermediate: true,
        detail: true,
    };
    pub const SHARED_ONLY: Levels = Levels {
        shared: true,
        intermediate: false,
        detail: false,
    };

    fn code(self) -> u32 {
        self.shared as u32 | (self.intermediate as u32) << 1 | (self.detail as u32) << 2
    }

    fn from_code(c: u32) -> Levels {
        Levels {
            shared: c & 1 != 0,
            intermediate: c & 2 != 0,
            detail: c & 4 != 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub weight_decay: f64,
    /// Assignments are refreshed at the start of each of the first this many
    /// epochs, then frozen.
    pub assignment_epochs: usize,
    pub k: usize,
    pub levels: Levels,
    /// Standard deviation of the initial perturbation around `<GEN>`, as a
    /// fraction of the backbone's token-embedding RMS.
    pub init_noise: f64,
    pub seed: u64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            epochs: 1000,
            batch_size: 4,
            learning_rate: 0.3,
            clip_norm: 1.0,
            weight_decay: 0.0,
            assignment_epochs: 5,
            k: 10,
            levels: Levels::ALL,
            init_noise: 0.01,
            seed: 0,
        }
    }
}

impl InversionConfig {
    fn validate(&self) -> Result<(), InversionError> {
        if self.k == 0 {
            return Err(InversionError::BadConfig("K must be at least 1".into()));
        }
        if self.assignment_epochs > self.epochs {
            return Err(InversionError::BadConfig(format!(
                "assignment epochs ({}) exceed epochs ({})",
                self.assignment_epochs, self.epochs
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(InversionError::BadConfig("learning rate must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(InversionError::BadConfig("batch size must be positive".into()));
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return Err(InversionError::BadConfig("init noise must be finite and non-negative".into()));
        }
        if !self.levels.shared && !self.levels.intermediate && !self.levels.detail {
            return Err(InversionError::BadConfig("at least one token level is required".into()));
        }
        Ok(())
    }
}

/// Learned token embeddings. Cluster indices are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalEmbeddings {
    pub s: Vec<f64>,
    pub i: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub c: Vec<usize>,
    pub levels: Levels,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub history: Vec<f64>,
    /// `losses[n][k]` from the last assignment pass.
    pub last_assignment_losses: Vec<Vec<f64>>,
    /// The initial assignment, then the result of every reassignment pass.
    pub assignment_trace: Vec<Vec<usize>>,
}

/// A trained state plus what it was trained on, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCheckpoint {
    pub state: HierarchicalEmbeddings,
    pub config: InversionConfig,
    pub dataset: Vec<String>,
}

/// SHA-256 of the dataset lines joined by newlines, hex encoded.
pub fn dataset_hash(dataset: &[String]) -> String {
    let mut h = Sha256::new();
    for s in dataset {
        h.update(s.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl HierarchicalEmbeddings {
    pub fn k(&self) -> usize {
        self.i.len()
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    /// `<GEN>` plus Gaussian noise with σ = 0.01 × embedding RMS; uniform
    /// random assignments.
    pub fn init(dataset: &[String], backbone: &Backbone, config: &InversionConfig) -> Result<Self, InversionError> {
        config.validate()?;
        let n = dataset.len();
        if n == 0 {
            return Err(InversionError::EmptyDataset);
        }
        if config.k >= n {
            return Err(InversionError::KTooLarge { k: config.k, n });
        }
        for (index, s) in dataset.iter().enumerate() {
            backbone
                .vocab()
                .encode_smiles(s)
                .map_err(|e| InversionError::Model {
                    index,
                    source: e.into(),
                })?;
        }
        let base = backbone.gen_embedding();
        let sigma = config.init_noise * backbone.embedding_rms();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let noisy = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("positive sigma");
                base.iter().map(|b| b + normal.sample(rng)).collect()
            } else {
                base.clone()
            }
        };
        let s = noisy(&mut rng);
        let i = (0..config.k).map(|_| noisy(&mut rng)).collect();
        let d = (0..n).map(|_| noisy(&mut rng)).collect();
        let c = (0..n).map(|_| rng.random_range(0..config.k)).collect();
        Ok(HierarchicalEmbeddings {
            s,
            i,
            d,
            c,
            levels: config.levels,
            seed: config.seed,
        })
    }

    /// Learned part of the prompt for molecule `n` with intermediate token `k`.
    pub fn tokens_for(&self, n: usize, k: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(3);
        if self.levels.shared {
            out.push(self.s.clone());
        }
        if self.levels.intermediate {
            out.push(self.i[k].clone());
        }
        if self.levels.detail {
            out.push(self.d[n].clone());
        }
        out
    }

    /// Full training prompt "The molecule is a" + learned tokens.
    pub fn training_prompt(&self, backbone: &Backbone, n: usize, k: usize) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut p = backbone.word_vectors(&TRAIN_PROMPT)?;
        p.extend(self.tokens_for(n, k));
        Ok(p)
    }

    /// Loss of every (molecule, cluster) pair and the argmin assignment, ties
    /// to the smallest cluster index. Runs N × K loss evaluations.
    pub fn cluster_losses(
        &self,
        backbone: &Backbone,
        dataset: &[String],
    ) -> Result<(Vec<usize>, Vec<Vec<f64>>), InversionError> {
        let k_count = if self.levels.intermediate { self.k() } else { 1 };
        let losses: Vec<Vec<f64>> = dataset
            .par_iter()
            .enumerate()
            .map(|(n, x)| {
                (0..k_count)
                    .map(|k| {
                        let prompt = self
                            .training_prompt(backbone, n, k)
                            .map_err(|source| InversionError::Model { index: n, source })?;
                        backbone
                            .prompt_loss_value(&prompt, x)
                            .map_err(|source| InversionError::Model { index: n, source })
                    })
                    .collect::<Result<Vec<f64>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let assignment = losses
            .iter()
            .map(|row| {
                let mut best = 0;
                for (k, &l) in row.iter().enumerate() {
                    if l < row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect();
        Ok((assignment, losses))
    }

    pub fn assign_clusters(&mut self, backbone: &Backbone, dataset: &[String]) -> Result<(), InversionError> {
        let (c, _) = self.cluster_losses(backbone, dataset)?;
        self.c = c;
        Ok(())
    }

    /// Embedding blocks in optimizer order: s, i_1..i_K, d_1..d_N.
    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.s[..]];
        out.extend(self.i.iter_mut().map(|v| &mut v[..]));
        out.extend(self.d.iter_mut().map(|v| &mut v[..]));
        out
    }
}

type LossAndGrads = (f64, Vec<Vec<f64>>);

/// Run inversion on `dataset` against a frozen `backbone`.
pub fn train(
    dataset: &[String],
    backbone: &Backbone,
    config: &InversionConfig,
) -> Result<(HierarchicalEmbeddings, TrainReport), InversionError> {
    if !backbone.is_frozen() {
        return Err(InversionError::Model {
            index: 0,
            source: ModelError::NotFrozen,
        });
    }
    let state = HierarchicalEmbeddings::init(dataset, backbone, config)?;
    train_from(state, dataset, backbone, config)
}

/// Continue inversion from an existing state, e.g. one with hand-set
/// assignments. The state's shape must match `dataset` and `config.k`.
pub fn train_from(
    mut state: HierarchicalEmbeddings,
    dataset: &[String],
    backbone: &Backbone,
    config: &InversionConfig,
) -> Result<(HierarchicalEmbeddings, TrainReport), InversionError> {
    config.validate()?;
    if !backbone.is_frozen() {
        return Err(InversionError::Model {
            index: 0,
            source: ModelError::NotFrozen,
        });
    }
    if state.n() != dataset.len() || state.k() != config.k || state.c.iter().any(|&c| c >= config.k) {
        return Err(InversionError::BadConfig("state does not match the dataset and K".into()));
    }
    if state.dim() != backbone.embed_dim() {
        return Err(InversionError::WidthMismatch {
            got: state.dim(),
            expected: backbone.embed_dim(),
        });
    }
    let n = dataset.len();
    let e = backbone.embed_dim();
    let k = config.k;
    let sizes = vec![e; 1 + k + n];
    let mut opt = AdamW::new(
        AdamWConfig {
            weight_decay: config.weight_decay,
            clip_norm: Some(config.clip_norm),
            ..AdamWConfig::default()
        },
        &sizes,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x1a7e);
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total = config.epochs * steps_per_epoch;
    let mut history = Vec::with_capacity(config.epochs);
    let mut last_losses = Vec::new();
    let mut trace = vec![state.c.clone()];
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        if epoch < config.assignment_epochs && state.levels.intermediate {
            let (c, losses) = state.cluster_losses(backbone, dataset)?;
            state.c = c;
            last_losses = losses;
            trace.push(state.c.clone());
        }
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results: Vec<Result<LossAndGrads, InversionError>> = batch
                .par_iter()
                .map(|&m| {
                    let prompt = state
                        .training_prompt(backbone, m, state.c[m])
                        .map_err(|source| InversionError::Model { index: m, source })?;
                    backbone
                        .prompt_loss(&prompt, &dataset[m])
                        .map_err(|source| InversionError::Model { index: m, source })
                })
                .collect();
            let mut grads = vec![vec![0.0; e]; 1 + k + n];
            let words = TRAIN_PROMPT.len();
            let inv = 1.0 / batch.len() as f64;
            for (&m, r) in batch.iter().zip(results) {
                let (loss, g) = r?;
                epoch_loss += loss;
                let mut slots = Vec::with_capacity(3);
                if state.levels.shared {
                    slots.push(0);
                }
                if state.levels.intermediate {
                    slots.push(1 + state.c[m]);
                }
                if state.levels.detail {
                    slots.push(1 + k + m);
                }
                for (slot, gv) in slots.into_iter().zip(&g[words..]) {
                    grads[slot].iter_mut().zip(gv).for_each(|(a, b)| *a += b * inv);
                }
            }
            let lr = linear_decay(config.learning_rate, opt.steps() as usize, total);
            let mut grad_refs: Vec<&mut [f64]> = grads.iter_mut().map(|g| &mut g[..]).collect();
            opt.step(&mut state.blocks_mut(), &mut grad_refs, lr);
        }
        let mean = epoch_loss / n as f64;
        if !mean.is_finite() || state.blocks_mut().iter().any(|b| b.iter().any(|x| !x.is_finite())) {
            return Err(InversionError::DivergedLoss { epoch });
        }
        history.push(mean);
    }
    Ok((
        state,
        TrainReport {
            history,
            last_assignment_losses: last_losses,
            assignment_trace: trace,
        },
    ))
}

impl EmbeddingCheckpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let st = &self.state;
        let mut w = Writer::new(EMBEDDING_MAGIC, EMBEDDING_VERSION);
        w.u64(st.k() as u64);
        w.u64(st.n() as u64);
        w.u64(st.dim() as u64);
        w.u32(st.levels.code());
        w.u64(st.seed);
        w.f64s(&st.s);
        for v in st.i.iter().chain(&st.d) {
            w.f64s(v);
        }
        for &c in &st.c {
            w.u64(c as u64);
        }
        let c = &self.config;
        w.u64(c.epochs as u64);
        w.u64(c.batch_size as u64);
        w.f64(c.learning_rate);
        w.f64(c.clip_norm);
        w.f64(c.weight_decay);
        w.u64(c.assignment_epochs as u64);
        w.f64(c.init_noise);
        w.str(&dataset_hash(&self.dataset));
        for s in &self.dataset {
            w.str(s);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<EmbeddingCheckpoint, CheckpointError> {
        let mut r = Reader::open(bytes, EMBEDDING_MAGIC, EMBEDDING_VERSION, "embedding checkpoint")?;
        let k = r.usize()?;
        let n = r.usize()?;
        let dim = r.usize()?;
        if k >= n || n > bytes.len() {
            return Err(CheckpointError::Malformed("inconsistent K and N".into()));
        }
        let levels = Levels::from_code(r.u32()?);
        let seed = r.u64()?;
        let vec = |r: &mut Reader| -> Result<Vec<f64>, CheckpointError> {
            let v = r.f64s()?;
            if v.len() != dim {
                return Err(CheckpointError::Malformed("embedding width".into()));
            }
            Ok(v)
        };
        let s = vec(&mut r)?;
        let i = (0..k).map(|_| vec(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let d = (0..n).map(|_| vec(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let c = (0..n)
            .map(|_| {
                let c = r.usize()?;
                if c < k {
                    Ok(c)
                } else {
                    Err(CheckpointError::Malformed("cluster index out of range".into()))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let config = InversionConfig {
            epochs: r.usize()?,
            batch_size: r.usize()?,
            learning_rate: r.f64()?,
            clip_norm: r.f64()?,
            weight_decay: r.f64()?,
            assignment_epochs: r.usize()?,
            init_noise: r.f64()?,
            k,
            levels,
            seed,
        };
        let hash = r.str()?;
        let dataset = (0..n).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
        r.expect_end()?;
        if dataset_hash(&dataset) != hash {
            return Err(CheckpointError::Malformed("dataset hash does not match".into()));
        }
        Ok(EmbeddingCheckpoint {
            state: HierarchicalEmbeddings {
                s,
                i,
                d,
                c,
                levels,
                seed,
            },
            config,
            dataset,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<EmbeddingCheckpoint, CheckpointError> {
        EmbeddingCheckpoint::from_bytes(&read_file(path)?)
    }
}
