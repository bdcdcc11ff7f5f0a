//! A small pre-norm causal transformer decoder.

use crate::tape::{gelu, layer_norm_rows, softmax, Tape, Var};
use crate::tensor::{dot, vec_matmul, Matrix};
use crate::vocab::{Vocab, VocabError, BOS, EOS, GEN_TOKEN, TRAIN_PROMPT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("sequence of {len} tokens exceeds the context length {context}")]
    SequenceTooLong { len: usize, context: usize },
    #[error("prompt vector has width {got}, expected {expected}")]
    WidthMismatch { got: usize, expected: usize },
    #[error("backbone must be frozen for this operation")]
    NotFrozen,
    #[error("backbone is frozen")]
    Frozen,
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("target sequence is empty")]
    EmptyTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub embed: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp: usize,
    pub context: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed: 64,
            layers: 2,
            heads: 4,
            mlp: 256,
            context: 128,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.embed / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub ln1_g: Matrix,
    pub ln1_b: Matrix,
    pub w_qkv: Matrix,
    pub b_qkv: Matrix,
    pub w_o: Matrix,
    pub b_o: Matrix,
    pub ln2_g: Matrix,
    pub ln2_b: Matrix,
    pub w_1: Matrix,
    pub b_1: Matrix,
    pub w_2: Matrix,
    pub b_2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub(crate) vocab: Vocab,
    pub(crate) config: ModelConfig,
    pub(crate) tok_emb: Matrix,
    pub(crate) pos_emb: Matrix,
    pub(crate) layers: Vec<Layer>,
    pub(crate) lnf_g: Matrix,
    pub(crate) lnf_b: Matrix,
    pub(crate) head_w: Matrix,
    pub(crate) head_b: Matrix,
    pub(crate) frozen: bool,
}

/// One element of a model input sequence.
#[derive(Debug, Clone, Copy)]
pub enum Input {
    Token(usize),
    Vector(Var),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub temperature: f64,
    pub max_len: usize,
    /// Argmax decoding; temperature and seed are ignored.
    pub greedy: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            temperature: 1.0,
            max_len: 100,
            greedy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub smiles: String,
    pub tokens: Vec<usize>,
    /// Stopped at `max_len` without emitting EOS.
    pub truncated: bool,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let normal = Normal::new(0.0, std).expect("positive std");
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| normal.sample(rng)).collect())
}

impl Backbone {
    /// Fresh, unfrozen weights: Gaussian(0, 0.02) matrices, unit gains, zero
    /// biases.
    pub fn new(vocab: Vocab, config: ModelConfig, seed: u64) -> Backbone {
        assert!(config.heads > 0 && config.embed.is_multiple_of(config.heads), "embed must divide into heads");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (e, m, v) = (config.embed, config.mlp, vocab.len());
        let std = 0.02;
        let layers = (0..config.layers)
            .map(|_| Layer {
                ln1_g: Matrix::filled(1, e, 1.0),
                ln1_b: Matrix::zeros(1, e),
                w_qkv: gaussian(&mut rng, e, 3 * e, std),
                b_qkv: Matrix::zeros(1, 3 * e),
                w_o: gaussian(&mut rng, e, e, std),
                b_o: Matrix::zeros(1, e),
                ln2_g: Matrix::filled(1, e, 1.0),
                ln2_b: Matrix::zeros(1, e),
                w_1: gaussian(&mut rng, e, m, std),
                b_1: Matrix::zeros(1, m),
                w_2: gaussian(&mut rng, m, e, std),
                b_2: Matrix::zeros(1, e),
            })
            .collect();
        Backbone {
            tok_emb: gaussian(&mut rng, v, e, std),
            pos_emb: gaussian(&mut rng, config.context, e, std),
            layers,
            lnf_g: Matrix::filled(1, e, 1.0),
            lnf_b: Matrix::zeros(1, e),
            head_w: gaussian(&mut rng, e, v, std),
            head_b: Matrix::zeros(1, v),
            vocab,
            config,
            frozen: false,
        }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// All weight matrices in a fixed order.
    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.tok_emb, &self.pos_emb];
        for l in &self.layers {
            out.extend([
                &l.ln1_g, &l.ln1_b, &l.w_qkv, &l.b_qkv, &l.w_o, &l.b_o, &l.ln2_g, &l.ln2_b, &l.w_1, &l.b_1, &l.w_2,
                &l.b_2,
            ]);
        }
        out.extend([&self.lnf_g, &self.lnf_b, &self.head_w, &self.head_b]);
        out
    }

    /// Mutable access for training. Fails once the backbone is frozen.
    pub fn parameters_mut(&mut self) -> Result<Vec<&mut Matrix>, ModelError> {
        if self.frozen {
            return Err(ModelError::Frozen);
        }
        let mut out = vec![&mut self.tok_emb, &mut self.pos_emb];
        for l in &mut self.layers {
            out.extend([
                &mut l.ln1_g,
                &mut l.ln1_b,
                &mut l.w_qkv,
                &mut l.b_qkv,
                &mut l.w_o,
                &mut l.b_o,
                &mut l.ln2_g,
                &mut l.ln2_b,
                &mut l.w_1,
                &mut l.b_1,
                &mut l.w_2,
                &mut l.b_2,
            ]);
        }
        out.extend([&mut self.lnf_g, &mut self.lnf_b, &mut self.head_w, &mut self.head_b]);
        Ok(out)
    }

    pub fn token_embedding(&self, id: usize) -> Vec<f64> {
        self.tok_emb.row(id).to_vec()
    }

    /// Embedding rows of prompt words.
    pub fn word_vectors(&self, words: &[&str]) -> Result<Vec<Vec<f64>>, ModelError> {
        Ok(self
            .vocab
            .encode_words(words)?
            .into_iter()
            .map(|id| self.token_embedding(id))
            .collect())
    }

    pub fn gen_embedding(&self) -> Vec<f64> {
        self.token_embedding(self.vocab.gen_id())
    }

    /// Root mean square of the token embedding table.
    pub fn embedding_rms(&self) -> f64 {
        (self.tok_emb.squared_norm() / self.tok_emb.data.len() as f64).sqrt()
    }

    /// Record the forward pass on `tape`. Returns the vars of the parameters
    /// (same order as [`Backbone::parameters`]), the logits and the final
    /// normalized hidden states.
    pub fn forward<'a>(&'a self, tape: &mut Tape<'a>, inputs: &[Input]) -> Result<(Vec<Var>, Var, Var), ModelError> {
        let t_len = inputs.len();
        if t_len > self.config.context {
            return Err(ModelError::SequenceTooLong {
                len: t_len,
                context: self.config.context,
            });
        }
        let params: Vec<Var> = self.parameters().into_iter().map(|m| tape.param(m)).collect();
        let (tok, pos) = (params[0], params[1]);
        let rows = inputs
            .iter()
            .map(|i| match *i {
                Input::Token(id) => (tok, id),
                Input::Vector(v) => (v, 0),
            })
            .collect();
        let x = tape.stack_rows(rows);
        let p = tape.stack_rows((0..t_len).map(|t| (pos, t)).collect());
        let mut x = tape.add(x, p);
        let (e, dh) = (self.config.embed, self.config.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        for li in 0..self.layers.len() {
            let w = &params[2 + li * 12..2 + (li + 1) * 12];
            let h = tape.layer_norm(x, LN_EPS);
            let h = tape.mul_row(h, w[0]);
            let h = tape.add_row(h, w[1]);
            let qkv = tape.matmul(h, w[2]);
            let qkv = tape.add_row(qkv, w[3]);
            let mut heads = Vec::with_capacity(self.config.heads);
            for hd in 0..self.config.heads {
                let q = tape.slice_cols(qkv, hd * dh, dh);
                let k = tape.slice_cols(qkv, e + hd * dh, dh);
                let v = tape.slice_cols(qkv, 2 * e + hd * dh, dh);
                let s = tape.matmul_nt(q, k);
                let s = tape.scale(s, scale);
                let a = tape.causal_softmax(s);
                heads.push(tape.matmul(a, v));
            }
            let att = tape.concat_cols(&heads);
            let att = tape.matmul(att, w[4]);
            let att = tape.add_row(att, w[5]);
            x = tape.add(x, att);
            let h = tape.layer_norm(x, LN_EPS);
            let h = tape.mul_row(h, w[6]);
            let h = tape.add_row(h, w[7]);
            let h = tape.matmul(h, w[8]);
            let h = tape.add_row(h, w[9]);
            let h = tape.gelu(h);
            let h = tape.matmul(h, w[10]);
            let h = tape.add_row(h, w[11]);
            x = tape.add(x, h);
        }
        let n = params.len();
        let h = tape.layer_norm(x, LN_EPS);
        let h = tape.mul_row(h, params[n - 4]);
        let hidden = tape.add_row(h, params[n - 3]);
        let logits = tape.matmul(hidden, params[n - 2]);
        let logits = tape.add_row(logits, params[n - 1]);
        Ok((params, logits, hidden))
    }

    /// Cross-entropy of `target` tokens and EOS after `prefix`, BOS.
    /// Returns the tape, the parameter vars and the loss var.
    fn sequence_loss<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        prefix: &[Input],
        target: &[usize],
    ) -> Result<(Vec<Var>, Var), ModelError> {
        let mut inputs = prefix.to_vec();
        inputs.push(Input::Token(BOS));
        inputs.extend(target.iter().map(|&t| Input::Token(t)));
        let start = prefix.len();
        let targets: Vec<(usize, usize)> = target
            .iter()
            .copied()
            .chain([EOS])
            .enumerate()
            .map(|(k, class)| (start + k, class))
            .collect();
        let (params, logits, _) = self.forward(tape, &inputs)?;
        Ok((params, tape.cross_entropy(logits, &targets)))
    }

    /// Loss and gradients for every parameter on a token-only sequence.
    /// Used by pretraining.
    pub fn token_loss_and_grads(&self, prefix: &[usize], target: &[usize]) -> Result<(f64, Vec<Matrix>), ModelError> {
        let mut tape = Tape::new();
        let prefix: Vec<Input> = prefix.iter().map(|&t| Input::Token(t)).collect();
        let (params, loss) = self.sequence_loss(&mut tape, &prefix, target)?;
        let value = tape.value(loss).data[0];
        let mut grads = tape.backward(loss);
        let shapes = self.parameters();
        let out = params
            .iter()
            .zip(shapes)
            .map(|(&v, m)| grads.take(v).unwrap_or_else(|| Matrix::zeros(m.rows, m.cols)))
            .collect();
        Ok((value, out))
    }

    fn check_prompt(&self, prompt: &[Vec<f64>]) -> Result<(), ModelError> {
        if !self.frozen {
            return Err(ModelError::NotFrozen);
        }
        for p in prompt {
            if p.len() != self.config.embed {
                return Err(ModelError::WidthMismatch {
                    got: p.len(),
                    expected: self.config.embed,
                });
            }
        }
        Ok(())
    }

    /// Mean cross-entropy of `target` (then EOS) given the prompt vectors,
    /// with the gradient for each prompt vector. Weights are read only.
    pub fn prompt_loss(&self, prompt: &[Vec<f64>], target: &str) -> Result<(f64, Vec<Vec<f64>>), ModelError> {
        self.check_prompt(prompt)?;
        let ids = self.vocab.encode_smiles(target)?;
        let mut tape = Tape::new();
        let vars: Vec<Var> = prompt.iter().map(|p| tape.leaf(Matrix::row_vector(p.clone()))).collect();
        let inputs: Vec<Input> = vars.iter().map(|&v| Input::Vector(v)).collect();
        let (_, loss) = self.sequence_loss(&mut tape, &inputs, &ids)?;
        let value = tape.value(loss).data[0];
        let grads = tape.backward(loss);
        let out = vars
            .iter()
            .map(|&v| grads.get(v).map(|m| m.data.clone()).unwrap_or_else(|| vec![0.0; self.config.embed]))
            .collect();
        Ok((value, out))
    }

    /// Loss only, without the backward pass.
    pub fn prompt_loss_value(&self, prompt: &[Vec<f64>], target: &str) -> Result<f64, ModelError> {
        self.check_prompt(prompt)?;
        let ids = self.vocab.encode_smiles(target)?;
        let mut session = Session::new(self);
        for p in prompt {
            session.push(p)?;
        }
        let mut logits = session.push(self.tok_emb.row(BOS))?.0;
        let mut total = 0.0;
        for (k, &t) in ids.iter().chain([EOS].iter()).enumerate() {
            let p = softmax(&logits);
            total -= p[t].max(f64::MIN_POSITIVE).ln();
            if k < ids.len() {
                logits = session.push(self.tok_emb.row(t))?.0;
            }
        }
        Ok(total / (ids.len() + 1) as f64)
    }

    /// Restrict logits to emittable tokens (EOS and SMILES tokens), divide by
    /// the temperature and normalize.
    pub fn emission_distribution(&self, logits: &[f64], temperature: f64) -> Vec<f64> {
        let first = self.vocab.first_smiles();
        let scaled: Vec<f64> = logits
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                if i == EOS || i >= first {
                    l / temperature
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        softmax(&scaled)
    }

    /// Autoregressive decoding after the prompt vectors and BOS.
    pub fn decode(&self, prompt: &[Vec<f64>], config: &DecodeConfig, seed: u64) -> Result<Decoded, ModelError> {
        self.check_prompt(prompt)?;
        if !config.greedy && !(config.temperature > 0.0 && config.temperature.is_finite()) {
            return Err(ModelError::BadTemperature(config.temperature));
        }
        let room = self.config.context.saturating_sub(prompt.len() + 1);
        if prompt.len() + 1 > self.config.context {
            return Err(ModelError::SequenceTooLong {
                len: prompt.len() + 1,
                context: self.config.context,
            });
        }
        let max_len = config.max_len.min(room + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut session = Session::new(self);
        for p in prompt {
            session.push(p)?;
        }
        let mut logits = session.push(self.tok_emb.row(BOS))?.0;
        let mut tokens = Vec::new();
        let mut truncated = true;
        for step in 0..max_len {
            let next = if config.greedy {
                let p = self.emission_distribution(&logits, 1.0);
                argmax(&p)
            } else {
                let p = self.emission_distribution(&logits, config.temperature);
                sample_index(&p, &mut rng)
            };
            if next == EOS {
                truncated = false;
                break;
            }
            tokens.push(next);
            if step + 1 < max_len {
                logits = session.push(self.tok_emb.row(next))?.0;
            }
        }
        Ok(Decoded {
            smiles: self.vocab.decode_smiles(&tokens),
            tokens,
            truncated,
        })
    }

    /// Mean of the final normalized hidden state over the SMILES token
    /// positions, read with the pretraining prompt.
    pub fn activations(&self, smiles: &str) -> Result<Vec<f64>, ModelError> {
        let ids = self.vocab.encode_smiles(smiles)?;
        if ids.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        let mut session = Session::new(self);
        for w in TRAIN_PROMPT.iter().chain([GEN_TOKEN].iter()) {
            session.push(self.tok_emb.row(self.vocab.id(w)?))?;
        }
        session.push(self.tok_emb.row(BOS))?;
        let mut mean = vec![0.0; self.config.embed];
        for &t in &ids {
            let (_, hidden) = session.push(self.tok_emb.row(t))?;
            for (m, h) in mean.iter_mut().zip(hidden) {
                *m += h;
            }
        }
        mean.iter_mut().for_each(|m| *m /= ids.len() as f64);
        Ok(mean)
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > 0.0 {
            acc += v;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Incremental inference with cached keys and values.
pub struct Session<'m> {
    model: &'m Backbone,
    keys: Vec<Vec<Vec<f64>>>,
    values: Vec<Vec<Vec<f64>>>,
    pos: usize,
}

fn norm_affine(x: &[f64], g: &Matrix, b: &Matrix) -> Vec<f64> {
    let (n, _) = layer_norm_rows(&Matrix::row_vector(x.to_vec()), LN_EPS);
    n.data.iter().zip(&g.data).zip(&b.data).map(|((v, g), b)| v * g + b).collect()
}

fn add_bias(mut v: Vec<f64>, b: &Matrix) -> Vec<f64> {
    v.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
    v
}

impl<'m> Session<'m> {
    pub fn new(model: &'m Backbone) -> Session<'m> {
        let l = model.layers.len();
        Session {
            model,
            keys: vec![Vec::new(); l],
            values: vec![Vec::new(); l],
            pos: 0,
        }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    /// Feed one input embedding. Returns the logits and the final hidden
    /// state at this position.
    pub fn push(&mut self, embedding: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let m = self.model;
        let cfg = &m.config;
        if self.pos >= cfg.context {
            return Err(ModelError::SequenceTooLong {
                len: self.pos + 1,
                context: cfg.context,
            });
        }
        let (e, dh) = (cfg.embed, cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let mut x: Vec<f64> = embedding.iter().zip(m.pos_emb.row(self.pos)).map(|(a, b)| a + b).collect();
        for (li, layer) in m.layers.iter().enumerate() {
            let h = norm_affine(&x, &layer.ln1_g, &layer.ln1_b);
            let qkv = add_bias(vec_matmul(&h, &layer.w_qkv), &layer.b_qkv);
            self.keys[li].push(qkv[e..2 * e].to_vec());
            self.values[li].push(qkv[2 * e..].to_vec());
            let mut att = vec![0.0; e];
            for hd in 0..cfg.heads {
                let q = &qkv[hd * dh..(hd + 1) * dh];
                let scores: Vec<f64> = self.keys[li]
                    .iter()
                    .map(|k| dot(q, &k[hd * dh..(hd + 1) * dh]) * scale)
                    .collect();
                let p = softmax(&scores);
                for (w, v) in p.iter().zip(&self.values[li]) {
                    for (o, vv) in att[hd * dh..(hd + 1) * dh].iter_mut().zip(&v[hd * dh..(hd + 1) * dh]) {
                        *o += w * vv;
                    }
                }
            }
            let att = add_bias(vec_matmul(&att, &layer.w_o), &layer.b_o);
            x.iter_mut().zip(&att).for_each(|(a, b)| *a += b);
            let h = norm_affine(&x, &layer.ln2_g, &layer.ln2_b);
            let mut h = add_bias(vec_matmul(&h, &layer.w_1), &layer.b_1);
            h.iter_mut().for_each(|v| *v = gelu(*v));
            let h = add_bias(vec_matmul(&h, &layer.w_2), &layer.b_2);
            x.iter_mut().zip(&h).for_each(|(a, b)| *a += b);
        }
        let hidden = norm_affine(&x, &m.lnf_g, &m.lnf_b);
        let logits = add_bias(vec_matmul(&hidden, &m.head_w), &m.head_b);
        self.pos += 1;
        Ok((logits, hidden))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Backbone {
        let vocab = Vocab::build(["CCO", "c1ccccc1"]).unwrap();
        let cfg = ModelConfig {
            embed: 16,
            layers: 2,
            heads: 2,
            mlp: 32,
            context: 32,
        };
        let mut b = Backbone::new(vocab, cfg, 7);
        // larger weights so the test is not dominated by near-uniform outputs
        for p in b.parameters_mut().unwrap() {
            p.data.iter_mut().for_each(|x| *x *= 20.0);
        }
        b.freeze();
        b
    }

    #[test]
    fn cached_inference_matches_tape_forward() {
        let b = tiny();
        let ids = [3usize, 4, 5, BOS, 20, 21, 22];
        let mut tape = Tape::new();
        let inputs: Vec<Input> = ids.iter().map(|&t| Input::Token(t)).collect();
        let (_, logits, hidden) = b.forward(&mut tape, &inputs).unwrap();
        let mut s = Session::new(&b);
        for (k, &t) in ids.iter().enumerate() {
            let (l, h) = s.push(b.tok_emb.row(t)).unwrap();
            for (x, y) in l.iter().zip(tape.value(logits).row(k)) {
                assert!((x - y).abs() < 1e-10);
            }
            for (x, y) in h.iter().zip(tape.value(hidden).row(k)) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn loss_value_matches_gradient_path() {
        let b = tiny();
        let prompt = b.word_vectors(&["The", "molecule", "is", "a", "<GEN>"]).unwrap();
        let (l1, _) = b.prompt_loss(&prompt, "CCO").unwrap();
        let l2 = b.prompt_loss_value(&prompt, "CCO").unwrap();
        assert!((l1 - l2).abs() < 1e-10);
    }

    #[test]
    fn untrained_cross_entropy_is_near_uniform() {
        let vocab = Vocab::build(["CCO"]).unwrap();
        let v = vocab.len() as f64;
        let mut b = Backbone::new(vocab, ModelConfig::default(), 1);
        b.freeze();
        let prompt = b.word_vectors(&["The", "molecule", "is", "a", "<GEN>"]).unwrap();
        let (l, _) = b.prompt_loss(&prompt, "CCCCO").unwrap();
        assert!((l - v.ln()).abs() < 0.1, "{l} vs {}", v.ln());
    }

    #[test]
    fn contracts() {
        let mut b = tiny();
        assert!(matches!(b.parameters_mut(), Err(ModelError::Frozen)));
        assert!(matches!(
            b.prompt_loss(&[vec![0.0; 3]], "C"),
            Err(ModelError::WidthMismatch { got: 3, expected: 16 })
        ));
        assert!(matches!(b.prompt_loss(&[], "[Se]"), Err(ModelError::Vocab(_))));
        b.frozen = false;
        assert_eq!(b.prompt_loss(&[], "C"), Err(ModelError::NotFrozen));
    }
}
