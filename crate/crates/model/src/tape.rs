//! Reverse-mode automatic differentiation over matrices.
//!
//! A [`Tape`] records every operation as it runs. Calling
//! [`Tape::backward`] on a scalar node walks the record in reverse and
//! returns the gradient of that scalar with respect to every node.

use crate::tensor::{matmul, matmul_nt, matmul_tn, Matrix};
use std::borrow::Cow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    /// Stores the per-row inverse standard deviation.
    LayerNorm(Var, Vec<f64>),
    CausalSoftmax(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    StackRows(Vec<(Var, usize)>),
    /// Stores the softmax probabilities of the targeted rows.
    CrossEntropy(Var, Vec<(usize, usize)>, Matrix),
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Matrix>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

pub struct Grads {
    grads: Vec<Option<Matrix>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads[v.0].take()
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

/// Row-wise `(x - mean) / sqrt(var + eps)`, returning the inverse deviations.
pub fn layer_norm_rows(x: &Matrix, eps: f64) -> (Matrix, Vec<f64>) {
    let mut out = x.clone();
    let mut inv = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = out.row_mut(r);
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let s = 1.0 / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * s;
        }
        inv.push(s);
    }
    (out, inv)
}

/// Softmax of each row restricted to columns `0..=row + offset`.
pub fn causal_softmax(x: &Matrix, offset: usize) -> Matrix {
    let mut out = Matrix::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let limit = (r + offset + 1).min(x.cols);
        let row = &x.row(r)[..limit];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let o = &mut out.row_mut(r)[..limit];
        let mut sum = 0.0;
        for (d, &v) in o.iter_mut().zip(row) {
            *d = (v - max).exp();
            sum += *d;
        }
        for d in o.iter_mut() {
            *d /= sum;
        }
    }
    out
}

/// Numerically stable softmax of a vector.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

impl<'a> Tape<'a> {
    pub fn new() -> Tape<'a> {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Matrix>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that borrows its value, such as a model parameter.
    pub fn param(&mut self, m: &'a Matrix) -> Var {
        self.push(Cow::Borrowed(m), Op::Leaf)
    }

    /// A leaf that owns its value.
    pub fn leaf(&mut self, m: Matrix) -> Var {
        self.push(Cow::Owned(m), Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let m = matmul(self.value(a), self.value(b));
        self.push(Cow::Owned(m), Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let m = matmul_nt(self.value(a), self.value(b));
        self.push(Cow::Owned(m), Op::MatMulNT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut m = self.value(a).clone();
        m.add_assign(self.value(b));
        self.push(Cow::Owned(m), Op::Add(a, b))
    }

    /// Add a `1 × cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let mut m = self.value(a).clone();
        let b = self.value(bias);
        assert_eq!((b.rows, b.cols), (1, m.cols), "bias shape");
        for r in 0..m.rows {
            for (x, y) in m.row_mut(r).iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        self.push(Cow::Owned(m), Op::AddRow(a, bias))
    }

    /// Multiply every row of `a` elementwise by a `1 × cols` row.
    pub fn mul_row(&mut self, a: Var, gain: Var) -> Var {
        let mut m = self.value(a).clone();
        let g = self.value(gain);
        assert_eq!((g.rows, g.cols), (1, m.cols), "gain shape");
        for r in 0..m.rows {
            for (x, y) in m.row_mut(r).iter_mut().zip(&g.data) {
                *x *= y;
            }
        }
        self.push(Cow::Owned(m), Op::MulRow(a, gain))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut m = self.value(a).clone();
        m.data.iter_mut().for_each(|x| *x *= s);
        self.push(Cow::Owned(m), Op::Scale(a, s))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let mut m = self.value(a).clone();
        m.data.iter_mut().for_each(|x| *x = gelu(*x));
        self.push(Cow::Owned(m), Op::Gelu(a))
    }

    /// Row normalization without gain or bias.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let (m, inv) = layer_norm_rows(self.value(a), eps);
        self.push(Cow::Owned(m), Op::LayerNorm(a, inv))
    }

    /// Row-wise softmax over the lower triangle (column ≤ row).
    pub fn causal_softmax(&mut self, a: Var) -> Var {
        let m = causal_softmax(self.value(a), 0);
        self.push(Cow::Owned(m), Op::CausalSoftmax(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let src = self.value(a);
        let mut m = Matrix::zeros(src.rows, len);
        for r in 0..src.rows {
            m.row_mut(r).copy_from_slice(&src.row(r)[start..start + len]);
        }
        self.push(Cow::Owned(m), Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut at = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                m.row_mut(r)[at..at + src.len()].copy_from_slice(src);
                at += src.len();
            }
        }
        self.push(Cow::Owned(m), Op::ConcatCols(parts.to_vec()))
    }

    /// Build a matrix whose row `k` is row `rows[k].1` of `rows[k].0`.
    pub fn stack_rows(&mut self, rows: Vec<(Var, usize)>) -> Var {
        let cols = self.value(rows[0].0).cols;
        let mut m = Matrix::zeros(rows.len(), cols);
        for (k, &(v, r)) in rows.iter().enumerate() {
            m.row_mut(k).copy_from_slice(self.value(v).row(r));
        }
        self.push(Cow::Owned(m), Op::StackRows(rows))
    }

    /// Mean negative log-likelihood of `(row, class)` targets under row-wise
    /// softmax of `logits`. Returns a `1 × 1` node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[(usize, usize)]) -> Var {
        assert!(!targets.is_empty(), "cross entropy needs at least one target");
        let l = self.value(logits);
        let mut probs = Matrix::zeros(targets.len(), l.cols);
        let mut total = 0.0;
        for (k, &(r, c)) in targets.iter().enumerate() {
            let p = softmax(l.row(r));
            total -= p[c].max(f64::MIN_POSITIVE).ln();
            probs.row_mut(k).copy_from_slice(&p);
        }
        let loss = Matrix::row_vector(vec![total / targets.len() as f64]);
        self.push(Cow::Owned(loss), Op::CrossEntropy(logits, targets.to_vec(), probs))
    }

    /// Gradients of the scalar node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = matmul_nt(&g, self.value(*b));
                    let db = matmul_tn(self.value(*a), &g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulNT(a, b) => {
                    let da = matmul(&g, self.value(*b));
                    let db = matmul_tn(&g, self.value(*a));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::AddRow(a, b) => {
                    let mut db = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (d, x) in db.data.iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *a, g);
                }
                Op::MulRow(a, gain) => {
                    let x = self.value(*a);
                    let w = self.value(*gain);
                    let mut dw = Matrix::zeros(1, g.cols);
                    let mut da = g.clone();
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            dw.data[c] += g.at(r, c) * x.at(r, c);
                        }
                        for (d, wv) in da.row_mut(r).iter_mut().zip(&w.data) {
                            *d *= wv;
                        }
                    }
                    accumulate(&mut grads, *gain, dw);
                    accumulate(&mut grads, *a, da);
                }
                Op::Scale(a, s) => {
                    let mut da = g;
                    da.data.iter_mut().for_each(|x| *x *= s);
                    accumulate(&mut grads, *a, da);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let mut da = g;
                    for (d, &xv) in da.data.iter_mut().zip(&x.data) {
                        *d *= gelu_grad(xv);
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::LayerNorm(a, inv) => {
                    let y = &node.value;
                    let mut da = Matrix::zeros(g.rows, g.cols);
                    let n = g.cols as f64;
                    for (r, &inv_r) in inv.iter().enumerate().take(g.rows) {
                        let (gr, yr) = (g.row(r), y.row(r));
                        let mean_g = gr.iter().sum::<f64>() / n;
                        let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for ((d, &gv), &yv) in da.row_mut(r).iter_mut().zip(gr).zip(yr) {
                            *d = inv_r * (gv - mean_g - yv * mean_gy);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::CausalSoftmax(a) => {
                    let y = &node.value;
                    let mut da = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let (gr, yr) = (g.row(r), y.row(r));
                        let s: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((d, &gv), &yv) in da.row_mut(r).iter_mut().zip(gr).zip(yr) {
                            *d = yv * (gv - s);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut da = Matrix::zeros(src.rows, src.cols);
                    for r in 0..g.rows {
                        da.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let cols = self.value(p).cols;
                        let mut dp = Matrix::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[at..at + cols]);
                        }
                        at += cols;
                        accumulate(&mut grads, p, dp);
                    }
                }
                Op::StackRows(rows) => {
                    for (k, &(v, r)) in rows.iter().enumerate() {
                        let src = self.value(v);
                        let slot = grads[v.0].get_or_insert_with(|| Matrix::zeros(src.rows, src.cols));
                        for (d, x) in slot.row_mut(r).iter_mut().zip(g.row(k)) {
                            *d += x;
                        }
                    }
                }
                Op::CrossEntropy(logits, targets, probs) => {
                    let l = self.value(*logits);
                    let scale = g.data[0] / targets.len() as f64;
                    let mut dl = Matrix::zeros(l.rows, l.cols);
                    for (k, &(r, c)) in targets.iter().enumerate() {
                        for (d, p) in dl.row_mut(r).iter_mut().zip(probs.row(k)) {
                            *d += scale * p;
                        }
                        dl.data[r * l.cols + c] -= scale;
                    }
                    accumulate(&mut grads, *logits, dl);
                }
            }
        }
        Grads { grads }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Compares analytic gradients of `f` against central differences on
    /// every coordinate of every input.
    fn check<F>(inputs: Vec<Matrix>, f: F)
    where
        F: for<'t> Fn(&mut Tape<'t>, &[Var]) -> Var,
    {
        let eval = |ins: &[Matrix]| {
            let mut t = Tape::new();
            let vars: Vec<Var> = ins.iter().map(|m| t.leaf(m.clone())).collect();
            let out = f(&mut t, &vars);
            t.value(out).data[0]
        };
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| t.leaf(m.clone())).collect();
        let out = f(&mut t, &vars);
        let grads = t.backward(out);
        let h = 1e-6;
        for (k, m) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[k]).cloned().unwrap_or_else(|| Matrix::zeros(m.rows, m.cols));
            for idx in 0..m.data.len() {
                let mut plus = inputs.clone();
                plus[k].data[idx] += h;
                let mut minus = inputs.clone();
                minus[k].data[idx] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data[idx];
                assert!(
                    (a - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()),
                    "input {k} index {idx}: analytic {a} numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn matmul_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ins = vec![random(&mut rng, 3, 4), random(&mut rng, 4, 2), random(&mut rng, 5, 2)];
        check(ins, |t, v| {
            let ab = t.matmul(v[0], v[1]);
            let abc = t.matmul_nt(ab, v[2]);
            t.cross_entropy(abc, &[(0, 1), (2, 4)])
        });
    }

    #[test]
    fn elementwise_and_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ins = vec![random(&mut rng, 3, 5), random(&mut rng, 1, 5), random(&mut rng, 1, 5)];
        check(ins, |t, v| {
            let n = t.layer_norm(v[0], 1e-5);
            let g = t.mul_row(n, v[1]);
            let b = t.add_row(g, v[2]);
            let a = t.gelu(b);
            let s = t.scale(a, 0.7);
            let sum = t.add(s, v[0]);
            t.cross_entropy(sum, &[(0, 0), (1, 3), (2, 2)])
        });
    }

    #[test]
    fn attention_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ins = vec![random(&mut rng, 4, 6), random(&mut rng, 1, 6)];
        check(ins, |t, v| {
            let q = t.slice_cols(v[0], 0, 3);
            let k = t.slice_cols(v[0], 3, 3);
            let s = t.matmul_nt(q, k);
            let p = t.causal_softmax(s);
            let o = t.matmul(p, k);
            let cat = t.concat_cols(&[o, q]);
            let rows = t.stack_rows(vec![(cat, 3), (cat, 0), (v[1], 0)]);
            let rows = t.slice_cols(rows, 0, 6);
            t.cross_entropy(rows, &[(0, 1), (1, 5), (2, 0)])
        });
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random(&mut rng, 5, 5);
        let p = causal_softmax(&m, 0);
        for r in 0..5 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.row(r)[r + 1..].iter().all(|&x| x == 0.0));
        }
    }
}
