//! Reverse-mode automatic differentiation over a recorded operation tape.
//!
//! A [`Graph`] is an append-only arena of nodes; every operation pushes one
//! node holding its output buffer, so node indices are already a topological
//! order and the backward pass is a single reverse sweep. The op set is
//! exactly what the transformer model needs — dense matmul (plain and
//! transposed-rhs), the elementwise ops, RMS normalization, causal softmax,
//! rotary position rotation, embedding lookup, column slice/concat, and the
//! fused softmax cross-entropy loss.
//!
//! Reductions run sequentially over the innermost axis, so two executions of
//! the same graph on the same inputs are bitwise identical.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::elem::Elem;
use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`]. The handle is only meaningful for the
/// graph that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone)]
enum Op {
    Leaf,
    /// `a · b`, or `a · bᵀ` when `transpose_rhs`.
    MatMul { transpose_rhs: bool },
    Add,
    Sub,
    Mul,
    Scale(f64),
    Swish,
    RmsNorm { eps: f64 },
    CausalSoftmax,
    Rope { base: f64 },
    Embedding { ids: Vec<u32> },
    SliceCols { start: usize, width: usize },
    ConcatCols,
    SumAll,
    CrossEntropy { targets: Vec<u32> },
}

struct Node<E: Elem> {
    op: Op,
    inputs: Vec<usize>,
    value: Tensor<E>,
    grad: Option<Vec<E>>,
    requires_grad: bool,
}

pub struct Graph<E: Elem> {
    nodes: Vec<Node<E>>,
}

impl<E: Elem> Default for Graph<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Elem> Graph<E> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Inserts a leaf holding `value`. Gradients accumulate into it iff
    /// `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<E>, requires_grad: bool) -> Var {
        self.push(Op::Leaf, Vec::new(), value, requires_grad)
    }

    /// Leaf that never receives gradient (inputs, constants).
    pub fn constant(&mut self, value: Tensor<E>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<E> {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of `v`, if any was produced by `backward`.
    pub fn grad(&self, v: Var) -> Option<Tensor<E>> {
        let node = &self.nodes[v.0];
        node.grad.as_ref().map(|g| {
            Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape matches value")
        })
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, value: Tensor<E>, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, inputs, value, grad: None, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push_from(&mut self, op: Op, inputs: Vec<usize>, value: Tensor<E>) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.push(op, inputs, value, requires_grad)
    }

    // ---- forward ops -----------------------------------------------------

    /// Matrix product `a[m,k] · b[k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = self.value(a).dims2()?;
        let (kb, n) = self.value(b).dims2()?;
        if ka != kb {
            return Err(CoreError::Shape {
                op: "matmul",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut out = vec![E::zero(); m * n];
        mm_nn(self.value(a).data(), m, ka, self.value(b).data(), n, &mut out);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push_from(Op::MatMul { transpose_rhs: false }, vec![a.0, b.0], value))
    }

    /// Matrix product against a transposed right-hand side:
    /// `a[m,k] · b[n,k]ᵀ -> [m,n]`. This is the natural orientation for
    /// `[rows, d_in]` activations against `[d_out, d_in]` weight matrices.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = self.value(a).dims2()?;
        let (n, kb) = self.value(b).dims2()?;
        if ka != kb {
            return Err(CoreError::Shape {
                op: "matmul_nt",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut out = vec![E::zero(); m * n];
        mm_nt(self.value(a).data(), m, ka, self.value(b).data(), n, &mut out);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push_from(Op::MatMul { transpose_rhs: true }, vec![a.0, b.0], value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Op::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Op::Sub, |x, y| x - y)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Op::Mul, |x, y| x * y)
    }

    fn elementwise(
        &mut self,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(E, E) -> E,
    ) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            let name = match op {
                Op::Add => "add",
                Op::Sub => "sub",
                _ => "mul",
            };
            return Err(CoreError::Shape {
                op: name,
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push_from(op, vec![a.0, b.0], value))
    }

    /// Multiplication by a compile-time scalar constant.
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let cc = E::of_f64(c);
        let data = self.value(x).data().iter().map(|&v| v * cc).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        self.push_from(Op::Scale(c), vec![x.0], value)
    }

    /// Gated activation `x · sigmoid(x)`.
    pub fn swish(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| v * sigmoid(v)).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        self.push_from(Op::Swish, vec![x.0], value)
    }

    /// Row-wise RMS normalization with learned gain: for each row of
    /// `x[rows, d]`, `y_j = gain_j · x_j / sqrt(mean(x²) + eps)`.
    pub fn rms_norm(&mut self, x: Var, gain: Var, eps: f64) -> Result<Var> {
        let (rows, d) = self.value(x).dims2()?;
        if self.value(gain).shape() != [d] {
            return Err(CoreError::Shape {
                op: "rms_norm",
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(gain).shape().to_vec(),
            });
        }
        let xs = self.value(x).data();
        let gs = self.value(gain).data();
        let epse = E::of_f64(eps);
        let dd = E::of_f64(d as f64);
        let mut out = vec![E::zero(); rows * d];
        for r in 0..rows {
            let row = &xs[r * d..(r + 1) * d];
            let mut sumsq = E::zero();
            for &v in row {
                sumsq = sumsq + v * v;
            }
            let inv = (sumsq / dd + epse).sqrt().recip();
            for j in 0..d {
                out[r * d + j] = gs[j] * row[j] * inv;
            }
        }
        let value = Tensor::new(vec![rows, d], out)?;
        Ok(self.push_from(Op::RmsNorm { eps }, vec![x.0, gain.0], value))
    }

    /// Softmax over each row of a square score matrix restricted to the
    /// causal (lower-triangular) prefix; masked positions are exactly zero.
    pub fn causal_softmax(&mut self, scores: Var) -> Result<Var> {
        let (n, m) = self.value(scores).dims2()?;
        if n != m {
            return Err(CoreError::Shape {
                op: "causal_softmax",
                lhs: self.value(scores).shape().to_vec(),
                rhs: self.value(scores).shape().to_vec(),
            });
        }
        let zs = self.value(scores).data();
        let mut out = vec![E::zero(); n * n];
        for i in 0..n {
            let row = &zs[i * n..i * n + i + 1];
            let mut max = row[0];
            for &v in row {
                if v > max {
                    max = v;
                }
            }
            let mut sum = E::zero();
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                out[i * n + j] = e;
                sum = sum + e;
            }
            for j in 0..=i {
                out[i * n + j] = out[i * n + j] / sum;
            }
        }
        let value = Tensor::new(vec![n, n], out)?;
        Ok(self.push_from(Op::CausalSoftmax, vec![scores.0], value))
    }

    /// Rotary position rotation: row index is the sequence position, column
    /// pairs `(2t, 2t+1)` are rotated by `pos · base^(-2t/dim)`.
    pub fn rope(&mut self, x: Var, base: f64) -> Result<Var> {
        let (rows, dim) = self.value(x).dims2()?;
        if dim % 2 != 0 {
            return Err(CoreError::Contract(format!(
                "rope requires an even feature dimension, got {dim}"
            )));
        }
        let xs = self.value(x).data();
        let mut out = vec![E::zero(); rows * dim];
        rope_apply(xs, rows, dim, base, false, &mut out);
        let value = Tensor::new(vec![rows, dim], out)?;
        Ok(self.push_from(Op::Rope { base }, vec![x.0], value))
    }

    /// Row gather: `table[vocab, d]` indexed by token ids -> `[ids.len, d]`.
    pub fn embedding(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let (vocab, d) = self.value(table).dims2()?;
        for &id in ids {
            if id as usize >= vocab {
                return Err(CoreError::Index { what: "token", index: id as usize, bound: vocab });
            }
        }
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&t[id as usize * d..(id as usize + 1) * d]);
        }
        let value = Tensor::new(vec![ids.len(), d], out)?;
        Ok(self.push_from(Op::Embedding { ids: ids.to_vec() }, vec![table.0], value))
    }

    /// Column slice `x[rows, cols][:, start..start+width]`.
    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        if start + width > cols {
            return Err(CoreError::Index { what: "column", index: start + width, bound: cols + 1 });
        }
        let xs = self.value(x).data();
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&xs[r * cols + start..r * cols + start + width]);
        }
        let value = Tensor::new(vec![rows, width], out)?;
        Ok(self.push_from(Op::SliceCols { start, width }, vec![x.0], value))
    }

    /// Concatenates rank-2 tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(CoreError::Contract("concat_cols needs at least one input".into()));
        }
        let (rows, _) = self.value(parts[0]).dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(CoreError::Shape {
                    op: "concat_cols",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                let xs = self.value(p).data();
                out.extend_from_slice(&xs[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::new(vec![rows, total], out)?;
        Ok(self.push_from(Op::ConcatCols, parts.iter().map(|v| v.0).collect(), value))
    }

    /// Sum of all elements, producing a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let mut acc = E::zero();
        for &v in self.value(x).data() {
            acc = acc + v;
        }
        self.push_from(Op::SumAll, vec![x.0], Tensor::scalar(acc))
    }

    /// Mean negative log-likelihood of `targets` under `logits[n, vocab]`,
    /// stabilized by per-row max subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[u32]) -> Result<Var> {
        let (n, vocab) = self.value(logits).dims2()?;
        if targets.len() != n {
            return Err(CoreError::Contract(format!(
                "cross entropy: {} logit rows but {} targets",
                n,
                targets.len()
            )));
        }
        for &t in targets {
            if t as usize >= vocab {
                return Err(CoreError::Index { what: "target", index: t as usize, bound: vocab });
            }
        }
        let zs = self.value(logits).data();
        let mut total = E::zero();
        for (r, &t) in targets.iter().enumerate() {
            let row = &zs[r * vocab..(r + 1) * vocab];
            total = total + (row_logsumexp(row) - row[t as usize]);
        }
        let loss = total / E::of_f64(n as f64);
        Ok(self.push_from(
            Op::CrossEntropy { targets: targets.to_vec() },
            vec![logits.0],
            Tensor::scalar(loss),
        ))
    }

    // ---- backward --------------------------------------------------------

    /// Accumulates gradients of `loss` into every reachable node that
    /// requires gradient. Each call runs an independent sweep, so calling
    /// twice without clearing adds a second, equal contribution.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(CoreError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut sweep: Vec<Option<Vec<E>>> = vec![None; self.nodes.len()];
        sweep[loss.0] = Some(vec![E::one()]);
        // Node indices are a topological order, so one reverse sweep visits
        // every node exactly once.
        for idx in (0..=loss.0).rev() {
            if sweep[idx].is_none() || !self.nodes[idx].requires_grad {
                continue;
            }
            self.backward_node(idx, &mut sweep)?;
        }
        for (idx, contrib) in sweep.into_iter().enumerate() {
            if let Some(contrib) = contrib {
                if !self.nodes[idx].requires_grad {
                    continue;
                }
                let numel = self.nodes[idx].value.numel();
                let buf = self.nodes[idx].grad.get_or_insert_with(|| vec![E::zero(); numel]);
                for (g, c) in buf.iter_mut().zip(contrib) {
                    *g = *g + c;
                }
            }
        }
        Ok(())
    }

    fn backward_node(&mut self, idx: usize, sweep: &mut [Option<Vec<E>>]) -> Result<()> {
        let g = sweep[idx].clone().expect("caller checked");
        let add_grad = |nodes: &[Node<E>], sweep: &mut [Option<Vec<E>>], i: usize, c: &[E]| {
            if !nodes[i].requires_grad {
                return;
            }
            let buf = sweep[i].get_or_insert_with(|| vec![E::zero(); nodes[i].value.numel()]);
            for (g, &v) in buf.iter_mut().zip(c) {
                *g = *g + v;
            }
        };
        let op = self.nodes[idx].op.clone();
        let inputs = self.nodes[idx].inputs.clone();
        match op {
            Op::Leaf => {}
            Op::MatMul { transpose_rhs } => {
                let (a, b) = (inputs[0], inputs[1]);
                let (m, k) = self.nodes[a].value.dims2()?;
                let n = if transpose_rhs {
                    self.nodes[b].value.dims2()?.0
                } else {
                    self.nodes[b].value.dims2()?.1
                };
                if !transpose_rhs {
                    // C = A·B: dA = G·Bᵀ, dB = Aᵀ·G
                    let mut da = vec![E::zero(); m * k];
                    mm_nt(&g, m, n, self.nodes[b].value.data(), k, &mut da);
                    add_grad(&self.nodes, sweep, a, &da);
                    let mut db = vec![E::zero(); k * n];
                    mm_tn(self.nodes[a].value.data(), m, k, &g, n, &mut db);
                    add_grad(&self.nodes, sweep, b, &db);
                } else {
                    // C = A·Bᵀ: dA = G·B, dB = Gᵀ·A
                    let mut da = vec![E::zero(); m * k];
                    mm_nn(&g, m, n, self.nodes[b].value.data(), k, &mut da);
                    add_grad(&self.nodes, sweep, a, &da);
                    let mut db = vec![E::zero(); n * k];
                    mm_tn(&g, m, n, self.nodes[a].value.data(), k, &mut db);
                    add_grad(&self.nodes, sweep, b, &db);
                }
            }
            Op::Add => {
                add_grad(&self.nodes, sweep, inputs[0], &g);
                add_grad(&self.nodes, sweep, inputs[1], &g);
            }
            Op::Sub => {
                add_grad(&self.nodes, sweep, inputs[0], &g);
                let neg: Vec<E> = g.iter().map(|&v| -v).collect();
                add_grad(&self.nodes, sweep, inputs[1], &neg);
            }
            Op::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                let da: Vec<E> =
                    g.iter().zip(self.nodes[b].value.data()).map(|(&gv, &bv)| gv * bv).collect();
                add_grad(&self.nodes, sweep, a, &da);
                let db: Vec<E> =
                    g.iter().zip(self.nodes[a].value.data()).map(|(&gv, &av)| gv * av).collect();
                add_grad(&self.nodes, sweep, b, &db);
            }
            Op::Scale(c) => {
                let cc = E::of_f64(c);
                let dx: Vec<E> = g.iter().map(|&v| v * cc).collect();
                add_grad(&self.nodes, sweep, inputs[0], &dx);
            }
            Op::Swish => {
                let dx: Vec<E> = g
                    .iter()
                    .zip(self.nodes[inputs[0]].value.data())
                    .map(|(&gv, &x)| {
                        let s = sigmoid(x);
                        gv * (s + x * s * (E::one() - s))
                    })
                    .collect();
                add_grad(&self.nodes, sweep, inputs[0], &dx);
            }
            Op::RmsNorm { eps } => {
                let (x, gain) = (inputs[0], inputs[1]);
                let (rows, d) = self.nodes[x].value.dims2()?;
                let xs = self.nodes[x].value.data();
                let gs = self.nodes[gain].value.data();
                let epse = E::of_f64(eps);
                let dd = E::of_f64(d as f64);
                let mut dx = vec![E::zero(); rows * d];
                let mut dgain = vec![E::zero(); d];
                for r in 0..rows {
                    let row = &xs[r * d..(r + 1) * d];
                    let grow = &g[r * d..(r + 1) * d];
                    let mut sumsq = E::zero();
                    for &v in row {
                        sumsq = sumsq + v * v;
                    }
                    let rms = (sumsq / dd + epse).sqrt();
                    let inv = rms.recip();
                    // s = Σ_i g_i · gain_i · x_i
                    let mut s = E::zero();
                    for j in 0..d {
                        s = s + grow[j] * gs[j] * row[j];
                    }
                    let cube = inv * inv * inv;
                    for j in 0..d {
                        dx[r * d + j] = grow[j] * gs[j] * inv - row[j] * s * cube / dd;
                        dgain[j] = dgain[j] + grow[j] * row[j] * inv;
                    }
                }
                add_grad(&self.nodes, sweep, x, &dx);
                add_grad(&self.nodes, sweep, gain, &dgain);
            }
            Op::CausalSoftmax => {
                let n = self.nodes[idx].value.dims2()?.0;
                let ys = self.nodes[idx].value.data();
                let mut dz = vec![E::zero(); n * n];
                for i in 0..n {
                    let yrow = &ys[i * n..i * n + i + 1];
                    let grow = &g[i * n..i * n + i + 1];
                    let mut dot = E::zero();
                    for j in 0..=i {
                        dot = dot + grow[j] * yrow[j];
                    }
                    for j in 0..=i {
                        dz[i * n + j] = yrow[j] * (grow[j] - dot);
                    }
                }
                add_grad(&self.nodes, sweep, inputs[0], &dz);
            }
            Op::Rope { base } => {
                let (rows, dim) = self.nodes[inputs[0]].value.dims2()?;
                let mut dx = vec![E::zero(); rows * dim];
                // The rotation is orthogonal, so the adjoint is the inverse
                // rotation applied to the upstream gradient.
                rope_apply(&g, rows, dim, base, true, &mut dx);
                add_grad(&self.nodes, sweep, inputs[0], &dx);
            }
            Op::Embedding { ids } => {
                let table = inputs[0];
                if !self.nodes[table].requires_grad {
                    return Ok(());
                }
                let d = self.nodes[table].value.dims2()?.1;
                let numel = self.nodes[table].value.numel();
                let mut dt = vec![E::zero(); numel];
                for (row, &id) in ids.iter().enumerate() {
                    let dst = &mut dt[id as usize * d..(id as usize + 1) * d];
                    let src = &g[row * d..(row + 1) * d];
                    for (o, &v) in dst.iter_mut().zip(src) {
                        *o = *o + v;
                    }
                }
                add_grad(&self.nodes, sweep, table, &dt);
            }
            Op::SliceCols { start, width } => {
                let (rows, cols) = self.nodes[inputs[0]].value.dims2()?;
                let mut dx = vec![E::zero(); rows * cols];
                for r in 0..rows {
                    for j in 0..width {
                        dx[r * cols + start + j] = g[r * width + j];
                    }
                }
                add_grad(&self.nodes, sweep, inputs[0], &dx);
            }
            Op::ConcatCols => {
                let rows = self.nodes[idx].value.dims2()?.0;
                let total = self.nodes[idx].value.dims2()?.1;
                let mut offset = 0;
                for &p in &inputs {
                    let w = self.nodes[p].value.dims2()?.1;
                    let mut dp = vec![E::zero(); rows * w];
                    for r in 0..rows {
                        dp[r * w..(r + 1) * w]
                            .copy_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    add_grad(&self.nodes, sweep, p, &dp);
                    offset += w;
                }
            }
            Op::SumAll => {
                let numel = self.nodes[inputs[0]].value.numel();
                let dx = vec![g[0]; numel];
                add_grad(&self.nodes, sweep, inputs[0], &dx);
            }
            Op::CrossEntropy { targets } => {
                let (n, vocab) = self.nodes[inputs[0]].value.dims2()?;
                let zs = self.nodes[inputs[0]].value.data();
                let scale = g[0] / E::of_f64(n as f64);
                let mut dz = vec![E::zero(); n * vocab];
                for (r, &t) in targets.iter().enumerate() {
                    let row = &zs[r * vocab..(r + 1) * vocab];
                    let lse = row_logsumexp(row);
                    for j in 0..vocab {
                        let p = (row[j] - lse).exp();
                        let delta = if j == t as usize { E::one() } else { E::zero() };
                        dz[r * vocab + j] = scale * (p - delta);
                    }
                }
                add_grad(&self.nodes, sweep, inputs[0], &dz);
            }
        }
        Ok(())
    }
}

#[inline]
fn sigmoid<E: Elem>(x: E) -> E {
    E::one() / (E::one() + (-x).exp())
}

fn row_logsumexp<E: Elem>(row: &[E]) -> E {
    let mut max = row[0];
    for &v in row {
        if v > max {
            max = v;
        }
    }
    let mut sum = E::zero();
    for &v in row {
        sum = sum + (v - max).exp();
    }
    max + sum.ln()
}

/// `out[m,n] += a[m,k] · b[k,n]`; accumulation over `k` is sequential for
/// every output entry.
fn mm_nn<E: Elem>(a: &[E], m: usize, k: usize, b: &[E], n: usize, out: &mut [E]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + av * brow[j];
            }
        }
    }
}

/// `out[m,n] += a[m,k] · b[n,k]ᵀ` (row-by-row dot products).
fn mm_nt<E: Elem>(a: &[E], m: usize, k: usize, b: &[E], n: usize, out: &mut [E]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = E::zero();
            for kk in 0..k {
                acc = acc + arow[kk] * brow[kk];
            }
            orow[j] = orow[j] + acc;
        }
    }
}

/// `out[k,n] += a[m,k]ᵀ · b[m,n]`.
fn mm_tn<E: Elem>(a: &[E], m: usize, k: usize, b: &[E], n: usize, out: &mut [E]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let orow = &mut out[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + av * brow[j];
            }
        }
    }
}

/// Applies the rotary rotation (or its inverse) to every row, reading
/// angles from the row index.
fn rope_apply<E: Elem>(
    xs: &[E],
    rows: usize,
    dim: usize,
    base: f64,
    inverse: bool,
    out: &mut [E],
) {
    let half = dim / 2;
    for p in 0..rows {
        for t in 0..half {
            let freq = Float::powf(base, -((2 * t) as f64) / dim as f64);
            let angle = p as f64 * freq;
            let (sin, cos) = Float::sin_cos(angle);
            let (sin, cos) = (E::of_f64(sin), E::of_f64(cos));
            let sin = if inverse { -sin } else { sin };
            let a = xs[p * dim + 2 * t];
            let b = xs[p * dim + 2 * t + 1];
            out[p * dim + 2 * t] = a * cos - b * sin;
            out[p * dim + 2 * t + 1] = a * sin + b * cos;
        }
    }
}
