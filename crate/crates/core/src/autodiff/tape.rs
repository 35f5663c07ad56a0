//! Wengert tape: every op evaluates eagerly and records how to route gradients
//! back to its inputs. `backward` replays the records in reverse.

use rand::Rng;

use super::tensor::{matrix_dims, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Layout of a batched multi-head attention call. Queries and keys are
/// stacked block-wise: block `b` owns query rows `b*lq..(b+1)*lq` and key rows
/// `b*lk..(b+1)*lk`; attention never crosses blocks.
#[derive(Debug, Clone)]
pub struct AttentionSpec {
    pub blocks: usize,
    pub lq: usize,
    pub lk: usize,
    pub heads: usize,
    /// `true` marks a valid key; length `blocks * lk`.
    pub key_mask: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMerge {
    Concat,
    Average,
}

#[derive(Debug, Clone, Copy)]
enum Unary {
    Sigmoid,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Exp,
    LnFloor(f64),
}

#[derive(Debug, Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    Unary(Unary, Var),
    MulConst(Var, Vec<f64>),
    Softmax {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        spec: AttentionSpec,
        probs: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize, usize),
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    PairSum {
        s: Var,
        t: Var,
        n: usize,
        m: usize,
    },
    PairAggregate {
        alpha: Var,
        v: Var,
        n: usize,
        m: usize,
        heads: usize,
        merge: HeadMerge,
    },
}

struct Node {
    value: Vec<f64>,
    shape: Vec<usize>,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn dims2(shape: &[usize]) -> Option<(usize, usize)> {
    (shape.len() == 2).then(|| (shape[0], shape[1]))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, shape: Vec<usize>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        self.nodes.push(Node {
            value,
            shape,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape node is well formed")
    }

    /// Records a tensor as a leaf; gradients are tracked iff `requires_grad` is set.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.data().to_vec(), t.shape().to_vec(), Op::Leaf, t.requires_grad)
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    pub fn param(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?.with_grad();
        Ok(self.leaf(&t))
    }

    // ── linear algebra ────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ((m, k), (k2, n)) = match (dims2(sa), dims2(sb)) {
            (Some(x), Some(y)) if x.1 == y.0 => (x, y),
            _ => return Err(Error::shape("matmul", sa, sb)),
        };
        debug_assert_eq!(k, k2);
        let out = mm(self.value(a), self.value(b), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, vec![m, n], Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = dims2(self.shape(x)).ok_or_else(|| Error::shape("transpose", self.shape(x), &[0, 0]))?;
        let v = self.value(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = v[i * c + j];
            }
        }
        let rg = self.rg(x);
        Ok(self.push(out, vec![c, r], Op::Transpose(x), rg))
    }

    // ── elementwise ───────────────────────────────────────────────────

    fn binary(&mut self, kind: Binary, name: &'static str, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(name, self.shape(a), self.shape(b)));
        }
        let (va, vb) = (self.value(a), self.value(b));
        let out: Vec<f64> = match kind {
            Binary::Add => va.iter().zip(vb).map(|(x, y)| x + y).collect(),
            Binary::Sub => va.iter().zip(vb).map(|(x, y)| x - y).collect(),
            Binary::Mul => va.iter().zip(vb).map(|(x, y)| x * y).collect(),
            Binary::Div => va.iter().zip(vb).map(|(x, y)| x / y).collect(),
        };
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, shape, Op::Binary(kind, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, "add", a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, "sub", a, b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, "hadamard", a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, "div", a, b)
    }

    /// `x + bias` with `bias` broadcast over the rows of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, c) = matrix_dims(self.shape(x));
        if self.value(bias).len() != c {
            return Err(Error::shape("add_row", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias);
        let out: Vec<f64> = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, v)| v + b[i % c])
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, shape, Op::AddRow(x, bias), rg))
    }

    /// `scale * x + offset`.
    pub fn affine(&mut self, x: Var, scale: f64, offset: f64) -> Var {
        let out = self.value(x).iter().map(|v| scale * v + offset).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(out, shape, Op::Affine(x, scale), rg)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.affine(x, s, 0.0)
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, x: Var, c: Vec<f64>) -> Result<Var> {
        if c.len() != self.value(x).len() {
            return Err(Error::shape("mul_const", self.shape(x), &[c.len()]));
        }
        let out = self.value(x).iter().zip(&c).map(|(a, b)| a * b).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(out, shape, Op::MulConst(x, c), rg))
    }

    fn unary(&mut self, kind: Unary, x: Var) -> Var {
        let f = |v: f64| match kind {
            Unary::Sigmoid => sigmoid(v),
            Unary::Relu => v.max(0.0),
            Unary::LeakyRelu(s) => {
                if v > 0.0 {
                    v
                } else {
                    s * v
                }
            }
            Unary::Tanh => v.tanh(),
            Unary::Exp => v.exp(),
            Unary::LnFloor(eps) => v.max(eps).ln(),
        };
        let out = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(out, shape, Op::Unary(kind, x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(Unary::Relu, x)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(Unary::LeakyRelu(slope), x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Unary::Tanh, x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(Unary::Exp, x)
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn ln_floor(&mut self, x: Var, floor: f64) -> Var {
        self.unary(Unary::LnFloor(floor), x)
    }

    // ── normalization / regularization ────────────────────────────────

    /// Max-shifted softmax along `axis`. Entries whose mask is `false` get
    /// probability zero; a group with every entry masked yields all zeros.
    pub fn softmax(&mut self, x: Var, axis: usize, mask: Option<&[bool]>) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Param(format!("softmax axis {axis} out of range for rank {}", shape.len())));
        }
        if let Some(m) = mask {
            if m.len() != self.value(x).len() {
                return Err(Error::shape("softmax mask", &shape, &[m.len()]));
            }
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let out = softmax_strided(self.value(x), outer, len, inner, mask);
        let rg = self.rg(x);
        Ok(self.push(out, shape, Op::Softmax { x, outer, len, inner }, rg))
    }

    /// Per-row normalization over the last axis followed by `gain * x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (rows, cols) = matrix_dims(self.shape(x));
        if self.value(gain).len() != cols || self.value(bias).len() != cols {
            return Err(Error::shape("layer_norm", self.shape(x), self.shape(gain)));
        }
        let xv = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        let mut xhat = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &xv[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let denom = var + eps;
            let is = if denom > 0.0 { 1.0 / denom.sqrt() } else { 0.0 };
            inv_std[r] = is;
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat[r * cols + c] = h;
                out[r * cols + c] = g[c] * h + b[c];
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            out,
            shape,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Inverted dropout. Identity in eval mode or at `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Param(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        self.mul_const(x, mask)
    }

    // ── attention ─────────────────────────────────────────────────────

    /// Batched multi-head scaled dot-product attention: per block and head,
    /// `softmax(Q Kᵀ / sqrt(d_head)) V`, heads concatenated along columns.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, spec: AttentionSpec) -> Result<Var> {
        let (qr, dk) = dims2(self.shape(q)).ok_or_else(|| Error::shape("attention", self.shape(q), &[0, 0]))?;
        let (kr, dk2) = dims2(self.shape(k)).ok_or_else(|| Error::shape("attention", self.shape(k), &[0, 0]))?;
        let (vr, dv) = dims2(self.shape(v)).ok_or_else(|| Error::shape("attention", self.shape(v), &[0, 0]))?;
        if dk != dk2 || kr != vr {
            return Err(Error::shape("attention", self.shape(q), self.shape(k)));
        }
        if qr != spec.blocks * spec.lq || kr != spec.blocks * spec.lk {
            return Err(Error::shape("attention blocks", &[spec.blocks, spec.lq, spec.lk], &[qr, kr]));
        }
        if spec.heads == 0 || dk % spec.heads != 0 || dv % spec.heads != 0 {
            return Err(Error::Config(format!(
                "attention width {dk} not divisible by {} heads",
                spec.heads
            )));
        }
        if let Some(m) = &spec.key_mask {
            if m.len() != kr {
                return Err(Error::shape("attention mask", &[kr], &[m.len()]));
            }
            for b in 0..spec.blocks {
                if !m[b * spec.lk..(b + 1) * spec.lk].iter().any(|&x| x) {
                    return Err(Error::Contract(format!("attention block {b} has every key masked")));
                }
            }
        }
        let (out, probs) = attention_forward(self.value(q), self.value(k), self.value(v), dk, dv, &spec);
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        Ok(self.push(out, vec![qr, dv], Op::Attention { q, k, v, spec, probs }, rg))
    }

    /// Attention probabilities of an attention node as `[blocks, heads, lq, lk]`.
    pub fn attention_probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    // ── structural ────────────────────────────────────────────────────

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = matrix_dims(self.shape(parts[0])).0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = matrix_dims(self.shape(p));
            if r != rows {
                return Err(Error::shape("concat_cols", self.shape(parts[0]), self.shape(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let v = self.value(p);
            for r in 0..rows {
                out[r * total + off..r * total + off + w].copy_from_slice(&v[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, vec![rows, total], Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = matrix_dims(self.shape(parts[0])).1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = matrix_dims(self.shape(p));
            if c != cols {
                return Err(Error::shape("concat_rows", self.shape(parts[0]), self.shape(p)));
            }
            out.extend_from_slice(self.value(p));
            rows += r;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, vec![rows, cols], Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Selects (and may repeat) rows; gradients scatter-add back.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (rows, cols) = matrix_dims(self.shape(x));
        if idx.is_empty() {
            return Err(Error::Param("gather_rows with no indices".into()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::Param(format!("row index {bad} out of range for {rows} rows")));
        }
        let v = self.value(x);
        let mut out = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            out.extend_from_slice(&v[i * cols..(i + 1) * cols]);
        }
        let rg = self.rg(x);
        Ok(self.push(out, vec![idx.len(), cols], Op::GatherRows(x, idx.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = matrix_dims(self.shape(x));
        if start >= end || end > cols {
            return Err(Error::Param(format!("column slice {start}..{end} of {cols} columns")));
        }
        let w = end - start;
        let v = self.value(x);
        let mut out = Vec::with_capacity(rows * w);
        for r in 0..rows {
            out.extend_from_slice(&v[r * cols + start..r * cols + end]);
        }
        let rg = self.rg(x);
        Ok(self.push(out, vec![rows, w], Op::SliceCols(x, start, end), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(Error::shape("reshape", self.shape(x), &shape));
        }
        let out = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(out, shape, Op::Reshape(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.rg(x);
        self.push(vec![s], vec![1], Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    // ── graph attention helpers ───────────────────────────────────────

    /// `out[i*m + j, h] = s[i, h] + t[j, h]` for `s: [n×H]`, `t: [m×H]`.
    pub fn pair_sum(&mut self, s: Var, t: Var) -> Result<Var> {
        let (n, h) = matrix_dims(self.shape(s));
        let (m, h2) = matrix_dims(self.shape(t));
        if h != h2 {
            return Err(Error::shape("pair_sum", self.shape(s), self.shape(t)));
        }
        let (sv, tv) = (self.value(s), self.value(t));
        let mut out = vec![0.0; n * m * h];
        for i in 0..n {
            for j in 0..m {
                let row = (i * m + j) * h;
                for c in 0..h {
                    out[row + c] = sv[i * h + c] + tv[j * h + c];
                }
            }
        }
        let rg = self.rg(s) || self.rg(t);
        Ok(self.push(out, vec![n * m, h], Op::PairSum { s, t, n, m }, rg))
    }

    /// Weighted neighbour aggregation. `alpha` is `[n*m × heads]`, `v` is
    /// `[m × d]`. With `Concat`, head `h` aggregates column block `h` of `v`
    /// and the result is `[n × d]`; with `Average`, every head aggregates all
    /// of `v` and the heads are averaged.
    pub fn pair_aggregate(&mut self, alpha: Var, v: Var, n: usize, heads: usize, merge: HeadMerge) -> Result<Var> {
        let (m, d) = matrix_dims(self.shape(v));
        let (ar, ah) = matrix_dims(self.shape(alpha));
        if ar != n * m || ah != heads || (merge == HeadMerge::Concat && d % heads != 0) {
            return Err(Error::shape("pair_aggregate", self.shape(alpha), self.shape(v)));
        }
        let (av, vv) = (self.value(alpha), self.value(v));
        let mut out = vec![0.0; n * d];
        match merge {
            HeadMerge::Concat => {
                let dh = d / heads;
                for i in 0..n {
                    for j in 0..m {
                        for hh in 0..heads {
                            let a = av[(i * m + j) * heads + hh];
                            if a == 0.0 {
                                continue;
                            }
                            for c in hh * dh..(hh + 1) * dh {
                                out[i * d + c] += a * vv[j * d + c];
                            }
                        }
                    }
                }
            }
            HeadMerge::Average => {
                let inv = 1.0 / heads as f64;
                for i in 0..n {
                    for j in 0..m {
                        let a: f64 = av[(i * m + j) * heads..(i * m + j + 1) * heads].iter().sum::<f64>() * inv;
                        if a == 0.0 {
                            continue;
                        }
                        for c in 0..d {
                            out[i * d + c] += a * vv[j * d + c];
                        }
                    }
                }
            }
        }
        let rg = self.rg(alpha) || self.rg(v);
        Ok(self.push(
            out,
            vec![n, d],
            Op::PairAggregate {
                alpha,
                v,
                n,
                m,
                heads,
                merge,
            },
            rg,
        ))
    }

    // ── reverse pass ──────────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar `loss`. Gradients of values used more
    /// than once are summed.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let acc = |grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(e, c)| *e += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims2(self.shape(*a)).unwrap();
                let n = self.shape(*b)[1];
                if self.rg(*a) {
                    acc(grads, *a, mm_bt(g, self.value(*b), m, n, k));
                }
                if self.rg(*b) {
                    acc(grads, *b, mm_at(self.value(*a), g, m, k, n));
                }
            }
            Op::Binary(kind, a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (ga, gb): (Vec<f64>, Vec<f64>) = match kind {
                    Binary::Add => (g.to_vec(), g.to_vec()),
                    Binary::Sub => (g.to_vec(), g.iter().map(|x| -x).collect()),
                    Binary::Mul => (
                        g.iter().zip(vb).map(|(g, y)| g * y).collect(),
                        g.iter().zip(va).map(|(g, x)| g * x).collect(),
                    ),
                    Binary::Div => (
                        g.iter().zip(vb).map(|(g, y)| g / y).collect(),
                        g.iter()
                            .zip(va.iter().zip(vb))
                            .map(|(g, (x, y))| -g * x / (y * y))
                            .collect(),
                    ),
                };
                if self.rg(*a) {
                    acc(grads, *a, ga);
                }
                if self.rg(*b) {
                    acc(grads, *b, gb);
                }
            }
            Op::AddRow(x, b) => {
                if self.rg(*x) {
                    acc(grads, *x, g.to_vec());
                }
                if self.rg(*b) {
                    let c = self.value(*b).len();
                    let mut gb = vec![0.0; c];
                    for (i, gi) in g.iter().enumerate() {
                        gb[i % c] += gi;
                    }
                    acc(grads, *b, gb);
                }
            }
            Op::Affine(x, s) => acc(grads, *x, g.iter().map(|v| v * s).collect()),
            Op::MulConst(x, c) => acc(grads, *x, g.iter().zip(c).map(|(a, b)| a * b).collect()),
            Op::Unary(kind, x) => {
                let xv = self.value(*x);
                let y = &node.value;
                let gx: Vec<f64> = match kind {
                    Unary::Sigmoid => (0..g.len()).map(|i| g[i] * y[i] * (1.0 - y[i])).collect(),
                    Unary::Relu => (0..g.len()).map(|i| if xv[i] > 0.0 { g[i] } else { 0.0 }).collect(),
                    Unary::LeakyRelu(s) => (0..g.len()).map(|i| if xv[i] > 0.0 { g[i] } else { s * g[i] }).collect(),
                    Unary::Tanh => (0..g.len()).map(|i| g[i] * (1.0 - y[i] * y[i])).collect(),
                    Unary::Exp => (0..g.len()).map(|i| g[i] * y[i]).collect(),
                    Unary::LnFloor(eps) => (0..g.len())
                        .map(|i| if xv[i] > *eps { g[i] / xv[i] } else { 0.0 })
                        .collect(),
                };
                acc(grads, *x, gx);
            }
            Op::Softmax { x, outer, len, inner } => {
                let y = &node.value;
                let mut gx = vec![0.0; y.len()];
                for o in 0..*outer {
                    for i in 0..*inner {
                        let idx = |a: usize| (o * len + a) * inner + i;
                        let dot: f64 = (0..*len).map(|a| g[idx(a)] * y[idx(a)]).sum();
                        for a in 0..*len {
                            gx[idx(a)] = y[idx(a)] * (g[idx(a)] - dot);
                        }
                    }
                }
                acc(grads, *x, gx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let gv = self.value(*gain);
                let cols = gv.len();
                let rows = xhat.len() / cols;
                if self.rg(*x) {
                    let mut gx = vec![0.0; xhat.len()];
                    for r in 0..rows {
                        let base = r * cols;
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        for c in 0..cols {
                            let d = g[base + c] * gv[c];
                            sum_d += d;
                            sum_dx += d * xhat[base + c];
                        }
                        let n = cols as f64;
                        for c in 0..cols {
                            let d = g[base + c] * gv[c];
                            gx[base + c] = inv_std[r] / n * (n * d - sum_d - xhat[base + c] * sum_dx);
                        }
                    }
                    acc(grads, *x, gx);
                }
                if self.rg(*gain) {
                    let mut gg = vec![0.0; cols];
                    for (i, gi) in g.iter().enumerate() {
                        gg[i % cols] += gi * xhat[i];
                    }
                    acc(grads, *gain, gg);
                }
                if self.rg(*bias) {
                    let mut gb = vec![0.0; cols];
                    for (i, gi) in g.iter().enumerate() {
                        gb[i % cols] += gi;
                    }
                    acc(grads, *bias, gb);
                }
            }
            Op::Attention { q, k, v, spec, probs } => {
                let dk = self.shape(*q)[1];
                let dv = self.shape(*v)[1];
                let (gq, gk, gv) = attention_backward(
                    self.value(*q),
                    self.value(*k),
                    self.value(*v),
                    probs,
                    g,
                    dk,
                    dv,
                    spec,
                );
                if self.rg(*q) {
                    acc(grads, *q, gq);
                }
                if self.rg(*k) {
                    acc(grads, *k, gk);
                }
                if self.rg(*v) {
                    acc(grads, *v, gv);
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.shape[1];
                let rows = node.shape[0];
                let mut off = 0;
                for &p in parts {
                    let w = matrix_dims(self.shape(p)).1;
                    if self.rg(p) {
                        let mut gp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            gp.extend_from_slice(&g[r * total + off..r * total + off + w]);
                        }
                        acc(grads, p, gp);
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.rg(p) {
                        acc(grads, p, g[off..off + n].to_vec());
                    }
                    off += n;
                }
            }
            Op::GatherRows(x, idx) => {
                let cols = node.shape[1];
                let mut gx = vec![0.0; self.value(*x).len()];
                for (o, &i) in idx.iter().enumerate() {
                    for c in 0..cols {
                        gx[i * cols + c] += g[o * cols + c];
                    }
                }
                acc(grads, *x, gx);
            }
            Op::SliceCols(x, start, end) => {
                let (rows, cols) = matrix_dims(self.shape(*x));
                let w = end - start;
                let mut gx = vec![0.0; rows * cols];
                for r in 0..rows {
                    gx[r * cols + start..r * cols + end].copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                acc(grads, *x, gx);
            }
            Op::Transpose(x) => {
                let (r, c) = dims2(self.shape(*x)).unwrap();
                let mut gx = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        gx[i * c + j] = g[j * r + i];
                    }
                }
                acc(grads, *x, gx);
            }
            Op::Reshape(x) => acc(grads, *x, g.to_vec()),
            Op::Sum(x) => acc(grads, *x, vec![g[0]; self.value(*x).len()]),
            Op::PairSum { s, t, n, m } => {
                let h = node.shape[1];
                let mut gs = vec![0.0; n * h];
                let mut gt = vec![0.0; m * h];
                for i in 0..*n {
                    for j in 0..*m {
                        let row = (i * m + j) * h;
                        for c in 0..h {
                            gs[i * h + c] += g[row + c];
                            gt[j * h + c] += g[row + c];
                        }
                    }
                }
                if self.rg(*s) {
                    acc(grads, *s, gs);
                }
                if self.rg(*t) {
                    acc(grads, *t, gt);
                }
            }
            Op::PairAggregate {
                alpha,
                v,
                n,
                m,
                heads,
                merge,
            } => {
                let (av, vv) = (self.value(*alpha), self.value(*v));
                let d = matrix_dims(self.shape(*v)).1;
                let mut ga = vec![0.0; av.len()];
                let mut gv = vec![0.0; vv.len()];
                match merge {
                    HeadMerge::Concat => {
                        let dh = d / heads;
                        for i in 0..*n {
                            for j in 0..*m {
                                for hh in 0..*heads {
                                    let a = av[(i * m + j) * heads + hh];
                                    let mut dot = 0.0;
                                    for c in hh * dh..(hh + 1) * dh {
                                        dot += g[i * d + c] * vv[j * d + c];
                                        gv[j * d + c] += a * g[i * d + c];
                                    }
                                    ga[(i * m + j) * heads + hh] = dot;
                                }
                            }
                        }
                    }
                    HeadMerge::Average => {
                        let inv = 1.0 / *heads as f64;
                        for i in 0..*n {
                            for j in 0..*m {
                                let row = (i * m + j) * heads;
                                let a: f64 = av[row..row + heads].iter().sum::<f64>() * inv;
                                let mut dot = 0.0;
                                for c in 0..d {
                                    dot += g[i * d + c] * vv[j * d + c];
                                    gv[j * d + c] += a * g[i * d + c];
                                }
                                for hh in 0..*heads {
                                    ga[row + hh] = dot * inv;
                                }
                            }
                        }
                    }
                }
                if self.rg(*alpha) {
                    acc(grads, *alpha, ga);
                }
                if self.rg(*v) {
                    acc(grads, *v, gv);
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_strided(x: &[f64], outer: usize, len: usize, inner: usize, mask: Option<&[bool]>) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let valid = |i: usize| mask.is_none_or(|m| m[i]);
    for o in 0..outer {
        for i in 0..inner {
            let idx = |a: usize| (o * len + a) * inner + i;
            let mut max = f64::NEG_INFINITY;
            for a in 0..len {
                if valid(idx(a)) && x[idx(a)] > max {
                    max = x[idx(a)];
                }
            }
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for a in 0..len {
                if valid(idx(a)) {
                    let e = (x[idx(a)] - max).exp();
                    out[idx(a)] = e;
                    total += e;
                }
            }
            for a in 0..len {
                out[idx(a)] /= total;
            }
        }
    }
    out
}

fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a · bᵀ` for `a: [m×n]`, `b: [k×n]`.
fn mm_bt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            out[i * k + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · c` for `a: [m×k]`, `c: [m×n]`.
fn mm_at(a: &[f64], c: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let crow = &c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, cv) in orow.iter_mut().zip(crow) {
                *o += av * cv;
            }
        }
    }
    out
}

fn attention_forward(q: &[f64], k: &[f64], v: &[f64], dk: usize, dv: usize, spec: &AttentionSpec) -> (Vec<f64>, Vec<f64>) {
    let AttentionSpec {
        blocks,
        lq,
        lk,
        heads,
        ref key_mask,
    } = *spec;
    let dh = dk / heads;
    let dvh = dv / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; blocks * lq * dv];
    let mut probs = vec![0.0; blocks * heads * lq * lk];
    let mut logits = vec![0.0; lk];
    for b in 0..blocks {
        for h in 0..heads {
            for i in 0..lq {
                let qrow = &q[(b * lq + i) * dk + h * dh..(b * lq + i) * dk + (h + 1) * dh];
                let mut max = f64::NEG_INFINITY;
                for j in 0..lk {
                    let krow_i = b * lk + j;
                    if key_mask.as_ref().is_some_and(|m| !m[krow_i]) {
                        logits[j] = f64::NEG_INFINITY;
                        continue;
                    }
                    let krow = &k[krow_i * dk + h * dh..krow_i * dk + (h + 1) * dh];
                    let s = qrow.iter().zip(krow).map(|(a, c)| a * c).sum::<f64>() * scale;
                    logits[j] = s;
                    max = max.max(s);
                }
                let p = &mut probs[((b * heads + h) * lq + i) * lk..((b * heads + h) * lq + i + 1) * lk];
                let mut total = 0.0;
                for j in 0..lk {
                    if logits[j] == f64::NEG_INFINITY {
                        p[j] = 0.0;
                    } else {
                        p[j] = (logits[j] - max).exp();
                        total += p[j];
                    }
                }
                for pj in p.iter_mut() {
                    *pj /= total;
                }
                let orow = &mut out[(b * lq + i) * dv + h * dvh..(b * lq + i) * dv + (h + 1) * dvh];
                for j in 0..lk {
                    if p[j] == 0.0 {
                        continue;
                    }
                    let vrow = &v[(b * lk + j) * dv + h * dvh..(b * lk + j) * dv + (h + 1) * dvh];
                    for (o, vv) in orow.iter_mut().zip(vrow) {
                        *o += p[j] * vv;
                    }
                }
            }
        }
    }
    (out, probs)
}

#[allow(clippy::too_many_arguments)]
fn attention_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[f64],
    g: &[f64],
    dk: usize,
    dv: usize,
    spec: &AttentionSpec,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let AttentionSpec {
        blocks, lq, lk, heads, ..
    } = *spec;
    let dh = dk / heads;
    let dvh = dv / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut gq = vec![0.0; q.len()];
    let mut gk = vec![0.0; k.len()];
    let mut gv = vec![0.0; v.len()];
    let mut dp = vec![0.0; lk];
    for b in 0..blocks {
        for h in 0..heads {
            for i in 0..lq {
                let p = &probs[((b * heads + h) * lq + i) * lk..((b * heads + h) * lq + i + 1) * lk];
                let grow = &g[(b * lq + i) * dv + h * dvh..(b * lq + i) * dv + (h + 1) * dvh];
                let mut dot = 0.0;
                for j in 0..lk {
                    let vr = (b * lk + j) * dv + h * dvh;
                    let vrow = &v[vr..vr + dvh];
                    dp[j] = grow.iter().zip(vrow).map(|(a, c)| a * c).sum();
                    dot += dp[j] * p[j];
                    if p[j] != 0.0 {
                        for (c, gg) in grow.iter().enumerate() {
                            gv[vr + c] += p[j] * gg;
                        }
                    }
                }
                let qr = (b * lq + i) * dk + h * dh;
                for j in 0..lk {
                    if p[j] == 0.0 {
                        continue;
                    }
                    let ds = p[j] * (dp[j] - dot) * scale;
                    let kr = (b * lk + j) * dk + h * dh;
                    for c in 0..dh {
                        gq[qr + c] += ds * k[kr + c];
                        gk[kr + c] += ds * q[qr + c];
                    }
                }
            }
        }
    }
    (gq, gk, gv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut t = Tape::new();
        let i = t.constant(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = t.constant(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = t.matmul(i, b).unwrap();
        assert_eq!(t.value(c), &[3.0, 4.0, 5.0, 6.0]);

        let a = t.constant(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let b = t.constant(vec![2, 1], vec![3.0, 4.0]).unwrap();
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(vec![2, 3], vec![0.0; 6]).unwrap();
        let b = t.constant(vec![2, 2], vec![0.0; 4]).unwrap();
        let msg = t.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2×3]") && msg.contains("[2×2]"), "{msg}");
    }

    #[test]
    fn softmax_examples() {
        let mut t = Tape::new();
        let x = t.constant(vec![2], vec![0.0, 0.0]).unwrap();
        let y = t.softmax(x, 0, None).unwrap();
        assert_eq!(t.value(y), &[0.5, 0.5]);

        let x = t.constant(vec![2], vec![1000.0, 0.0]).unwrap();
        let y = t.softmax(x, 0, None).unwrap();
        assert!(t.value(y).iter().all(|v| v.is_finite()));
        assert!((t.value(y)[0] - 1.0).abs() < 1e-12 && t.value(y)[1] < 1e-300);

        let x = t.constant(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = t.softmax(x, 0, None).unwrap();
        assert!(close(t.value(y), &[0.09003, 0.24473, 0.66524], 1e-5));
    }

    #[test]
    fn softmax_along_leading_axis() {
        let mut t = Tape::new();
        let x = t.constant(vec![2, 2], vec![0.0, 1.0, 0.0, 3.0]).unwrap();
        let y = t.softmax(x, 0, None).unwrap();
        let v = t.value(y);
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[2] - 0.5).abs() < 1e-15);
        assert!((v[1] + v[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fully_masked_softmax_group_is_zero() {
        let mut t = Tape::new();
        let x = t.constant(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = t.softmax(x, 1, Some(&[false, false, true, false])).unwrap();
        assert_eq!(t.value(y), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn layer_norm_examples() {
        let mut t = Tape::new();
        let g = t.constant(vec![3], vec![1.0; 3]).unwrap();
        let b = t.constant(vec![3], vec![0.0; 3]).unwrap();
        let x = t.constant(vec![1, 3], vec![5.0; 3]).unwrap();
        let y = t.layer_norm(x, g, b, 1e-5).unwrap();
        assert_eq!(t.value(y), &[0.0, 0.0, 0.0]);

        let g = t.constant(vec![2], vec![1.0; 2]).unwrap();
        let b = t.constant(vec![2], vec![0.0; 2]).unwrap();
        let x = t.constant(vec![1, 2], vec![1.0, 3.0]).unwrap();
        let y = t.layer_norm(x, g, b, 0.0).unwrap();
        assert_eq!(t.value(y), &[-1.0, 1.0]);
    }

    #[test]
    fn elementwise_examples() {
        let mut t = Tape::new();
        let z = t.param(vec![1], vec![0.0]).unwrap();
        let s = t.sigmoid(z);
        assert_eq!(t.value(s), &[0.5]);
        let gr = t.backward(s).unwrap();
        assert_eq!(gr.get(z).unwrap(), &[0.25]);

        let a = t.constant(vec![2], vec![1.0, 2.0]).unwrap();
        let b = t.constant(vec![2], vec![3.0, 4.0]).unwrap();
        let h = t.mul(a, b).unwrap();
        assert_eq!(t.value(h), &[3.0, 8.0]);
        let c = t.constant(vec![3], vec![0.0; 3]).unwrap();
        assert!(t.add(a, c).is_err());
    }

    #[test]
    fn dropout_modes() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut t = Tape::new();
        let x = t.constant(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.dropout(x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(t.dropout(x, 0.1, &mut rng, false).unwrap(), x);
        assert!(t.dropout(x, 1.0, &mut rng, true).is_err());

        let n = 100_000;
        let ones = t.constant(vec![n], vec![1.0; n]).unwrap();
        let y = t.dropout(ones, 0.5, &mut rng, true).unwrap();
        let mean = t.value(y).iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn backward_basics() {
        let mut t = Tape::new();
        let x = t.param(vec![3], vec![1.0, -2.0, 5.0]).unwrap();
        let s = t.sum(x);
        assert_eq!(t.backward(s).unwrap().get(x).unwrap(), &[1.0, 1.0, 1.0]);

        let mut t = Tape::new();
        let x = t.param(vec![2], vec![1.0, 2.0]).unwrap();
        let sq = t.mul(x, x).unwrap();
        let s = t.sum(sq);
        assert_eq!(t.backward(s).unwrap().get(x).unwrap(), &[2.0, 4.0]);

        let err = t.backward(sq).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn single_key_attention_returns_value() {
        let mut t = Tape::new();
        let q = t.constant(vec![1, 4], vec![0.3, -1.0, 2.0, 0.5]).unwrap();
        let k = t.constant(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let v = t.constant(vec![1, 4], vec![7.0, 8.0, 9.0, 10.0]).unwrap();
        let spec = AttentionSpec {
            blocks: 1,
            lq: 1,
            lk: 1,
            heads: 2,
            key_mask: None,
        };
        let o = t.attention(q, k, v, spec).unwrap();
        assert_eq!(t.value(o), &[7.0, 8.0, 9.0, 10.0]);
    }

    #[test]
    fn uniform_attention_averages_values() {
        let mut t = Tape::new();
        let q = t.constant(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let k = t.constant(vec![3, 2], vec![0.0, 1.0, 0.0, -2.0, 0.0, 5.0]).unwrap();
        let v = t.constant(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0]).unwrap();
        let spec = AttentionSpec {
            blocks: 1,
            lq: 1,
            lk: 3,
            heads: 1,
            key_mask: None,
        };
        let o = t.attention(q, k, v, spec).unwrap();
        assert!(close(t.value(o), &[3.0, 5.0], 1e-12));
    }

    #[test]
    fn attention_rejects_indivisible_heads_and_all_masked_block() {
        let mut t = Tape::new();
        let q = t.constant(vec![2, 3], vec![0.0; 6]).unwrap();
        let spec = AttentionSpec {
            blocks: 1,
            lq: 2,
            lk: 2,
            heads: 2,
            key_mask: None,
        };
        assert!(matches!(t.attention(q, q, q, spec).unwrap_err(), Error::Config(_)));
        let spec = AttentionSpec {
            blocks: 1,
            lq: 2,
            lk: 2,
            heads: 1,
            key_mask: Some(vec![false, false]),
        };
        assert!(matches!(t.attention(q, q, q, spec).unwrap_err(), Error::Contract(_)));
    }
}
