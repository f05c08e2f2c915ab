//! Reverse-mode autodiff on a linear tape.
//!
//! Every operation appends a node holding its forward value and enough
//! context to compute vector-Jacobian products. [`Tape::backward`] walks the
//! nodes in reverse once; a second call without [`Tape::reset`] is an error.

use std::collections::{BTreeMap, HashMap};

use super::params::ParamStore;
use super::tensor::{add_into, matmul, matmul_nt, matmul_tn_acc, Tensor};
use crate::error::{Error, Result};

const GELU_C: f32 = 0.797_884_6; // sqrt(2 / pi)
const GELU_K: f32 = 0.044_715;
pub const LAYER_NORM_EPS: f32 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Sum(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f32>,
        rstd: Vec<f32>,
    },
    Softmax(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    FuseSpans {
        base: Var,
        items: Var,
        columns: Vec<Vec<usize>>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<Option<u32>>,
        probs: Vec<f32>,
        count: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Clears all nodes so the tape can record a new computation.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.params.clear();
        self.backward_done = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A trainable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Binds a named parameter from `store`, once per tape.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = store
            .get(name)
            .ok_or_else(|| Error::Validation(format!("missing parameter {name:?}")))?
            .clone();
        let v = self.leaf(t);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Gradients of every bound parameter, keyed by name.
    pub fn param_grads(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .filter_map(|(name, &v)| grads.get(v).map(|g| (name.clone(), g.clone())))
            .collect()
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize)> {
        let s = self.value(v).shape();
        match s.len() {
            2 => Ok((s[0], s[1])),
            _ => Err(Error::Shape(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (k2, n) = self.dims2(b)?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let out = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let ng = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), ng))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (n, k2) = self.dims2(b)?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul_nt {m}x{k} by ({n}x{k2})^T")));
        }
        let out = matmul_nt(self.value(a).data(), self.value(b).data(), m, k, n);
        let ng = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMulNT(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::Shape(format!("add {:?} + {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), ng))
    }

    /// Adds vector `b` to every row of matrix `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (m, n) = self.dims2(x)?;
        if self.value(b).numel() != n {
            return Err(Error::Shape(format!("row bias of {} for {m}x{n}", self.value(b).numel())));
        }
        let bias = self.value(b).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            add_into(row, bias);
        }
        let ng = self.needs(&[x, b]);
        Ok(self.push(Tensor::new(vec![m, n], data)?, Op::AddRow(x, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::Shape(format!("mul {:?} * {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        let v = self.value(x);
        let t = Tensor::new(v.shape().to_vec(), v.data().iter().map(|a| a * s).collect())
            .expect("same shape");
        let ng = self.needs(&[x]);
        self.push(t, Op::Scale(x, s), ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f32 = self.value(x).data().iter().sum();
        let ng = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v
            .data()
            .iter()
            .map(|&a| 0.5 * a * (1.0 + (GELU_C * (a + GELU_K * a * a * a)).tanh()))
            .collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let ng = self.needs(&[x]);
        self.push(t, Op::Gelu(x), ng)
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims2(x)?;
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        if g.len() != n || b.len() != n {
            return Err(Error::Shape(format!("layer norm params for width {n}")));
        }
        let xs = self.value(x).data();
        let mut xhat = vec![0.0f32; m * n];
        let mut rstd = vec![0.0f32; m];
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            let row = &xs[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f32>() / n as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n as f32;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[i] = r;
            for j in 0..n {
                let h = (row[j] - mean) * r;
                xhat[i * n + j] = h;
                out[i * n + j] = h * g[j] + b[j];
            }
        }
        let ng = self.needs(&[x, gain, bias]);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            ng,
        ))
    }

    /// Row-wise softmax. Columns where `key_mask` is false get probability 0;
    /// a row with no visible column is all zeros.
    pub fn softmax_rows(&mut self, x: Var, key_mask: Option<&[bool]>) -> Result<Var> {
        let (m, n) = self.dims2(x)?;
        if let Some(mask) = key_mask {
            if mask.len() != n {
                return Err(Error::Shape(format!("key mask of {} for {n} keys", mask.len())));
            }
        }
        let visible = |j: usize| key_mask.is_none_or(|mk| mk[j]);
        let xs = self.value(x).data();
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            let row = &xs[i * n..(i + 1) * n];
            let max = (0..n)
                .filter(|&j| visible(j))
                .map(|j| row[j])
                .fold(f32::NEG_INFINITY, f32::max);
            if max == f32::NEG_INFINITY {
                continue;
            }
            let mut z = 0.0f32;
            for j in 0..n {
                if visible(j) {
                    let e = (row[j] - max).exp();
                    out[i * n + j] = e;
                    z += e;
                }
            }
            for v in &mut out[i * n..(i + 1) * n] {
                *v /= z;
            }
        }
        let ng = self.needs(&[x]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::Softmax(x), ng))
    }

    /// Rows `ids` of `table`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, h) = self.dims2(table)?;
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * h);
        for &id in ids {
            if id >= v {
                return Err(Error::Shape(format!("gather index {id} out of {v} rows")));
            }
            out.extend_from_slice(&src[id * h..(id + 1) * h]);
        }
        let ng = self.needs(&[table]);
        Ok(self.push(
            Tensor::new(vec![ids.len(), h], out)?,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims2(x)?;
        if start + len > n {
            return Err(Error::Shape(format!("columns {start}..{} of {n}", start + len)));
        }
        let xs = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&xs[i * n + start..i * n + start + len]);
        }
        let ng = self.needs(&[x]);
        Ok(self.push(Tensor::new(vec![m, len], out)?, Op::SliceCols { x, start }, ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.dims2(parts[0])?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.dims2(p)?;
            if pm != m {
                return Err(Error::Shape(format!("concat rows {pm} vs {m}")));
            }
            widths.push(pn);
        }
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let ng = self.needs(parts);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (m, n) = self.dims2(x)?;
        let xs = self.value(x).data();
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if r >= m {
                return Err(Error::Shape(format!("row {r} of {m}")));
            }
            out.extend_from_slice(&xs[r * n..(r + 1) * n]);
        }
        let ng = self.needs(&[x]);
        Ok(self.push(
            Tensor::new(vec![rows.len(), n], out)?,
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
            ng,
        ))
    }

    /// `out[n] = base[n] + sum over t with n in columns[t] of items[t]`.
    ///
    /// This is the sparse form of `base + M * items` for a 0/1 matrix `M`
    /// given column-wise.
    pub fn fuse_spans(&mut self, base: Var, items: Var, columns: &[Vec<usize>]) -> Result<Var> {
        let (n, h) = self.dims2(base)?;
        let (t, h2) = self.dims2(items)?;
        if h != h2 || t != columns.len() {
            return Err(Error::Shape(format!(
                "fusion of {n}x{h} with {t}x{h2} over {} columns",
                columns.len()
            )));
        }
        let mut out = self.value(base).data().to_vec();
        let it = self.value(items).data();
        for (c, rows) in columns.iter().enumerate() {
            for &r in rows {
                if r >= n {
                    return Err(Error::Shape(format!("fusion row {r} of {n}")));
                }
                add_into(&mut out[r * h..(r + 1) * h], &it[c * h..(c + 1) * h]);
            }
        }
        let ng = self.needs(&[base, items]);
        Ok(self.push(
            Tensor::new(vec![n, h], out)?,
            Op::FuseSpans {
                base,
                items,
                columns: columns.to_vec(),
            },
            ng,
        ))
    }

    /// Mean token cross-entropy over rows whose label is `Some`.
    /// With no labeled rows the loss is exactly 0.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[Option<u32>]) -> Result<Var> {
        let (m, v) = self.dims2(logits)?;
        if labels.len() != m {
            return Err(Error::Shape(format!("{} labels for {m} rows", labels.len())));
        }
        let xs = self.value(logits).data();
        let mut probs = vec![0.0f32; m * v];
        let mut total = 0.0f64;
        let mut count = 0;
        for (i, label) in labels.iter().enumerate() {
            let Some(label) = *label else { continue };
            let label = label as usize;
            if label >= v {
                return Err(Error::Shape(format!("label {label} for {v} classes")));
            }
            let row = &xs[i * v..(i + 1) * v];
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let z: f32 = row.iter().map(|x| (x - max).exp()).sum();
            for j in 0..v {
                probs[i * v + j] = (row[j] - max).exp() / z;
            }
            total += (z.ln() + max - row[label]) as f64;
            count += 1;
        }
        let loss = if count == 0 { 0.0 } else { (total / count as f64) as f32 };
        let ng = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
                count,
            },
            ng,
        ))
    }

    /// Back-propagates from scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads: grads
                .into_iter()
                .zip(&self.nodes)
                .map(|(g, node)| {
                    g.filter(|_| node.needs_grad).map(|g| {
                        Tensor::new(node.value.shape().to_vec(), g).expect("gradient shape")
                    })
                })
                .collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].needs_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f32])| {
            if !nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (nodes[a.0].value.rows(), nodes[a.0].value.cols());
                let n = nodes[b.0].value.cols();
                if wants(*a) {
                    // dA = dC * B^T
                    let da = matmul_nt(g, nodes[b.0].value.data(), m, n, k);
                    acc(*a, &mut |s| add_into(s, &da));
                }
                // dB = A^T * dC
                acc(*b, &mut |s| matmul_tn_acc(s, nodes[a.0].value.data(), g, m, k, n));
            }
            Op::MatMulNT(a, b) => {
                let (m, k) = (nodes[a.0].value.rows(), nodes[a.0].value.cols());
                let n = nodes[b.0].value.rows();
                if wants(*a) {
                    // dA = dC * B
                    let da = matmul(g, nodes[b.0].value.data(), m, n, k);
                    acc(*a, &mut |s| add_into(s, &da));
                }
                // dB = dC^T * A
                acc(*b, &mut |s| matmul_tn_acc(s, g, nodes[a.0].value.data(), m, n, k));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| add_into(s, g));
            }
            Op::AddRow(x, b) => {
                acc(*x, &mut |s| add_into(s, g));
                let n = nodes[b.0].value.numel();
                acc(*b, &mut |s| {
                    for row in g.chunks(n) {
                        add_into(s, row);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * vb[i];
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * va[i];
                    }
                });
            }
            Op::Scale(x, c) => acc(*x, &mut |s| {
                for (o, gi) in s.iter_mut().zip(g) {
                    *o += c * gi;
                }
            }),
            Op::Sum(x) => acc(*x, &mut |s| {
                for o in s.iter_mut() {
                    *o += g[0];
                }
            }),
            Op::Gelu(x) => {
                let xs = nodes[x.0].value.data();
                acc(*x, &mut |s| {
                    for i in 0..s.len() {
                        let a = xs[i];
                        let t = (GELU_C * (a + GELU_K * a * a * a)).tanh();
                        let d = 0.5 * (1.0 + t)
                            + 0.5 * a * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * a * a);
                        s[i] += g[i] * d;
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let n = nodes[gain.0].value.numel();
                let gv = nodes[gain.0].value.data();
                acc(*gain, &mut |s| {
                    for (gr, hr) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            s[j] += gr[j] * hr[j];
                        }
                    }
                });
                acc(*bias, &mut |s| {
                    for gr in g.chunks(n) {
                        add_into(s, gr);
                    }
                });
                acc(*x, &mut |s| {
                    let mut dh = vec![0.0f32; n];
                    for (i, (gr, hr)) in g.chunks(n).zip(xhat.chunks(n)).enumerate() {
                        let mut sum_dh = 0.0f32;
                        let mut sum_dh_h = 0.0f32;
                        for j in 0..n {
                            dh[j] = gr[j] * gv[j];
                            sum_dh += dh[j];
                            sum_dh_h += dh[j] * hr[j];
                        }
                        let r = rstd[i] / n as f32;
                        let out = &mut s[i * n..(i + 1) * n];
                        for j in 0..n {
                            out[j] += r * (n as f32 * dh[j] - sum_dh - hr[j] * sum_dh_h);
                        }
                    }
                });
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let n = node.value.cols();
                acc(*x, &mut |s| {
                    for (i, (gr, yr)) in g.chunks(n).zip(y.chunks(n)).enumerate() {
                        let dot: f32 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            s[i * n + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::Gather { table, ids } => {
                let h = nodes[table.0].value.cols();
                acc(*table, &mut |s| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut s[id * h..(id + 1) * h], &g[r * h..(r + 1) * h]);
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let n = nodes[x.0].value.cols();
                let len = node.value.cols();
                acc(*x, &mut |s| {
                    for (i, gr) in g.chunks(len).enumerate() {
                        add_into(&mut s[i * n + start..i * n + start + len], gr);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let n = node.value.cols();
                let mut off = 0;
                for p in parts {
                    let w = nodes[p.0].value.cols();
                    acc(*p, &mut |s| {
                        for (i, gr) in g.chunks(n).enumerate() {
                            add_into(&mut s[i * w..(i + 1) * w], &gr[off..off + w]);
                        }
                    });
                    off += w;
                }
            }
            Op::SelectRows { x, rows } => {
                let n = node.value.cols();
                acc(*x, &mut |s| {
                    for (i, &r) in rows.iter().enumerate() {
                        add_into(&mut s[r * n..(r + 1) * n], &g[i * n..(i + 1) * n]);
                    }
                });
            }
            Op::FuseSpans {
                base,
                items,
                columns,
            } => {
                let h = node.value.cols();
                acc(*base, &mut |s| add_into(s, g));
                acc(*items, &mut |s| {
                    for (c, rows) in columns.iter().enumerate() {
                        for &r in rows {
                            add_into(&mut s[c * h..(c + 1) * h], &g[r * h..(r + 1) * h]);
                        }
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
                count,
            } => {
                if *count == 0 {
                    return;
                }
                let v = nodes[logits.0].value.cols();
                let scale = g[0] / *count as f32;
                acc(*logits, &mut |s| {
                    for (i, label) in labels.iter().enumerate() {
                        let Some(label) = *label else { continue };
                        for j in 0..v {
                            s[i * v + j] += scale * probs[i * v + j];
                        }
                        s[i * v + label as usize] -= scale;
                    }
                });
            }
        }
    }
}
