//! Tape-based reverse-mode automatic differentiation over shape-tagged
//! f64 arrays. The op set is exactly what the sequence models need; every
//! differentiable op has a hand-written adjoint that is validated against
//! central finite differences in the test suite.

use crate::error::{CoreError, Result};
use crate::nn::params::ParamStore;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tid(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    /// Leaf mirroring a parameter-store entry.
    Param(usize),
    Add(Tid, Tid),
    Sub(Tid, Tid),
    Mul(Tid, Tid),
    Scale(Tid, f64),
    /// `[r, c] + [c]` broadcast over rows.
    AddBias(Tid, Tid),
    Matmul(Tid, Tid),
    Relu(Tid),
    /// Row-wise softmax; rows may contain `-inf` entries (masked out).
    SoftmaxRows(Tid),
    /// Mean over rows: `[r, c] -> [1, c]`.
    MeanRows(Tid),
    SumAll(Tid),
    MeanAll(Tid),
    Transpose(Tid),
    Reshape(Tid),
    ConcatRows(Vec<Tid>),
    SliceRows { input: Tid, start: usize },
    ConcatCols(Vec<Tid>),
    BatchNormTrain { x: Tid, gamma: Tid, beta: Tid, mu: Vec<f64>, inv_std: Vec<f64> },
    BatchNormEval { x: Tid, gamma: Tid, beta: Tid, mu: Vec<f64>, inv_std: Vec<f64> },
    LayerNorm { x: Tid, gamma: Tid, beta: Tid, mu: Vec<f64>, inv_std: Vec<f64> },
    /// Mean logistic loss against constant 0/1 targets.
    BceWithLogits { logits: Tid, targets: Vec<f64> },
    /// Expands a learnable per-offset profile into an `[l, l]` additive mask
    /// (zero outside the window; the caller combines with a `-inf` constant).
    LocalMaskFromProfile { profile: Tid, len: usize, window: usize },
}

#[derive(Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    needs_grad: bool,
}

/// A single-threaded computation tape.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>, needs_grad: bool) -> Tid {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Node { op, shape, data, grad: None, needs_grad });
        Tid(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Tid {
        self.push(Op::Const, shape.to_vec(), data, false)
    }

    pub fn scalar(&mut self, value: f64) -> Tid {
        self.constant(&[1], vec![value])
    }

    /// Records a leaf that mirrors `store` entry `idx`; gradients flow back
    /// to the store via [`Tape::write_param_grads`].
    pub fn param(&mut self, store: &ParamStore, idx: usize) -> Tid {
        let entry = store.entry(idx);
        self.push(Op::Param(idx), entry.shape.clone(), entry.data.clone(), true)
    }

    pub fn shape(&self, t: Tid) -> &[usize] {
        &self.nodes[t.0].shape
    }

    pub fn data(&self, t: Tid) -> &[f64] {
        &self.nodes[t.0].data
    }

    pub fn grad(&self, t: Tid) -> Option<&[f64]> {
        self.nodes[t.0].grad.as_deref()
    }

    fn rows_cols(&self, t: Tid) -> Result<(usize, usize)> {
        match self.nodes[t.0].shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(CoreError::Shape(format!("expected rank-2 tensor, got {s:?}"))),
        }
    }

    fn same_shape(&self, a: Tid, b: Tid) -> Result<()> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(CoreError::Shape(format!(
                "shape mismatch: {:?} vs {:?}",
                self.nodes[a.0].shape, self.nodes[b.0].shape
            )));
        }
        Ok(())
    }

    fn needs(&self, t: Tid) -> bool {
        self.nodes[t.0].needs_grad
    }

    pub fn add(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        self.same_shape(a, b)?;
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), shape, data, ng))
    }

    pub fn sub(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        self.same_shape(a, b)?;
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Sub(a, b), shape, data, ng))
    }

    pub fn mul(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        self.same_shape(a, b)?;
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), shape, data, ng))
    }

    pub fn scale(&mut self, a: Tid, k: f64) -> Tid {
        let data = self.nodes[a.0].data.iter().map(|x| x * k).collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        self.push(Op::Scale(a, k), shape, data, ng)
    }

    /// `[r, c] + [c]`, the bias pattern.
    pub fn add_bias(&mut self, a: Tid, bias: Tid) -> Result<Tid> {
        let (r, c) = self.rows_cols(a)?;
        if self.nodes[bias.0].shape != [c] {
            return Err(CoreError::Shape(format!(
                "bias shape {:?} does not match {c} columns",
                self.nodes[bias.0].shape
            )));
        }
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(self.nodes[a.0].data[i * c + j] + self.nodes[bias.0].data[j]);
            }
        }
        let ng = self.needs(a) || self.needs(bias);
        Ok(self.push(Op::AddBias(a, bias), vec![r, c], data, ng))
    }

    pub fn matmul(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let (m, k) = self.rows_cols(a)?;
        let (k2, n) = self.rows_cols(b)?;
        if k != k2 {
            return Err(CoreError::Shape(format!("matmul inner dims {k} vs {k2}")));
        }
        let mut data = vec![0.0; m * n];
        let ad = &self.nodes[a.0].data;
        let bd = &self.nodes[b.0].data;
        for i in 0..m {
            for l in 0..k {
                let av = ad[i * k + l];
                if av == 0.0 {
                    continue;
                }
                let brow = &bd[l * n..(l + 1) * n];
                let out = &mut data[i * n..(i + 1) * n];
                for (o, bv) in out.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Matmul(a, b), vec![m, n], data, ng))
    }

    pub fn relu(&mut self, a: Tid) -> Tid {
        let data = self.nodes[a.0].data.iter().map(|x| x.max(0.0)).collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        self.push(Op::Relu(a), shape, data, ng)
    }

    /// Row-wise softmax. Rows that are entirely `-inf` are rejected.
    pub fn softmax_rows(&mut self, a: Tid) -> Result<Tid> {
        let (r, c) = self.rows_cols(a)?;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &self.nodes[a.0].data[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(CoreError::InvalidArgument(format!(
                    "softmax row {i} is fully masked"
                )));
            }
            let mut sum = 0.0;
            for j in 0..c {
                let e = (row[j] - max).exp();
                data[i * c + j] = e;
                sum += e;
            }
            for j in 0..c {
                data[i * c + j] /= sum;
            }
        }
        let ng = self.needs(a);
        Ok(self.push(Op::SoftmaxRows(a), vec![r, c], data, ng))
    }

    pub fn mean_rows(&mut self, a: Tid) -> Result<Tid> {
        let (r, c) = self.rows_cols(a)?;
        let mut data = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                data[j] += self.nodes[a.0].data[i * c + j] / r as f64;
            }
        }
        let ng = self.needs(a);
        Ok(self.push(Op::MeanRows(a), vec![1, c], data, ng))
    }

    pub fn sum_all(&mut self, a: Tid) -> Tid {
        let s: f64 = self.nodes[a.0].data.iter().sum();
        let ng = self.needs(a);
        self.push(Op::SumAll(a), vec![1], vec![s], ng)
    }

    pub fn mean_all(&mut self, a: Tid) -> Tid {
        let n = self.nodes[a.0].data.len();
        let s: f64 = self.nodes[a.0].data.iter().sum::<f64>() / n as f64;
        let ng = self.needs(a);
        self.push(Op::MeanAll(a), vec![1], vec![s], ng)
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&mut self, a: Tid) -> Result<Tid> {
        let (r, c) = self.rows_cols(a)?;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.nodes[a.0].data[i * c + j];
            }
        }
        let ng = self.needs(a);
        Ok(self.push(Op::Transpose(a), vec![c, r], data, ng))
    }

    /// Shape reinterpretation with identical element order.
    pub fn reshape(&mut self, a: Tid, shape: &[usize]) -> Result<Tid> {
        if numel(shape) != self.nodes[a.0].data.len() {
            return Err(CoreError::Shape(format!(
                "reshape {:?} -> {shape:?} changes element count",
                self.nodes[a.0].shape
            )));
        }
        let data = self.nodes[a.0].data.clone();
        let ng = self.needs(a);
        Ok(self.push(Op::Reshape(a), shape.to_vec(), data, ng))
    }

    /// Stacks rank-2 tensors with equal column counts along the row axis.
    pub fn concat_rows(&mut self, parts: &[Tid]) -> Result<Tid> {
        if parts.is_empty() {
            return Err(CoreError::EmptyInput("concat of zero tensors".into()));
        }
        let (_, c) = self.rows_cols(parts[0])?;
        let mut data = Vec::new();
        let mut rows = 0;
        let mut ng = false;
        for &p in parts {
            let (r, pc) = self.rows_cols(p)?;
            if pc != c {
                return Err(CoreError::Shape("concat_rows column mismatch".into()));
            }
            rows += r;
            ng |= self.needs(p);
            data.extend_from_slice(&self.nodes[p.0].data);
        }
        Ok(self.push(Op::ConcatRows(parts.to_vec()), vec![rows, c], data, ng))
    }

    pub fn slice_rows(&mut self, a: Tid, start: usize, len: usize) -> Result<Tid> {
        let (r, c) = self.rows_cols(a)?;
        if start + len > r {
            return Err(CoreError::Shape(format!(
                "slice rows {start}..{} out of {r}",
                start + len
            )));
        }
        let data = self.nodes[a.0].data[start * c..(start + len) * c].to_vec();
        let ng = self.needs(a);
        Ok(self.push(Op::SliceRows { input: a, start }, vec![len, c], data, ng))
    }

    /// Concatenates rank-2 tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Tid]) -> Result<Tid> {
        if parts.is_empty() {
            return Err(CoreError::EmptyInput("concat of zero tensors".into()));
        }
        let (r, _) = self.rows_cols(parts[0])?;
        let mut widths = Vec::with_capacity(parts.len());
        let mut ng = false;
        for &p in parts {
            let (pr, pc) = self.rows_cols(p)?;
            if pr != r {
                return Err(CoreError::Shape("concat_cols row mismatch".into()));
            }
            widths.push(pc);
            ng |= self.needs(p);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.nodes[p.0].data[i * w..(i + 1) * w]);
            }
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), vec![r, total], data, ng))
    }

    /// Batch normalization over the row axis, one statistic per column.
    ///
    /// In train mode the batch statistics are used and returned so the caller
    /// can fold them into running statistics; eval mode normalizes with the
    /// provided running statistics and stays a pure function.
    pub fn batch_norm(
        &mut self,
        x: Tid,
        gamma: Tid,
        beta: Tid,
        running: Option<(&[f64], &[f64])>,
        eps: f64,
    ) -> Result<(Tid, Option<(Vec<f64>, Vec<f64>)>)> {
        let (r, c) = self.rows_cols(x)?;
        if self.nodes[gamma.0].shape != [c] || self.nodes[beta.0].shape != [c] {
            return Err(CoreError::Shape("batch norm scale/shift shape mismatch".into()));
        }
        let (mu, var, train) = match running {
            Some((m, v)) => (m.to_vec(), v.to_vec(), false),
            None => {
                if r < 2 {
                    return Err(CoreError::Degenerate(
                        "train-mode batch norm needs at least 2 rows".into(),
                    ));
                }
                let mut mu = vec![0.0; c];
                let mut var = vec![0.0; c];
                for i in 0..r {
                    for j in 0..c {
                        mu[j] += self.nodes[x.0].data[i * c + j] / r as f64;
                    }
                }
                for i in 0..r {
                    for j in 0..c {
                        let d = self.nodes[x.0].data[i * c + j] - mu[j];
                        var[j] += d * d / r as f64;
                    }
                }
                (mu, var, true)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                let xn = (self.nodes[x.0].data[i * c + j] - mu[j]) * inv_std[j];
                data[i * c + j] =
                    self.nodes[gamma.0].data[j] * xn + self.nodes[beta.0].data[j];
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let op = if train {
            Op::BatchNormTrain { x, gamma, beta, mu: mu.clone(), inv_std: inv_std.clone() }
        } else {
            Op::BatchNormEval { x, gamma, beta, mu: mu.clone(), inv_std: inv_std.clone() }
        };
        let out = self.push(op, vec![r, c], data, ng);
        Ok((out, if train { Some((mu, var)) } else { None }))
    }

    /// Per-row layer normalization.
    pub fn layer_norm(&mut self, x: Tid, gamma: Tid, beta: Tid, eps: f64) -> Result<Tid> {
        let (r, c) = self.rows_cols(x)?;
        if self.nodes[gamma.0].shape != [c] || self.nodes[beta.0].shape != [c] {
            return Err(CoreError::Shape("layer norm scale/shift shape mismatch".into()));
        }
        let mut mu = vec![0.0; r];
        let mut inv_std = vec![0.0; r];
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &self.nodes[x.0].data[i * c..(i + 1) * c];
            let m: f64 = row.iter().sum::<f64>() / c as f64;
            let v: f64 = row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / c as f64;
            mu[i] = m;
            inv_std[i] = 1.0 / (v + eps).sqrt();
            for j in 0..c {
                data[i * c + j] = self.nodes[gamma.0].data[j] * (row[j] - m) * inv_std[i]
                    + self.nodes[beta.0].data[j];
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(Op::LayerNorm { x, gamma, beta, mu, inv_std }, vec![r, c], data, ng))
    }

    /// Mean stable logistic loss of `logits` against constant 0/1 targets.
    pub fn bce_with_logits(&mut self, logits: Tid, targets: &[f64]) -> Result<Tid> {
        if self.nodes[logits.0].data.len() != targets.len() {
            return Err(CoreError::Shape("logit/target length mismatch".into()));
        }
        let mut loss = 0.0;
        for (&z, &t) in self.nodes[logits.0].data.iter().zip(targets) {
            loss += z.max(0.0) - z * t + (1.0 + (-z.abs()).exp()).ln();
        }
        loss /= targets.len() as f64;
        let ng = self.needs(logits);
        Ok(self.push(
            Op::BceWithLogits { logits, targets: targets.to_vec() },
            vec![1],
            vec![loss],
            ng,
        ))
    }

    /// Expands a per-offset profile of length `window` (odd) into an
    /// `[len, len]` additive matrix: entry (i, j) takes the profile value at
    /// offset `j - i` when `|j - i| <= window/2`, else 0.
    pub fn local_mask_from_profile(&mut self, profile: Tid, len: usize, window: usize) -> Result<Tid> {
        if self.nodes[profile.0].shape != [window] {
            return Err(CoreError::Shape("mask profile length must equal window".into()));
        }
        if window % 2 == 0 {
            return Err(CoreError::InvalidArgument("mask window must be odd".into()));
        }
        let half = window as isize / 2;
        let mut data = vec![0.0; len * len];
        for i in 0..len as isize {
            for j in 0..len as isize {
                let off = j - i;
                if off.abs() <= half {
                    data[(i * len as isize + j) as usize] =
                        self.nodes[profile.0].data[(off + half) as usize];
                }
            }
        }
        let ng = self.needs(profile);
        Ok(self.push(Op::LocalMaskFromProfile { profile, len, window }, vec![len, len], data, ng))
    }

    /// Reverse-mode accumulation seeded at a scalar loss.
    pub fn backward(&mut self, loss: Tid) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(CoreError::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if self.nodes[idx].grad.is_none() || !self.nodes[idx].needs_grad {
                continue;
            }
            let grad = self.nodes[idx].grad.clone().unwrap();
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Const | Op::Param(_) => {}
                Op::Add(a, b) => {
                    self.accum(a, &grad);
                    self.accum(b, &grad);
                }
                Op::Sub(a, b) => {
                    self.accum(a, &grad);
                    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
                    self.accum(b, &neg);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f64> =
                        grad.iter().zip(&self.nodes[b.0].data).map(|(g, y)| g * y).collect();
                    let gb: Vec<f64> =
                        grad.iter().zip(&self.nodes[a.0].data).map(|(g, x)| g * x).collect();
                    self.accum(a, &ga);
                    self.accum(b, &gb);
                }
                Op::Scale(a, k) => {
                    let ga: Vec<f64> = grad.iter().map(|g| g * k).collect();
                    self.accum(a, &ga);
                }
                Op::AddBias(a, bias) => {
                    self.accum(a, &grad);
                    let c = self.nodes[bias.0].data.len();
                    let mut gb = vec![0.0; c];
                    for (i, g) in grad.iter().enumerate() {
                        gb[i % c] += g;
                    }
                    self.accum(bias, &gb);
                }
                Op::Matmul(a, b) => {
                    let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let n = self.nodes[b.0].shape[1];
                    // dA = dC B^T, dB = A^T dC
                    let mut ga = vec![0.0; m * k];
                    let mut gb = vec![0.0; k * n];
                    {
                        let bd = &self.nodes[b.0].data;
                        for i in 0..m {
                            for l in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += grad[i * n + j] * bd[l * n + j];
                                }
                                ga[i * k + l] = s;
                            }
                        }
                    }
                    {
                        let ad = &self.nodes[a.0].data;
                        for l in 0..k {
                            for i in 0..m {
                                let av = ad[i * k + l];
                                if av == 0.0 {
                                    continue;
                                }
                                for j in 0..n {
                                    gb[l * n + j] += av * grad[i * n + j];
                                }
                            }
                        }
                    }
                    self.accum(a, &ga);
                    self.accum(b, &gb);
                }
                Op::Relu(a) => {
                    let ga: Vec<f64> = grad
                        .iter()
                        .zip(&self.nodes[a.0].data)
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect();
                    self.accum(a, &ga);
                }
                Op::SoftmaxRows(a) => {
                    let (r, c) = (self.nodes[idx].shape[0], self.nodes[idx].shape[1]);
                    let y = &self.nodes[idx].data;
                    let mut ga = vec![0.0; r * c];
                    for i in 0..r {
                        let dot: f64 = (0..c).map(|j| grad[i * c + j] * y[i * c + j]).sum();
                        for j in 0..c {
                            ga[i * c + j] = y[i * c + j] * (grad[i * c + j] - dot);
                        }
                    }
                    self.accum(a, &ga);
                }
                Op::MeanRows(a) => {
                    let (r, c) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let mut ga = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] = grad[j] / r as f64;
                        }
                    }
                    self.accum(a, &ga);
                }
                Op::SumAll(a) => {
                    let ga = vec![grad[0]; self.nodes[a.0].data.len()];
                    self.accum(a, &ga);
                }
                Op::MeanAll(a) => {
                    let n = self.nodes[a.0].data.len();
                    let ga = vec![grad[0] / n as f64; n];
                    self.accum(a, &ga);
                }
                Op::Transpose(a) => {
                    let (r, c) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let mut ga = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] = grad[j * r + i];
                        }
                    }
                    self.accum(a, &ga);
                }
                Op::Reshape(a) => {
                    self.accum(a, &grad);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].data.len();
                        let gp = grad[offset..offset + len].to_vec();
                        self.accum(p, &gp);
                        offset += len;
                    }
                }
                Op::SliceRows { input, start } => {
                    let (_, c) = (self.nodes[input.0].shape[0], self.nodes[input.0].shape[1]);
                    let mut ga = vec![0.0; self.nodes[input.0].data.len()];
                    ga[start * c..start * c + grad.len()].copy_from_slice(&grad);
                    self.accum(input, &ga);
                }
                Op::ConcatCols(parts) => {
                    let r = self.nodes[idx].shape[0];
                    let total = self.nodes[idx].shape[1];
                    let mut offset = 0;
                    for p in parts {
                        let w = self.nodes[p.0].shape[1];
                        let mut gp = vec![0.0; r * w];
                        for i in 0..r {
                            gp[i * w..(i + 1) * w]
                                .copy_from_slice(&grad[i * total + offset..i * total + offset + w]);
                        }
                        self.accum(p, &gp);
                        offset += w;
                    }
                }
                Op::BatchNormTrain { x, gamma, beta, mu, inv_std } => {
                    let (r, c) = (self.nodes[x.0].shape[0], self.nodes[x.0].shape[1]);
                    let rn = r as f64;
                    let xd = &self.nodes[x.0].data;
                    let gd = &self.nodes[gamma.0].data;
                    let mut ggamma = vec![0.0; c];
                    let mut gbeta = vec![0.0; c];
                    let mut gx = vec![0.0; r * c];
                    for j in 0..c {
                        let mut sum_dy = 0.0;
                        let mut sum_dy_xn = 0.0;
                        for i in 0..r {
                            let xn = (xd[i * c + j] - mu[j]) * inv_std[j];
                            let dy = grad[i * c + j];
                            sum_dy += dy;
                            sum_dy_xn += dy * xn;
                            ggamma[j] += dy * xn;
                            gbeta[j] += dy;
                        }
                        for i in 0..r {
                            let xn = (xd[i * c + j] - mu[j]) * inv_std[j];
                            let dy = grad[i * c + j];
                            gx[i * c + j] = gd[j] * inv_std[j]
                                * (dy - sum_dy / rn - xn * sum_dy_xn / rn);
                        }
                    }
                    self.accum(x, &gx);
                    self.accum(gamma, &ggamma);
                    self.accum(beta, &gbeta);
                }
                Op::BatchNormEval { x, gamma, beta, mu, inv_std } => {
                    let (r, c) = (self.nodes[x.0].shape[0], self.nodes[x.0].shape[1]);
                    let xd = &self.nodes[x.0].data;
                    let gd = &self.nodes[gamma.0].data;
                    let mut ggamma = vec![0.0; c];
                    let mut gbeta = vec![0.0; c];
                    let mut gx = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            let dy = grad[i * c + j];
                            let xn = (xd[i * c + j] - mu[j]) * inv_std[j];
                            gx[i * c + j] = dy * gd[j] * inv_std[j];
                            ggamma[j] += dy * xn;
                            gbeta[j] += dy;
                        }
                    }
                    self.accum(x, &gx);
                    self.accum(gamma, &ggamma);
                    self.accum(beta, &gbeta);
                }
                Op::LayerNorm { x, gamma, beta, mu, inv_std } => {
                    let (r, c) = (self.nodes[x.0].shape[0], self.nodes[x.0].shape[1]);
                    let cn = c as f64;
                    let xd = &self.nodes[x.0].data;
                    let gd = &self.nodes[gamma.0].data;
                    let mut ggamma = vec![0.0; c];
                    let mut gbeta = vec![0.0; c];
                    let mut gx = vec![0.0; r * c];
                    for i in 0..r {
                        let mut sum_dyg = 0.0;
                        let mut sum_dyg_xn = 0.0;
                        for j in 0..c {
                            let xn = (xd[i * c + j] - mu[i]) * inv_std[i];
                            let dyg = grad[i * c + j] * gd[j];
                            sum_dyg += dyg;
                            sum_dyg_xn += dyg * xn;
                            ggamma[j] += grad[i * c + j] * xn;
                            gbeta[j] += grad[i * c + j];
                        }
                        for j in 0..c {
                            let xn = (xd[i * c + j] - mu[i]) * inv_std[i];
                            let dyg = grad[i * c + j] * gd[j];
                            gx[i * c + j] =
                                inv_std[i] * (dyg - sum_dyg / cn - xn * sum_dyg_xn / cn);
                        }
                    }
                    self.accum(x, &gx);
                    self.accum(gamma, &ggamma);
                    self.accum(beta, &gbeta);
                }
                Op::BceWithLogits { logits, targets } => {
                    let n = targets.len() as f64;
                    let ga: Vec<f64> = self.nodes[logits.0]
                        .data
                        .iter()
                        .zip(&targets)
                        .map(|(&z, &t)| grad[0] * (sigmoid(z) - t) / n)
                        .collect();
                    self.accum(logits, &ga);
                }
                Op::LocalMaskFromProfile { profile, len, window } => {
                    let half = window as isize / 2;
                    let mut gp = vec![0.0; window];
                    for i in 0..len as isize {
                        for j in 0..len as isize {
                            let off = j - i;
                            if off.abs() <= half {
                                gp[(off + half) as usize] +=
                                    grad[(i * len as isize + j) as usize];
                            }
                        }
                    }
                    self.accum(profile, &gp);
                }
            }
        }
        Ok(())
    }

    fn accum(&mut self, t: Tid, g: &[f64]) {
        if !self.nodes[t.0].needs_grad {
            return;
        }
        match &mut self.nodes[t.0].grad {
            Some(existing) => {
                for (e, gi) in existing.iter_mut().zip(g) {
                    *e += gi;
                }
            }
            None => self.nodes[t.0].grad = Some(g.to_vec()),
        }
    }

    /// Copies accumulated leaf gradients into the parameter store.
    pub fn write_param_grads(&self, store: &mut ParamStore) {
        for node in &self.nodes {
            if let (Op::Param(idx), Some(grad)) = (&node.op, &node.grad) {
                store.accumulate_grad(*idx, grad);
            }
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
