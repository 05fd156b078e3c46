use alloc::vec;
use alloc::vec::Vec;

use super::{AutodiffError, Tensor};
use crate::math;

/// Additive-mask sentinel: logits whose mask entry is at or below this value are
/// excluded from the softmax (any finite value above it is added to the logit).
pub const MASK_FORBIDDEN: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `x[.., in] · w[in, out] + b[out]`
    Linear { x: Var, w: Var, b: Var },
    /// Batched product over the trailing two axes.
    MatMul { a: Var, b: Var, transpose_b: bool },
    /// Per-row normalization over the last axis. Saves `x̂` and `1/σ`.
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    LeakyRelu { x: Var, slope: f64 },
    MaskedSoftmax { x: Var },
    Add { a: Var, b: Var },
    /// `b`'s shape is a suffix of `a`'s; `b` is tiled over the leading axes.
    AddBroadcast { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    Sum { x: Var },
    ConcatLast { parts: Vec<Var> },
    Reshape { x: Var },
    MaskedMse { pred: Var, label: Vec<f64>, mask: Vec<f64>, denom: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    watched: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    disconnected: Vec<Var>,
}

impl Gradients {
    /// Gradient w.r.t. `v`; all zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Watched leaves the loss does not depend on (their gradient is zero).
    pub fn disconnected(&self) -> &[Var] {
        &self.disconnected
    }

    pub fn require_connected(&self) -> Result<(), AutodiffError> {
        if self.disconnected.is_empty() {
            Ok(())
        } else {
            Err(AutodiffError::DisconnectedGraph(self.disconnected.len()))
        }
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            watched: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf; its gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, t: Tensor) -> Var {
        let v = self.push(t, Op::Leaf, true);
        self.nodes[v.0].watched = true;
        v
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
        let (xs, ws, bs) = (self.value(x).shape(), self.value(w).shape(), self.value(b).shape());
        if ws.len() != 2 || xs.is_empty() || xs[xs.len() - 1] != ws[0] {
            return Err(mismatch("linear", xs, ws));
        }
        if bs != [ws[1]] {
            return Err(mismatch("linear bias", ws, bs));
        }
        let (din, dout) = (ws[0], ws[1]);
        let mut shape = xs.to_vec();
        *shape.last_mut().unwrap() = dout;
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let bd = self.value(b).data();
        let rows = xd.len() / din;
        let mut out = vec![0.0; rows * dout];
        for r in 0..rows {
            let xr = &xd[r * din..(r + 1) * din];
            let or = &mut out[r * dout..(r + 1) * dout];
            or.copy_from_slice(bd);
            for (i, xv) in xr.iter().enumerate() {
                let wr = &wd[i * dout..(i + 1) * dout];
                for (o, wv) in or.iter_mut().zip(wr) {
                    *o += xv * wv;
                }
            }
        }
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Linear { x, w, b }, rg))
    }

    /// Batched `a · b` (or `a · bᵀ` with `transpose_b`) over the last two axes.
    pub fn matmul(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var, AutodiffError> {
        let (asz, bsz) = (self.value(a).shape(), self.value(b).shape());
        if asz.len() < 2 || asz.len() != bsz.len() || asz[..asz.len() - 2] != bsz[..bsz.len() - 2] {
            return Err(mismatch("matmul", asz, bsz));
        }
        let r = asz.len();
        let (n, k) = (asz[r - 2], asz[r - 1]);
        let (bk, m) = if transpose_b {
            (bsz[r - 1], bsz[r - 2])
        } else {
            (bsz[r - 2], bsz[r - 1])
        };
        if bk != k {
            return Err(mismatch("matmul inner", asz, bsz));
        }
        let batch: usize = asz[..r - 2].iter().product();
        let mut shape = asz[..r - 2].to_vec();
        shape.extend([n, m]);
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; batch * n * m];
        for t in 0..batch {
            let ab = &ad[t * n * k..(t + 1) * n * k];
            let bb = &bd[t * k * m..(t + 1) * k * m];
            let ob = &mut out[t * n * m..(t + 1) * n * m];
            for i in 0..n {
                for j in 0..m {
                    let mut s = 0.0;
                    for l in 0..k {
                        let bv = if transpose_b { bb[j * k + l] } else { bb[l * m + j] };
                        s += ab[i * k + l] * bv;
                    }
                    ob[i * m + j] = s;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul { a, b, transpose_b }, rg))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var, AutodiffError> {
        let xs = self.value(x).shape().to_vec();
        let d = self.value(x).last_dim();
        if self.value(gamma).shape() != [d] || self.value(beta).shape() != [d] {
            return Err(mismatch("layer_norm", &xs, self.value(gamma).shape()));
        }
        let xd = self.value(x).data();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let rows = xd.len() / d;
        let mut xhat = vec![0.0; xd.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xd.len()];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let inv = 1.0 / math::sqrt(var + eps);
            inv_std[r] = inv;
            for i in 0..d {
                let h = (row[i] - mu) * inv;
                xhat[r * d + i] = h;
                out[r * d + i] = g[i] * h + bt[i];
            }
        }
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::new(xs, out)?,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let t = self.value(x);
        let out = t.data().iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect();
        let value = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(value, Op::LeakyRelu { x, slope }, rg)
    }

    /// Softmax over the last axis with an additive mask of the same shape.
    ///
    /// Entries whose mask is `<= MASK_FORBIDDEN` get exactly zero weight and the
    /// remaining weights are renormalized over the allowed entries. A row with no
    /// allowed entry yields all zeros.
    pub fn masked_softmax(&mut self, x: Var, additive_mask: &[f64]) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        if additive_mask.len() != t.len() {
            return Err(mismatch("masked_softmax", t.shape(), &[additive_mask.len()]));
        }
        let d = t.last_dim();
        let xd = t.data();
        let mut out = vec![0.0; xd.len()];
        for r in 0..xd.len() / d {
            let lo = r * d;
            let allowed = |i: usize| additive_mask[lo + i] > MASK_FORBIDDEN;
            let mut peak = f64::NEG_INFINITY;
            for i in 0..d {
                if allowed(i) {
                    peak = peak.max(xd[lo + i] + additive_mask[lo + i]);
                }
            }
            if peak == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for i in 0..d {
                if allowed(i) {
                    let e = math::exp(xd[lo + i] + additive_mask[lo + i] - peak);
                    out[lo + i] = e;
                    total += e;
                }
            }
            for v in &mut out[lo..lo + d] {
                *v /= total;
            }
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::MaskedSoftmax { x }, rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(mismatch(op, sa, sb));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), out).expect("same shape");
        let rg = self.rg(&[a, b]);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add { a, b }, |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, Op::Sub { a, b }, |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul { a, b }, |x, y| x * y))
    }

    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(mismatch("add_broadcast", sa, sb));
        }
        let bd = self.value(b).data();
        let n = bd.len();
        let out = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + bd[i % n])
            .collect();
        let value = Tensor::new(sa.to_vec(), out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::AddBroadcast { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * c).collect()).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(value, Op::Scale { x, c }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    /// Concatenation along the last axis; leading axes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = self.value(*parts.first().ok_or(mismatch("concat", &[], &[]))?).shape().to_vec();
        let lead = &first[..first.len() - 1];
        let mut width = 0;
        for p in parts {
            let s = self.value(*p).shape();
            if s.len() != first.len() || s[..s.len() - 1] != *lead {
                return Err(mismatch("concat", &first, s));
            }
            width += s[s.len() - 1];
        }
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for p in parts {
                let t = self.value(*p);
                let d = t.last_dim();
                out.extend_from_slice(&t.data()[r * d..(r + 1) * d]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(width);
        let rg = self.rg(parts);
        Ok(self.push(Tensor::new(shape, out)?, Op::ConcatLast { parts: parts.to_vec() }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let value = self.value(x).reshaped(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// `Σ m (pred - label)² / Σ m`. Entries with `m = 0` are skipped entirely, so
    /// their predictions and labels never influence the value.
    pub fn masked_mse(&mut self, pred: Var, label: &[f64], mask: &[f64]) -> Result<Var, AutodiffError> {
        let p = self.value(pred);
        if label.len() != p.len() || mask.len() != p.len() {
            return Err(mismatch("masked_mse", p.shape(), &[label.len(), mask.len()]));
        }
        let denom: f64 = mask.iter().sum();
        if denom == 0.0 {
            return Err(AutodiffError::AllMasked);
        }
        let mut total = 0.0;
        for i in 0..p.len() {
            if mask[i] != 0.0 {
                let e = p.data()[i] - label[i];
                total += mask[i] * e * e;
            }
        }
        let rg = self.rg(&[pred]);
        Ok(self.push(
            Tensor::scalar(total / denom),
            Op::MaskedMse {
                pred,
                label: label.to_vec(),
                mask: mask.to_vec(),
                denom,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let ls = self.value(loss).shape();
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::NonScalarLoss(ls.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(ls, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut disconnected = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.watched && grads[i].is_none() {
                disconnected.push(Var(i));
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        if !disconnected.is_empty() {
            log::warn!("{} watched tensors do not influence the loss; gradients set to zero", disconnected.len());
        }
        Ok(Gradients { grads, disconnected })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let xd = self.value(*x).data();
                let wd = self.value(*w).data();
                let (din, dout) = (self.value(*w).shape()[0], self.value(*w).shape()[1]);
                let rows = xd.len() / din;
                if self.needs(*x) {
                    let mut gx = vec![0.0; xd.len()];
                    for r in 0..rows {
                        let gr = &gd[r * dout..(r + 1) * dout];
                        for i in 0..din {
                            let wr = &wd[i * dout..(i + 1) * dout];
                            gx[r * din + i] = gr.iter().zip(wr).map(|(a, b)| a * b).sum();
                        }
                    }
                    self.accumulate(grads, *x, gx);
                }
                if self.needs(*w) {
                    let mut gw = vec![0.0; wd.len()];
                    for r in 0..rows {
                        let gr = &gd[r * dout..(r + 1) * dout];
                        for i in 0..din {
                            let xv = xd[r * din + i];
                            for (o, gv) in gw[i * dout..(i + 1) * dout].iter_mut().zip(gr) {
                                *o += xv * gv;
                            }
                        }
                    }
                    self.accumulate(grads, *w, gw);
                }
                if self.needs(*b) {
                    let mut gb = vec![0.0; dout];
                    for r in 0..rows {
                        for (o, gv) in gb.iter_mut().zip(&gd[r * dout..(r + 1) * dout]) {
                            *o += gv;
                        }
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::MatMul { a, b, transpose_b } => {
                let (asz, bsz) = (self.value(*a).shape(), self.value(*b).shape());
                let r = asz.len();
                let (n, k) = (asz[r - 2], asz[r - 1]);
                let m = if *transpose_b { bsz[r - 2] } else { bsz[r - 1] };
                let batch = self.value(*a).len() / (n * k);
                let ad = self.value(*a).data();
                let bd = self.value(*b).data();
                let bidx = |j: usize, l: usize| if *transpose_b { j * k + l } else { l * m + j };
                if self.needs(*a) {
                    let mut ga = vec![0.0; ad.len()];
                    for t in 0..batch {
                        for i in 0..n {
                            for l in 0..k {
                                let mut s = 0.0;
                                for j in 0..m {
                                    s += gd[t * n * m + i * m + j] * bd[t * k * m + bidx(j, l)];
                                }
                                ga[t * n * k + i * k + l] = s;
                            }
                        }
                    }
                    self.accumulate(grads, *a, ga);
                }
                if self.needs(*b) {
                    let mut gb = vec![0.0; bd.len()];
                    for t in 0..batch {
                        for i in 0..n {
                            for j in 0..m {
                                let gv = gd[t * n * m + i * m + j];
                                for l in 0..k {
                                    gb[t * k * m + bidx(j, l)] += gv * ad[t * n * k + i * k + l];
                                }
                            }
                        }
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let d = self.value(*gamma).len();
                let gam = self.value(*gamma).data();
                let rows = xhat.len() / d;
                if self.needs(*gamma) {
                    let mut gg = vec![0.0; d];
                    for r in 0..rows {
                        for i in 0..d {
                            gg[i] += gd[r * d + i] * xhat[r * d + i];
                        }
                    }
                    self.accumulate(grads, *gamma, gg);
                }
                if self.needs(*beta) {
                    let mut gb = vec![0.0; d];
                    for r in 0..rows {
                        for i in 0..d {
                            gb[i] += gd[r * d + i];
                        }
                    }
                    self.accumulate(grads, *beta, gb);
                }
                if self.needs(*x) {
                    let mut gx = vec![0.0; xhat.len()];
                    for r in 0..rows {
                        let lo = r * d;
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for i in 0..d {
                            let gh = gd[lo + i] * gam[i];
                            s1 += gh;
                            s2 += gh * xhat[lo + i];
                        }
                        let df = d as f64;
                        for i in 0..d {
                            let gh = gd[lo + i] * gam[i];
                            gx[lo + i] = inv_std[r] / df * (df * gh - s1 - xhat[lo + i] * s2);
                        }
                    }
                    self.accumulate(grads, *x, gx);
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xd = self.value(*x).data();
                let gx = xd
                    .iter()
                    .zip(gd)
                    .map(|(v, g)| if *v > 0.0 { *g } else { slope * g })
                    .collect();
                self.accumulate(grads, *x, gx);
            }
            Op::MaskedSoftmax { x } => {
                let y = node.value.data();
                let d = node.value.last_dim();
                let mut gx = vec![0.0; y.len()];
                for r in 0..y.len() / d {
                    let lo = r * d;
                    let dot: f64 = (0..d).map(|i| y[lo + i] * gd[lo + i]).sum();
                    for i in 0..d {
                        gx[lo + i] = y[lo + i] * (gd[lo + i] - dot);
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, gd.to_vec());
                self.accumulate(grads, *b, gd.to_vec());
            }
            Op::Sub { a, b } => {
                self.accumulate(grads, *a, gd.to_vec());
                self.accumulate(grads, *b, gd.iter().map(|v| -v).collect());
            }
            Op::Mul { a, b } => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, gd.iter().zip(bd).map(|(g, y)| g * y).collect());
                self.accumulate(grads, *b, gd.iter().zip(ad).map(|(g, x)| g * x).collect());
            }
            Op::AddBroadcast { a, b } => {
                self.accumulate(grads, *a, gd.to_vec());
                if self.needs(*b) {
                    let n = self.value(*b).len();
                    let mut gb = vec![0.0; n];
                    for (i, g) in gd.iter().enumerate() {
                        gb[i % n] += g;
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Scale { x, c } => {
                self.accumulate(grads, *x, gd.iter().map(|g| g * c).collect());
            }
            Op::Sum { x } => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, vec![gd[0]; n]);
            }
            Op::ConcatLast { parts } => {
                let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).last_dim()).collect();
                let total: usize = widths.iter().sum();
                let rows = gd.len() / total;
                let mut offset = 0;
                for (p, w) in parts.iter().zip(&widths) {
                    if self.needs(*p) {
                        let mut gp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            gp.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                        }
                        self.accumulate(grads, *p, gp);
                    }
                    offset += w;
                }
            }
            Op::Reshape { x } => {
                self.accumulate(grads, *x, gd.to_vec());
            }
            Op::MaskedMse {
                pred,
                label,
                mask,
                denom,
            } => {
                let p = self.value(*pred).data();
                let gx = (0..p.len())
                    .map(|i| {
                        if mask[i] == 0.0 {
                            0.0
                        } else {
                            gd[0] * 2.0 * mask[i] * (p[i] - label[i]) / denom
                        }
                    })
                    .collect();
                self.accumulate(grads, *pred, gx);
            }
        }
    }

    #[inline]
    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Vec<f64>) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(t) => {
                for (a, b) in t.data_mut().iter_mut().zip(&g) {
                    *a += b;
                }
            }
            slot @ None => {
                *slot = Some(Tensor::new(self.value(v).shape().to_vec(), g).expect("gradient shape"));
            }
        }
    }
}
