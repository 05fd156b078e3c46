use alloc::vec;
use alloc::vec::Vec;

use super::params::{self, DmhsaParams, ModuleIndex};
use super::{AttentionMasks, DmhsaConfig, DmhsaError, FeatureMatrix, PaddingMask};
use rand::Rng;

use crate::autodiff::{finite_difference_check, AutodiffError, GradCheckReport, Tape, Tensor, Var};
use crate::math;

/// Fixed-size training or evaluation batch. Labels are standardized and zero in
/// padded slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub n_beams: usize,
    pub feature_dim: usize,
    /// `[len, N_B, δ]` row-major.
    pub features: Vec<f64>,
    pub n_valid: Vec<usize>,
    /// `[len, N_B]`.
    pub labels: Vec<f64>,
}

impl Batch {
    pub fn new(n_beams: usize, feature_dim: usize) -> Self {
        Self {
            n_beams,
            feature_dim,
            features: Vec::new(),
            n_valid: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.n_valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_valid.is_empty()
    }

    /// Appends one sample; `labels` holds one standardized value per valid user.
    pub fn push(&mut self, f: &FeatureMatrix, labels: &[f64]) -> Result<(), DmhsaError> {
        if f.n_beams() != self.n_beams || f.feature_dim() != self.feature_dim {
            return Err(DmhsaError::DimensionMismatch("feature matrix does not fit the batch"));
        }
        if labels.len() != f.mask().n_valid() {
            return Err(DmhsaError::DimensionMismatch("one label per valid user"));
        }
        self.features.extend_from_slice(f.as_slice());
        self.n_valid.push(labels.len());
        self.labels.extend_from_slice(labels);
        self.labels.extend(core::iter::repeat_n(0.0, self.n_beams - labels.len()));
        Ok(())
    }

    /// Padding bits `[len, N_B]`.
    pub fn mask(&self) -> Vec<f64> {
        let mut m = Vec::with_capacity(self.len() * self.n_beams);
        for &n in &self.n_valid {
            m.extend((0..self.n_beams).map(|i| if i < n { 1.0 } else { 0.0 }));
        }
        m
    }

    pub fn sample(&self, i: usize) -> FeatureMatrix {
        let w = self.n_beams * self.feature_dim;
        let rows: Vec<Vec<f64>> = (0..self.n_valid[i])
            .map(|k| {
                let lo = i * w + k * self.feature_dim;
                self.features[lo..lo + self.feature_dim].to_vec()
            })
            .collect();
        FeatureMatrix::from_rows(self.n_beams, self.feature_dim, &rows).expect("batch invariants")
    }
}

/// Head outputs recorded on a tape, each `[batch, N_B]`.
#[derive(Debug, Clone, Copy)]
pub struct TapeHeads {
    pub snr: Var,
    pub inr: Var,
    pub out: Var,
}

/// Per-slot head outputs of one sample (length `N_B`; padded slots are
/// meaningless).
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub snr: Vec<f64>,
    pub inr: Vec<f64>,
    pub out: Vec<f64>,
}

fn batch_masks(n_beams: usize, n_valid: &[usize]) -> Result<(Vec<f64>, Vec<f64>), DmhsaError> {
    let mut snr = Vec::with_capacity(n_valid.len() * n_beams * n_beams);
    let mut inr = Vec::with_capacity(snr.capacity());
    for &n in n_valid {
        let (s, i) = AttentionMasks::new(PaddingMask::new(n_beams, n)?).additive();
        snr.extend(s);
        inr.extend(i);
    }
    Ok((snr, inr))
}

fn attention(
    tape: &mut Tape,
    cfg: &DmhsaConfig,
    vars: &[Var],
    idx: ModuleIndex,
    x: Var,
    mask: &[f64],
) -> Result<Var, DmhsaError> {
    let scale = 1.0 / math::sqrt(cfg.head_dim() as f64);
    let mut heads = Vec::with_capacity(cfg.n_heads);
    for j in 0..cfg.n_heads {
        let [qw, qb, kw, kb, vw, vb] = idx.head(j);
        let q = tape.linear(x, vars[qw], vars[qb])?;
        let k = tape.linear(x, vars[kw], vars[kb])?;
        let v = tape.linear(x, vars[vw], vars[vb])?;
        let scores = tape.matmul(q, k, true)?;
        let scores = tape.scale(scores, scale);
        let weights = tape.masked_softmax(scores, mask)?;
        heads.push(tape.matmul(weights, v, false)?);
    }
    let joined = tape.concat_last(&heads)?;
    let (ow, ob) = idx.out();
    let mixed = tape.linear(joined, vars[ow], vars[ob])?;
    let (rw, rb) = idx.readout();
    let r = tape.linear(mixed, vars[rw], vars[rb])?;
    let shape = tape.value(r).shape();
    let flat = [shape[0], shape[1]];
    Ok(tape.reshape(r, &flat)?)
}

/// Records the model on `tape`. `vars` are the parameter handles in layout
/// order; `features` has shape `[batch, N_B, δ]`.
pub fn forward_tape(
    tape: &mut Tape,
    cfg: &DmhsaConfig,
    params: &DmhsaParams,
    vars: &[Var],
    features: Var,
    n_valid: &[usize],
) -> Result<TapeHeads, DmhsaError> {
    let shape = tape.value(features).shape();
    if shape.len() != 3 || shape[0] != n_valid.len() || shape[1] != cfg.n_beams || shape[2] != cfg.feature_dim {
        return Err(DmhsaError::DimensionMismatch("features must be [batch, N_B, δ]"));
    }
    if vars.len() != params.layout().len() {
        return Err(DmhsaError::DimensionMismatch("one variable per parameter block"));
    }
    let slope = cfg.leaky_slope;
    let h = tape.linear(features, vars[params::FC1_W], vars[params::FC1_B])?;
    let h = tape.layer_norm(h, vars[params::LN1_G], vars[params::LN1_B], 1e-5)?;
    let h = tape.leaky_relu(h, slope);
    let h = tape.linear(h, vars[params::FC2_W], vars[params::FC2_B])?;
    let h = tape.layer_norm(h, vars[params::LN2_G], vars[params::LN2_B], 1e-5)?;
    let h = tape.leaky_relu(h, slope);
    let x = tape.add_broadcast(h, vars[params::PE])?;

    let (snr_mask, inr_mask) = batch_masks(cfg.n_beams, n_valid)?;
    let snr = attention(tape, cfg, vars, params.layout().module(false), x, &snr_mask)?;
    let inr = attention(tape, cfg, vars, params.layout().module(true), x, &inr_mask)?;
    let out = tape.sub(snr, inr)?;
    Ok(TapeHeads { snr, inr, out })
}

fn features_tensor(batch: &Batch) -> Result<Tensor, DmhsaError> {
    Ok(Tensor::new(
        vec![batch.len(), batch.n_beams, batch.feature_dim],
        batch.features.clone(),
    )?)
}

fn check_batch(cfg: &DmhsaConfig, batch: &Batch) -> Result<(), DmhsaError> {
    if batch.n_beams != cfg.n_beams || batch.feature_dim != cfg.feature_dim {
        return Err(DmhsaError::DimensionMismatch("batch does not match the model"));
    }
    if batch.is_empty() {
        return Err(DmhsaError::EmptySet);
    }
    Ok(())
}

/// Masked MSE of a batch and its gradient w.r.t. every parameter block.
pub fn loss_and_gradients(
    params: &DmhsaParams,
    cfg: &DmhsaConfig,
    batch: &Batch,
) -> Result<(f64, Vec<Tensor>), DmhsaError> {
    check_batch(cfg, batch)?;
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.tensors().iter().map(|t| tape.param(t.clone())).collect();
    let x = tape.constant(features_tensor(batch)?);
    let heads = forward_tape(&mut tape, cfg, params, &vars, x, &batch.n_valid)?;
    let loss = tape.masked_mse(heads.out, &batch.labels, &batch.mask())?;
    let grads = tape.backward(loss)?;
    let value = tape.value(loss).item();
    Ok((value, vars.iter().map(|v| grads.wrt(*v).expect("parameter").clone()).collect()))
}

/// Central-difference check of the masked MSE of `batch` with respect to
/// `probes` randomly drawn parameter entries.
pub fn parameter_gradient_check<R: Rng + ?Sized>(
    params: &DmhsaParams,
    cfg: &DmhsaConfig,
    batch: &Batch,
    probes: usize,
    rng: &mut R,
) -> Result<GradCheckReport, DmhsaError> {
    check_batch(cfg, batch)?;
    let features = features_tensor(batch)?;
    let mask = batch.mask();
    let build = |tape: &mut Tape, vars: &[Var]| {
        let x = tape.constant(features.clone());
        let heads = forward_tape(tape, cfg, params, vars, x, &batch.n_valid).map_err(|e| match e {
            DmhsaError::Autodiff(a) => a,
            _ => AutodiffError::ShapeMismatch {
                op: "model graph",
                lhs: Vec::new(),
                rhs: Vec::new(),
            },
        })?;
        tape.masked_mse(heads.out, &batch.labels, &mask)
    };
    Ok(finite_difference_check(build, params.tensors(), probes, 1e-5, rng)?)
}

/// Inference on the samples of a batch.
pub fn forward_batch(params: &DmhsaParams, cfg: &DmhsaConfig, batch: &Batch) -> Result<Vec<HeadOutputs>, DmhsaError> {
    check_batch(cfg, batch)?;
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.tensors().iter().map(|t| tape.constant(t.clone())).collect();
    let x = tape.constant(features_tensor(batch)?);
    let heads = forward_tape(&mut tape, cfg, params, &vars, x, &batch.n_valid)?;
    let n = cfg.n_beams;
    let split = |v: Var, i: usize| tape.value(v).data()[i * n..(i + 1) * n].to_vec();
    Ok((0..batch.len())
        .map(|i| HeadOutputs {
            snr: split(heads.snr, i),
            inr: split(heads.inr, i),
            out: split(heads.out, i),
        })
        .collect())
}

/// Inference on a single feature matrix.
pub fn forward(f: &FeatureMatrix, params: &DmhsaParams, cfg: &DmhsaConfig) -> Result<HeadOutputs, DmhsaError> {
    if f.n_beams() != cfg.n_beams || f.feature_dim() != cfg.feature_dim {
        return Err(DmhsaError::DimensionMismatch("feature matrix does not match the model"));
    }
    let batch = Batch {
        n_beams: cfg.n_beams,
        feature_dim: cfg.feature_dim,
        features: f.as_slice().to_vec(),
        n_valid: vec![f.mask().n_valid()],
        labels: vec![0.0; cfg.n_beams],
    };
    Ok(forward_batch(params, cfg, &batch)?.remove(0))
}
