//! Ground-truth SINR oracle: regularized MMSE precoding, per-antenna power
//! normalization and the SNR / INR / SINR decomposition.
//!
//! Channels are noise-normalized (the noise power is folded into the channel
//! coefficient), so the SINR denominator carries a plain `1`.

use alloc::vec::Vec;

use crate::channel::{build_channel_matrix, ArrayConfig, ChannelError, LinkBudget};
use crate::cmatrix::{CMatrix, Cholesky, LinalgError};
use crate::geometry::LineOfSight;
use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BeamformingError {
    #[error("gram matrix solve failed: {0}")]
    NumericalFailure(LinalgError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("invalid beamformer configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct BeamformerConfig {
    pub n_elements: usize,
    /// Per-element average power `P_av,el`, W.
    pub per_element_power_w: f64,
}

impl Default for BeamformerConfig {
    fn default() -> Self {
        Self {
            n_elements: 512,
            per_element_power_w: 0.065,
        }
    }
}

impl BeamformerConfig {
    /// `P_av = N_R · P_av,el`.
    pub fn total_power_w(&self) -> f64 {
        self.n_elements as f64 * self.per_element_power_w
    }

    /// `α = N_R / P_av`.
    pub fn regularization(&self) -> f64 {
        self.n_elements as f64 / self.total_power_w()
    }

    /// Target row norm after per-antenna normalization, `sqrt(P_av / N_R)`.
    pub fn row_norm_target(&self) -> f64 {
        math::sqrt(self.total_power_w() / self.n_elements as f64)
    }

    pub fn validate(&self) -> Result<(), BeamformingError> {
        if self.n_elements == 0 || !(self.per_element_power_w > 0.0) {
            return Err(BeamformingError::InvalidConfig("power and element count must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingMatrix {
    /// Raw MMSE weights, `N_R × N_sched`.
    pub raw: CMatrix,
    /// Per-antenna normalized weights, `N_R × N_sched`.
    pub normalized: CMatrix,
    /// Rows of `raw` that were identically zero and left unnormalized.
    pub zero_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub sinr_db: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub inr_db: Vec<f64>,
}

impl SinrReport {
    pub fn len(&self) -> usize {
        self.sinr_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sinr_db.is_empty()
    }
}

/// `B = Hᴴ (H Hᴴ + α I)⁻¹`, via a Cholesky solve of the regularized Gram matrix.
pub fn mmse_beamformer(h: &CMatrix, cfg: &BeamformerConfig) -> Result<CMatrix, BeamformingError> {
    let n_sched = h.rows();
    if n_sched == 0 || n_sched > h.cols() {
        return Err(BeamformingError::DimensionMismatch("need 1 <= N_sched <= N_R"));
    }
    let alpha = cfg.regularization();
    let mut gram = h.gram();
    for i in 0..n_sched {
        gram[(i, i)].re += alpha;
    }
    let chol = Cholesky::factor(&gram).map_err(BeamformingError::NumericalFailure)?;
    // G Z = H  =>  Z = G⁻¹ H and, G being Hermitian, B = Zᴴ.
    let z = chol.solve(h).map_err(BeamformingError::NumericalFailure)?;
    Ok(z.conj_transpose())
}

/// Scales row `r` of `b` to norm `sqrt(P_av / N_R)`. Zero rows stay zero and are counted.
pub fn per_antenna_normalize(b: &CMatrix, cfg: &BeamformerConfig) -> (CMatrix, usize) {
    let target = cfg.row_norm_target();
    let mut out = b.clone();
    let mut zero_rows = 0;
    for r in 0..b.rows() {
        let row = out.row_mut(r);
        let n = math::sqrt(row.iter().map(|x| x.norm_sqr()).sum());
        if n == 0.0 {
            zero_rows += 1;
            continue;
        }
        let s = target / n;
        for x in row.iter_mut() {
            *x *= s;
        }
    }
    (out, zero_rows)
}

pub fn beamforming_matrix(h: &CMatrix, cfg: &BeamformerConfig) -> Result<BeamformingMatrix, BeamformingError> {
    let raw = mmse_beamformer(h, cfg)?;
    let (normalized, zero_rows) = per_antenna_normalize(&raw, cfg);
    Ok(BeamformingMatrix {
        raw,
        normalized,
        zero_rows,
    })
}

/// Linear-domain SNR and INR of every user.
pub fn evaluate_linear(h_true: &CMatrix, b_norm: &CMatrix) -> Result<(Vec<f64>, Vec<f64>), BeamformingError> {
    if h_true.cols() != b_norm.rows() || h_true.rows() != b_norm.cols() {
        return Err(BeamformingError::DimensionMismatch("H is N_sched x N_R, B is N_R x N_sched"));
    }
    let g = h_true.matmul(b_norm).map_err(BeamformingError::NumericalFailure)?;
    let n = g.rows();
    let mut snr = Vec::with_capacity(n);
    let mut inr = Vec::with_capacity(n);
    for k in 0..n {
        let row = g.row(k);
        snr.push(row[k].norm_sqr());
        inr.push(
            row.iter()
                .enumerate()
                .filter(|(l, _)| *l != k)
                .map(|(_, x)| x.norm_sqr())
                .sum(),
        );
    }
    Ok((snr, inr))
}

pub fn evaluate_sinr(h_true: &CMatrix, b_norm: &CMatrix) -> Result<SinrReport, BeamformingError> {
    let (snr, inr) = evaluate_linear(h_true, b_norm)?;
    Ok(SinrReport {
        sinr_db: snr
            .iter()
            .zip(&inr)
            .map(|(s, i)| math::linear_to_db(s / (1.0 + i)))
            .collect(),
        snr_db: snr.iter().map(|s| math::linear_to_db(*s)).collect(),
        inr_db: inr.iter().map(|i| math::linear_to_db(*i)).collect(),
    })
}

/// Source of the channel the beamformer is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ReportMode {
    /// Reported CSI: the beamformer sees the true (loss-bearing) channel.
    Csi,
    /// Location reports: the beamformer sees the clear-sky channel rebuilt from positions.
    Geo,
}

/// Channels needed by the oracle for one scheduled group.
#[derive(Debug, Clone)]
pub struct GroupChannels {
    /// True channel, used to evaluate the SINR.
    pub truth: CMatrix,
    /// Channel the gNB knows: the reported CSI (equal to the truth) or the clear-sky rebuild.
    pub estimate: CMatrix,
}

pub fn group_channels(
    users: &[LineOfSight],
    extra_loss_db: &[f64],
    lb: &LinkBudget,
    array: &ArrayConfig,
    mode: ReportMode,
) -> Result<GroupChannels, BeamformingError> {
    let truth = build_channel_matrix(users, extra_loss_db, lb, array, false)?;
    let clear_sky = lb.stochastic_loss_db == 0.0 && extra_loss_db.iter().all(|l| *l == 0.0);
    let estimate = match mode {
        ReportMode::Geo if !clear_sky => build_channel_matrix(users, extra_loss_db, lb, array, true)?,
        _ => truth.clone(),
    };
    Ok(GroupChannels { truth, estimate })
}

pub fn sinr_from_channels(ch: &GroupChannels, cfg: &BeamformerConfig) -> Result<SinrReport, BeamformingError> {
    let bf = beamforming_matrix(&ch.estimate, cfg)?;
    evaluate_sinr(&ch.truth, &bf.normalized)
}

/// End-to-end oracle: channels, MMSE, normalization and SINR against the true channel.
pub fn sinr_oracle(
    users: &[LineOfSight],
    extra_loss_db: &[f64],
    lb: &LinkBudget,
    array: &ArrayConfig,
    cfg: &BeamformerConfig,
    mode: ReportMode,
) -> Result<SinrReport, BeamformingError> {
    sinr_from_channels(&group_channels(users, extra_loss_db, lb, array, mode)?, cfg)
}
