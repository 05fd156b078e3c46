//! Dual multi-head self-attention (DMHSA) SINR estimator.
//!
//! Each scheduled user is embedded independently by two FC/LN/leaky-ReLU blocks,
//! a learned per-slot position embedding is added, and two attention modules
//! read the group: the SNR module attends over every valid user, the INR module
//! over every *other* valid user. The estimate is the difference of the two
//! per-user readouts, in standardized dB units.
//!
//! Parameter count (see [`count_parameters_closed_form`]):
//!
//! ```text
//! (δ+1)·N_C + 4·N_C + N_C·(N_C+1) + N_B·N_C + 2·(N_C+1)·(4·N_C+1)
//! ```
//!
//! The last term covers both modules: `h` heads with Q/K/V projections of
//! width `N_C/h` (3·N_C·(N_C+1) in total), the output projection N_C·(N_C+1)
//! and the scalar readout N_C+1.

mod complexity;
mod features;
mod labels;
mod model;
mod params;

pub use complexity::{complexity_estimate, ComplexityMethod};
pub use features::{extract_features_csi, extract_features_geo, AttentionMasks, FeatureMatrix, PaddingMask};
pub use labels::{masked_mse_loss, LabelStandardizer};
pub use model::{forward, forward_batch, forward_tape, loss_and_gradients, parameter_gradient_check, Batch, HeadOutputs, TapeHeads};
pub use params::{count_parameters, count_parameters_closed_form, DmhsaParams, ParamLayout};

use crate::autodiff::AutodiffError;
use crate::beamforming::ReportMode;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DmhsaError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("{users} users exceed the {n_beams} beam slots")]
    TooManyUsers { users: usize, n_beams: usize },
    #[error("user {index} has (u, v) = ({u}, {v}) outside the unit disc")]
    InvalidUv { index: usize, u: f64, v: f64 },
    #[error("calibration set is empty")]
    EmptySet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DmhsaConfig {
    pub variant: ReportMode,
    pub n_beams: usize,
    pub n_channels: usize,
    pub n_heads: usize,
    /// `N_R + 2` for CSI features, 3 for location features.
    pub feature_dim: usize,
    pub leaky_slope: f64,
}

impl DmhsaConfig {
    pub fn csi(n_elements: usize, n_beams: usize) -> Self {
        Self {
            variant: ReportMode::Csi,
            n_beams,
            n_channels: 8,
            n_heads: 4,
            feature_dim: n_elements + 2,
            leaky_slope: 0.01,
        }
    }

    pub fn geo(n_beams: usize) -> Self {
        Self {
            variant: ReportMode::Geo,
            n_beams,
            n_channels: 8,
            n_heads: 4,
            feature_dim: 3,
            leaky_slope: 0.01,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.n_channels / self.n_heads
    }

    pub fn validate(&self) -> Result<(), DmhsaError> {
        if self.n_beams == 0 || self.n_heads == 0 || self.n_channels == 0 {
            return Err(DmhsaError::InvalidConfig("n_beams, n_channels and n_heads must be positive"));
        }
        if !self.n_channels.is_multiple_of(self.n_heads) {
            return Err(DmhsaError::InvalidConfig("n_channels must be a multiple of n_heads"));
        }
        match self.variant {
            ReportMode::Geo if self.feature_dim != 3 => {
                Err(DmhsaError::InvalidConfig("location features have dimension 3"))
            }
            ReportMode::Csi if self.feature_dim < 3 => {
                Err(DmhsaError::InvalidConfig("CSI features need at least one element"))
            }
            _ if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) => {
                Err(DmhsaError::InvalidConfig("leaky slope must be finite and non-negative"))
            }
            _ => Ok(()),
        }
    }
}
