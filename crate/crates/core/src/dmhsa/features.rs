use alloc::vec;
use alloc::vec::Vec;

use super::{DmhsaError, LabelStandardizer};
use crate::autodiff::MASK_FORBIDDEN;
use crate::cmatrix::CMatrix;
use crate::geometry::UvCoordinate;
use crate::math;

/// Validity of the `N_B` slots: the first `n_valid` are real users.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PaddingMask {
    n_beams: usize,
    n_valid: usize,
}

impl PaddingMask {
    pub fn new(n_beams: usize, n_valid: usize) -> Result<Self, DmhsaError> {
        if n_valid > n_beams {
            return Err(DmhsaError::TooManyUsers {
                users: n_valid,
                n_beams,
            });
        }
        Ok(Self { n_beams, n_valid })
    }

    pub fn n_beams(&self) -> usize {
        self.n_beams
    }

    pub fn n_valid(&self) -> usize {
        self.n_valid
    }

    pub fn is_valid(&self, slot: usize) -> bool {
        slot < self.n_valid
    }

    /// 1.0 for valid slots, 0.0 for padding.
    pub fn bits(&self) -> Vec<f64> {
        (0..self.n_beams).map(|i| if self.is_valid(i) { 1.0 } else { 0.0 }).collect()
    }
}

/// Model input: `N_B × δ` row-major features; padded rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    feature_dim: usize,
    rows: Vec<f64>,
    mask: PaddingMask,
}

impl FeatureMatrix {
    /// Builds a padded matrix from the rows of the valid users.
    pub fn from_rows(n_beams: usize, feature_dim: usize, valid_rows: &[Vec<f64>]) -> Result<Self, DmhsaError> {
        let mask = PaddingMask::new(n_beams, valid_rows.len())?;
        let mut rows = vec![0.0; n_beams * feature_dim];
        for (k, r) in valid_rows.iter().enumerate() {
            if r.len() != feature_dim {
                return Err(DmhsaError::DimensionMismatch("feature row width"));
            }
            rows[k * feature_dim..(k + 1) * feature_dim].copy_from_slice(r);
        }
        Ok(Self { feature_dim, rows, mask })
    }

    pub fn n_beams(&self) -> usize {
        self.mask.n_beams
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn mask(&self) -> PaddingMask {
        self.mask
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }

    /// Mutable access to every slot, padded ones included.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.rows
    }

    pub fn row(&self, slot: usize) -> &[f64] {
        &self.rows[slot * self.feature_dim..(slot + 1) * self.feature_dim]
    }
}

/// Which user pairs may interact in each attention module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMasks {
    n_beams: usize,
    /// `N_B × N_B`, row = query slot.
    pub snr: Vec<bool>,
    pub inr: Vec<bool>,
}

impl AttentionMasks {
    pub fn new(mask: PaddingMask) -> Self {
        let n = mask.n_beams;
        let mut snr = vec![false; n * n];
        let mut inr = vec![false; n * n];
        for i in 0..mask.n_valid {
            for j in 0..mask.n_valid {
                snr[i * n + j] = true;
                inr[i * n + j] = i != j;
            }
        }
        Self { n_beams: n, snr, inr }
    }

    pub fn n_beams(&self) -> usize {
        self.n_beams
    }

    /// Additive forms: 0 where allowed, [`MASK_FORBIDDEN`] elsewhere.
    pub fn additive(&self) -> (Vec<f64>, Vec<f64>) {
        let f = |m: &Vec<bool>| m.iter().map(|a| if *a { 0.0 } else { MASK_FORBIDDEN }).collect();
        (f(&self.snr), f(&self.inr))
    }
}

/// Phase normalization `σ_φ = π/√3`, the standard deviation of a uniform phase.
pub const PHASE_SCALE: f64 = math::PI / 1.732_050_807_568_877_2;

/// Rows `[Φ_1..Φ_{N_R}, ψ, ρ]` from the estimated channel of each user.
pub fn extract_features_csi(
    h_hat: &CMatrix,
    n_beams: usize,
    standardizer: &LabelStandardizer,
) -> Result<FeatureMatrix, DmhsaError> {
    let n_sched = h_hat.rows();
    let n_r = h_hat.cols();
    if n_sched > n_beams {
        return Err(DmhsaError::TooManyUsers {
            users: n_sched,
            n_beams,
        });
    }
    if n_r == 0 {
        return Err(DmhsaError::DimensionMismatch("channel has no elements"));
    }
    let rho = n_sched as f64 / n_beams as f64;
    let rows: Vec<Vec<f64>> = (0..n_sched)
        .map(|k| {
            let h = h_hat.row(k);
            let mut row: Vec<f64> = h.iter().map(|c| math::atan2(c.im, c.re) / PHASE_SCALE).collect();
            let power = h.iter().map(|c| c.norm_sqr()).sum::<f64>() / n_r as f64;
            row.push(standardizer.standardize_power(power));
            row.push(rho);
            row
        })
        .collect();
    FeatureMatrix::from_rows(n_beams, n_r + 2, &rows)
}

/// Rows `[u, v, ρ]`.
pub fn extract_features_geo(users: &[UvCoordinate], n_beams: usize) -> Result<FeatureMatrix, DmhsaError> {
    if users.len() > n_beams {
        return Err(DmhsaError::TooManyUsers {
            users: users.len(),
            n_beams,
        });
    }
    let rho = users.len() as f64 / n_beams as f64;
    let mut rows = Vec::with_capacity(users.len());
    for (index, uv) in users.iter().enumerate() {
        if !(uv.u * uv.u + uv.v * uv.v <= 1.0) {
            return Err(DmhsaError::InvalidUv { index, u: uv.u, v: uv.v });
        }
        rows.push(vec![uv.u, uv.v, rho]);
    }
    FeatureMatrix::from_rows(n_beams, 3, &rows)
}
