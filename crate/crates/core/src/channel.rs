//! Per-element channel coefficients of the satellite's direct radiating array.
//!
//! The amplitude follows the free-space link budget evaluated at the
//! user-to-centroid slant range and is identical for every element. The phase
//! uses the far-field per-element path length `d_k - p_n · r̂_k`, which gives the
//! channel rows their spatial signature.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::cmatrix::CMatrix;
use crate::geometry::{LineOfSight, Vec3};
use crate::math::{self, BOLTZMANN, PI, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChannelError {
    #[error("cannot build a channel matrix for an empty user group")]
    EmptyGroup,
    #[error("invalid channel configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("{users} users but {losses} loss entries")]
    LossCountMismatch { users: usize, losses: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ArrayConfig {
    pub n_elements: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub element_spacing_m: f64,
    /// Power gain of one element at boresight (linear).
    pub element_boresight_gain: f64,
    /// `q` in the `cos^q` element power pattern.
    pub element_pattern_exponent: f64,
}

impl ArrayConfig {
    /// Rectangular grid with half-wavelength spacing and a `cos^q` element whose
    /// boresight gain `2(q+1)` radiates unit power into the hemisphere.
    pub fn half_wavelength(grid_rows: usize, grid_cols: usize, carrier_frequency_hz: f64, q: f64) -> Self {
        Self {
            n_elements: grid_rows * grid_cols,
            grid_rows,
            grid_cols,
            element_spacing_m: SPEED_OF_LIGHT / carrier_frequency_hz / 2.0,
            element_boresight_gain: 2.0 * (q + 1.0),
            element_pattern_exponent: q,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(ChannelError::InvalidConfig("grid dimensions must be positive"));
        }
        if self.grid_rows * self.grid_cols != self.n_elements {
            return Err(ChannelError::InvalidConfig("grid_rows * grid_cols must equal n_elements"));
        }
        if !(self.element_spacing_m > 0.0) {
            return Err(ChannelError::InvalidConfig("element spacing must be positive"));
        }
        if !(self.element_boresight_gain > 0.0) || !(self.element_pattern_exponent >= 0.0) {
            return Err(ChannelError::InvalidConfig("element pattern parameters out of range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct LinkBudget {
    pub carrier_frequency_hz: f64,
    pub user_bandwidth_hz: f64,
    pub noise_temperature_k: f64,
    /// Receive antenna power gain (linear).
    pub rx_gain: f64,
    /// Deterministic part of the stochastic loss `L_k`, dB.
    pub stochastic_loss_db: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 20e9,
            user_bandwidth_hz: 190.08e6,
            noise_temperature_k: 250.0,
            // 39.7 dBi, a Ka-band VSAT terminal.
            rx_gain: 9_332.543_007_969_914,
            stochastic_loss_db: 0.0,
        }
    }
}

impl LinkBudget {
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn noise_power_w(&self) -> f64 {
        BOLTZMANN * self.user_bandwidth_hz * self.noise_temperature_k
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive = [
            self.carrier_frequency_hz,
            self.user_bandwidth_hz,
            self.noise_temperature_k,
            self.rx_gain,
        ];
        if positive.iter().any(|x| !(*x > 0.0)) {
            return Err(ChannelError::InvalidConfig("link budget terms must be positive"));
        }
        if !(self.stochastic_loss_db >= 0.0) {
            return Err(ChannelError::InvalidConfig("stochastic loss must be >= 0 dB"));
        }
        Ok(())
    }
}

/// Element centers on the array face (z = 0), centroid at the origin. Element
/// `r * grid_cols + c` sits on row `r` (x-axis) and column `c` (y-axis).
pub fn element_positions(cfg: &ArrayConfig) -> Vec<Vec3> {
    let s = cfg.element_spacing_m;
    let x0 = (cfg.grid_rows as f64 - 1.0) / 2.0;
    let y0 = (cfg.grid_cols as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(cfg.grid_rows * cfg.grid_cols);
    for r in 0..cfg.grid_rows {
        for c in 0..cfg.grid_cols {
            out.push([(r as f64 - x0) * s, (c as f64 - y0) * s, 0.0]);
        }
    }
    out
}

/// Amplitude gain of one element at `off_boresight_rad`.
pub fn element_tx_gain(cfg: &ArrayConfig, off_boresight_rad: f64) -> f64 {
    if off_boresight_rad >= PI / 2.0 {
        return 0.0;
    }
    let c = math::cos(off_boresight_rad).max(0.0);
    math::sqrt(cfg.element_boresight_gain) * math::powf(c, cfg.element_pattern_exponent / 2.0)
}

/// Channel amplitude, identical for all elements.
pub fn channel_amplitude(los: &LineOfSight, lb: &LinkBudget, cfg: &ArrayConfig, loss_db: f64) -> f64 {
    let g_tx = element_tx_gain(cfg, los.off_nadir_rad);
    let g_rx = math::sqrt(lb.rx_gain);
    let spreading = 4.0 * PI * los.slant_range_m / lb.wavelength_m();
    g_tx * g_rx / (spreading * math::sqrt(math::db_to_linear(loss_db) * lb.noise_power_w()))
}

/// Phase `-2π d / λ` reduced to (-π, π].
fn propagation_phase(path_m: f64, wavelength_m: f64) -> f64 {
    let cycles = path_m / wavelength_m;
    let frac = cycles - libm::round(cycles);
    -2.0 * PI * frac
}

/// Coefficient between the user described by `los` and the element at `element`.
pub fn channel_coefficient(
    los: &LineOfSight,
    element: Vec3,
    lb: &LinkBudget,
    cfg: &ArrayConfig,
    loss_db: f64,
) -> Complex64 {
    let amp = channel_amplitude(los, lb, cfg, loss_db);
    let path = los.slant_range_m - (element[0] * los.uv.u + element[1] * los.uv.v);
    Complex64::from_polar(amp, propagation_phase(path, lb.wavelength_m()))
}

pub fn channel_row(
    los: &LineOfSight,
    positions: &[Vec3],
    lb: &LinkBudget,
    cfg: &ArrayConfig,
    loss_db: f64,
) -> Vec<Complex64> {
    let amp = channel_amplitude(los, lb, cfg, loss_db);
    let lambda = lb.wavelength_m();
    positions
        .iter()
        .map(|p| {
            let path = los.slant_range_m - (p[0] * los.uv.u + p[1] * los.uv.v);
            Complex64::from_polar(amp, propagation_phase(path, lambda))
        })
        .collect()
}

/// Channel matrix with one row per scheduled user.
///
/// The loss of user `k` is `lb.stochastic_loss_db + extra_loss_db[k]` (an empty
/// `extra_loss_db` means no per-user term). With `clear_sky` set every loss is
/// forced to 0 dB, which gives the theoretical channel computed from locations.
pub fn build_channel_matrix(
    users: &[LineOfSight],
    extra_loss_db: &[f64],
    lb: &LinkBudget,
    cfg: &ArrayConfig,
    clear_sky: bool,
) -> Result<CMatrix, ChannelError> {
    if users.is_empty() {
        return Err(ChannelError::EmptyGroup);
    }
    if !extra_loss_db.is_empty() && extra_loss_db.len() != users.len() {
        return Err(ChannelError::LossCountMismatch {
            users: users.len(),
            losses: extra_loss_db.len(),
        });
    }
    // The planar grid makes the phase separable: one rotation per row, one per
    // column and one for the common slant range.
    let lambda = lb.wavelength_m();
    let s = cfg.element_spacing_m;
    let x0 = (cfg.grid_rows as f64 - 1.0) / 2.0;
    let y0 = (cfg.grid_cols as f64 - 1.0) / 2.0;
    let mut h = CMatrix::zeros(users.len(), cfg.grid_rows * cfg.grid_cols);
    let mut row_rot = Vec::with_capacity(cfg.grid_rows);
    let mut col_rot = Vec::with_capacity(cfg.grid_cols);
    for (k, los) in users.iter().enumerate() {
        let loss = if clear_sky {
            0.0
        } else {
            lb.stochastic_loss_db + extra_loss_db.get(k).copied().unwrap_or(0.0)
        };
        let amp = channel_amplitude(los, lb, cfg, loss);
        let base = Complex64::from_polar(amp, propagation_phase(los.slant_range_m, lambda));
        row_rot.clear();
        row_rot.extend((0..cfg.grid_rows).map(|r| Complex64::cis(2.0 * PI * (r as f64 - x0) * s * los.uv.u / lambda)));
        col_rot.clear();
        col_rot.extend((0..cfg.grid_cols).map(|c| Complex64::cis(2.0 * PI * (c as f64 - y0) * s * los.uv.v / lambda)));
        let row = h.row_mut(k);
        for (r, rr) in row_rot.iter().enumerate() {
            let br = base * rr;
            for (c, cc) in col_rot.iter().enumerate() {
                row[r * cfg.grid_cols + c] = br * cc;
            }
        }
    }
    Ok(h)
}
