//! Random and priority-queue (PQS) user schedulers.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::cmatrix::{inner, norm};
use crate::Complex64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("population of {size} users is below the minimum group size {min}")]
    PopulationTooSmall { size: usize, min: usize },
    #[error("channel vector has zero norm")]
    ZeroVector,
    #[error("vectors have different lengths")]
    LengthMismatch,
    #[error("no user has pending traffic")]
    NoEligibleUsers,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("serving callback failed: {0}")]
    Serve(&'static str),
}

/// One slot's group. User indices refer to the population passed to the scheduler.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScheduledGroup {
    pub slot_index: usize,
    pub users: Vec<usize>,
}

/// Uniform group size in `min_size..=min(n_beams, population)`, members drawn
/// uniformly without replacement.
pub fn random_schedule<R: Rng + ?Sized>(
    rng: &mut R,
    population: usize,
    min_size: usize,
    n_beams: usize,
) -> Result<Vec<usize>, ScheduleError> {
    if min_size == 0 || min_size > n_beams {
        return Err(ScheduleError::InvalidConfig("need 1 <= min_size <= n_beams"));
    }
    if population < min_size {
        return Err(ScheduleError::PopulationTooSmall {
            size: population,
            min: min_size,
        });
    }
    let max_size = n_beams.min(population);
    let size = rng.random_range(min_size..=max_size);
    Ok(index::sample(rng, population, size).into_vec())
}

/// `|h_i · h_jᴴ| / (‖h_i‖ ‖h_j‖)`.
pub fn channel_correlation(h_i: &[Complex64], h_j: &[Complex64]) -> Result<f64, ScheduleError> {
    if h_i.len() != h_j.len() {
        return Err(ScheduleError::LengthMismatch);
    }
    let (a, b) = (norm(h_i), norm(h_j));
    if a == 0.0 || b == 0.0 {
        return Err(ScheduleError::ZeroVector);
    }
    Ok((inner(h_i, h_j).norm() / (a * b)).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TrafficModel {
    pub c_min_mbps: f64,
    pub c_max_mbps: f64,
}

/// Requested rate per user from its population-density rank.
///
/// The quantile is `rank / (n − 1)` with tied densities sharing their mean
/// rank; a single user gets quantile 0.5.
pub fn assign_traffic(density_weight: &[f64], t: &TrafficModel) -> Vec<f64> {
    let n = density_weight.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| density_weight[*a].total_cmp(&density_weight[*b]));
    let mut quantile = vec![0.5; n];
    if n > 1 {
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && density_weight[order[j + 1]] == density_weight[order[i]] {
                j += 1;
            }
            let mean_rank = (i + j) as f64 / 2.0;
            for k in &order[i..=j] {
                quantile[*k] = mean_rank / (n - 1) as f64;
            }
            i = j + 1;
        }
    }
    quantile
        .iter()
        .map(|q| t.c_min_mbps + (t.c_max_mbps - t.c_min_mbps) * q)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct PqsConfig {
    pub slot_duration_s: f64,
    pub scheduling_period_s: f64,
    /// `σ_vis`, in slots.
    pub max_residual_visibility: u32,
    /// `σ_cap`.
    pub unmet_capacity_factor: f64,
    pub n_priority_classes: u32,
    pub correlation_threshold: f64,
    pub distance_threshold_km: f64,
}

impl Default for PqsConfig {
    fn default() -> Self {
        Self {
            slot_duration_s: 0.01,
            scheduling_period_s: 2.0,
            max_residual_visibility: 50,
            unmet_capacity_factor: 2.0,
            n_priority_classes: 2,
            correlation_threshold: 0.5,
            distance_threshold_km: 30.0,
        }
    }
}

impl PqsConfig {
    pub fn slots_per_period(&self) -> usize {
        libm::round(self.scheduling_period_s / self.slot_duration_s) as usize
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if !(self.slot_duration_s > 0.0 && self.scheduling_period_s >= self.slot_duration_s) {
            return Err(ScheduleError::InvalidConfig("need 0 < slot duration <= scheduling period"));
        }
        if self.n_priority_classes < 2 {
            return Err(ScheduleError::InvalidConfig("at least two priority classes"));
        }
        if !(self.unmet_capacity_factor > 0.0) {
            return Err(ScheduleError::InvalidConfig("unmet capacity factor must be positive"));
        }
        if !(self.correlation_threshold > 0.0 && self.correlation_threshold <= 1.0) {
            return Err(ScheduleError::InvalidConfig("correlation threshold must lie in (0, 1]"));
        }
        if !(self.distance_threshold_km > 0.0) {
            return Err(ScheduleError::InvalidConfig("distance threshold must be positive"));
        }
        Ok(())
    }
}

/// Per-user PQS state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PqsUser {
    /// Traffic still to deliver in this period, Mbit.
    pub unmet_mbit: f64,
    /// Slots until the user leaves the coverage.
    pub remaining_visibility: u32,
    /// Traffic delivered so far, Mbit.
    pub served_mbit: f64,
}

impl PqsUser {
    /// A user requesting `c_req_mbps` over a whole scheduling period.
    pub fn with_request(c_req_mbps: f64, cfg: &PqsConfig, remaining_visibility: u32) -> Self {
        Self {
            unmet_mbit: c_req_mbps * cfg.scheduling_period_s,
            remaining_visibility,
            served_mbit: 0.0,
        }
    }

    fn active(&self) -> bool {
        self.unmet_mbit > 0.0 && self.remaining_visibility > 0
    }
}

/// Priority class of a user (0 = highest) from the number of urgency
/// conditions it meets: short residual visibility and a large backlog relative
/// to its fair share.
fn priority_class(user: &PqsUser, fair_share: f64, cfg: &PqsConfig) -> usize {
    let mut met = 0;
    if user.remaining_visibility < cfg.max_residual_visibility {
        met += 1;
    }
    if user.unmet_mbit > cfg.unmet_capacity_factor * fair_share {
        met += 1;
    }
    let classes = cfg.n_priority_classes as usize;
    let level = if classes == 2 { met.min(1) } else { met.min(classes - 1) };
    classes - 1 - level
}

/// Runs one scheduling period.
///
/// `compatible(i, j)` is the pairwise admission test of the mode in use.
/// `serve(group)` returns the achievable rate (Mbps) of each member, in group
/// order. The period ends early once no user has pending traffic. Returns one
/// group per served slot.
pub fn pqs_schedule<R, C, S>(
    rng: &mut R,
    users: &mut [PqsUser],
    cfg: &PqsConfig,
    n_beams: usize,
    compatible: C,
    mut serve: S,
) -> Result<Vec<ScheduledGroup>, ScheduleError>
where
    R: Rng + ?Sized,
    C: Fn(usize, usize) -> bool,
    S: FnMut(&ScheduledGroup) -> Result<Vec<f64>, ScheduleError>,
{
    cfg.validate()?;
    if n_beams == 0 {
        return Err(ScheduleError::InvalidConfig("n_beams must be positive"));
    }
    let slots = cfg.slots_per_period();
    let classes = cfg.n_priority_classes as usize;
    let mut groups = Vec::new();
    let mut served_total = 0.0;
    for slot in 0..slots {
        let active: Vec<usize> = (0..users.len()).filter(|&k| users[k].active()).collect();
        if active.is_empty() {
            break;
        }
        let fair_share = if slot == 0 {
            f64::INFINITY
        } else {
            served_total / slot as f64 / active.len() as f64 * (slots - slot) as f64
        };
        let mut queues: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for &k in &active {
            queues[priority_class(&users[k], fair_share, cfg)].push(k);
        }
        let mut group: Vec<usize> = Vec::with_capacity(n_beams);
        'fill: for queue in &mut queues {
            queue.shuffle(rng);
            for &k in queue.iter() {
                if group.len() == n_beams {
                    break 'fill;
                }
                if group.iter().all(|&j| compatible(j, k)) {
                    group.push(k);
                }
            }
        }
        let sg = ScheduledGroup {
            slot_index: slot,
            users: group,
        };
        let rates = serve(&sg)?;
        if rates.len() != sg.users.len() {
            return Err(ScheduleError::Serve("one rate per scheduled user"));
        }
        for (&k, rate) in sg.users.iter().zip(&rates) {
            let delivered = (rate.max(0.0) * cfg.slot_duration_s).min(users[k].unmet_mbit);
            users[k].unmet_mbit -= delivered;
            users[k].served_mbit += delivered;
            served_total += delivered;
        }
        for u in users.iter_mut() {
            u.remaining_visibility = u.remaining_visibility.saturating_sub(1);
        }
        groups.push(sg);
    }
    if groups.is_empty() {
        return Err(ScheduleError::NoEligibleUsers);
    }
    Ok(groups)
}

/// First slot whose group violates `compatible` or exceeds `n_beams`, if any.
pub fn audit_groups<C: Fn(usize, usize) -> bool>(groups: &[ScheduledGroup], n_beams: usize, compatible: C) -> Option<usize> {
    groups.iter().position(|g| {
        g.users.len() > n_beams
            || g.users.is_empty()
            || g.users
                .iter()
                .enumerate()
                .any(|(a, &i)| g.users[a + 1..].iter().any(|&j| i == j || !compatible(i, j)))
    })
}
