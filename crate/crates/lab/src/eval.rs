//! Evaluation protocols: random scheduling and PQS with bias correction.

use std::collections::BTreeMap;

use dmhsa_core::beamforming::{group_channels, ReportMode};
use dmhsa_core::dmhsa::{forward_batch, LabelStandardizer};
use dmhsa_core::geometry::remaining_visibility_s;
use dmhsa_core::scenario::{GroupSample, ScenarioError};
use dmhsa_core::scheduling::{
    assign_traffic, audit_groups, channel_correlation, pqs_schedule, PqsUser, ScheduleError, ScheduledGroup,
    TrafficModel,
};
use dmhsa_core::seed::rng_for;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::dataset::{assemble, random_samples, TAG_EVAL};
use crate::error::{LabError, Result};
use crate::modelfile::TrainedModel;

pub const TAG_PQS_CALIBRATION: &str = "pqs-calibration";
pub const TAG_PQS_EVAL: &str = "pqs-eval";

/// One SINR estimate and its oracle label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub n_sched: usize,
    /// Model output before de-standardization.
    pub raw: f64,
    pub label_db: f64,
    pub estimate_db: f64,
}

impl Estimate {
    pub fn error(&self) -> f64 {
        self.estimate_db - self.label_db
    }
}

pub fn rmse(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of mid-ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// PDF-normalized histogram over `[lo, hi]` with the last bin closed.
/// Returns `(left, right, density)` per bin.
pub fn pdf_histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64, f64)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in xs {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = xs.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let left = lo + width * b as f64;
            let right = if b + 1 == bins { hi } else { lo + width * (b + 1) as f64 };
            (left, right, c as f64 / (n * width))
        })
        .collect()
}

/// Empirical CDF of `xs`, thinned to at most `max_points` points and always
/// ending at probability one.
pub fn empirical_cdf(xs: &[f64], max_points: usize) -> Vec<(f64, f64)> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let step = n.div_ceil(max_points.max(1)).max(1);
    let mut out: Vec<(f64, f64)> = (step - 1..n).step_by(step).map(|i| (v[i], (i + 1) as f64 / n as f64)).collect();
    if out.last().is_some_and(|p| p.1 < 1.0) {
        out.push((v[n - 1], 1.0));
    }
    out
}

fn check_model(model: &TrainedModel, cfg: &ExperimentConfig) -> Result<()> {
    if model.config != cfg.model_config() || model.n_elements != cfg.n_elements() {
        return Err(LabError::ModelFile(
            "model dimensions do not match the configuration (variant, beams, array)".into(),
        ));
    }
    Ok(())
}

/// Model estimates for every valid slot of `samples`, with `standardizer`
/// (and its bias) applied.
pub fn predict(
    model: &TrainedModel,
    cfg: &ExperimentConfig,
    standardizer: &LabelStandardizer,
    samples: &[GroupSample],
) -> Result<Vec<Estimate>> {
    let chunk = cfg.eval.inference_chunk.max(1);
    let parts = samples
        .par_chunks(chunk)
        .map(|part| -> Result<Vec<Estimate>> {
            let lb = assemble(cfg, &model.standardizer, part)?;
            let outs = forward_batch(&model.params, &model.config, &lb.batch)?;
            let mut est = Vec::new();
            for (o, labels) in outs.iter().zip(&lb.labels_db) {
                for (k, &label_db) in labels.iter().enumerate() {
                    est.push(Estimate {
                        n_sched: labels.len(),
                        raw: o.out[k],
                        label_db,
                        estimate_db: standardizer.destandardize(o.out[k]),
                    });
                }
            }
            Ok(est)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeStats {
    pub n_sched: usize,
    pub estimates: usize,
    pub rmse_db: f64,
    pub mean_error_db: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RandomSummary {
    pub estimates: usize,
    pub samples: usize,
    pub rmse_db: f64,
    pub mean_error_db: f64,
    /// RMSE of predicting the test-label mean everywhere.
    pub constant_mean_rmse_db: f64,
    pub rmse_ratio: f64,
    /// Rank correlation of group size against per-size RMSE.
    pub spearman_size_vs_rmse: f64,
    pub by_size: Vec<SizeStats>,
}

pub struct RandomEval {
    pub estimates: Vec<Estimate>,
    pub summary: RandomSummary,
    /// Per group size: `(left, right, density)` bins.
    pub histograms: BTreeMap<usize, Vec<(f64, f64, f64)>>,
}

pub fn group_by_size(estimates: &[Estimate]) -> BTreeMap<usize, Vec<f64>> {
    let mut m: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for e in estimates {
        m.entry(e.n_sched).or_default().push(e.error());
    }
    m
}

/// Fresh random-scheduler test set of at least `eval.test_estimates` estimates.
pub fn eval_random(model: &TrainedModel, cfg: &ExperimentConfig) -> Result<RandomEval> {
    check_model(model, cfg)?;
    let chunk = cfg.eval.inference_chunk.max(1);
    let mut estimates = Vec::new();
    let mut samples = 0;
    let mut round = 0u64;
    while estimates.len() < cfg.eval.test_estimates {
        let batch = random_samples(cfg, TAG_EVAL, round, chunk)?;
        samples += batch.len();
        estimates.extend(predict(model, cfg, &model.standardizer, &batch)?);
        round += 1;
    }
    let errors: Vec<f64> = estimates.iter().map(Estimate::error).collect();
    let labels: Vec<f64> = estimates.iter().map(|e| e.label_db).collect();
    let mu = mean(&labels);
    let constant: Vec<f64> = labels.iter().map(|l| mu - l).collect();
    let groups = group_by_size(&estimates);
    let by_size: Vec<SizeStats> = groups
        .iter()
        .map(|(&n, errs)| SizeStats {
            n_sched: n,
            estimates: errs.len(),
            rmse_db: rmse(errs),
            mean_error_db: mean(errs),
        })
        .collect();
    let lo = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let histograms = groups
        .iter()
        .map(|(&n, errs)| (n, pdf_histogram(errs, lo, hi, cfg.eval.histogram_bins)))
        .collect();
    let sizes: Vec<f64> = by_size.iter().map(|s| s.n_sched as f64).collect();
    let rmses: Vec<f64> = by_size.iter().map(|s| s.rmse_db).collect();
    let total = rmse(&errors);
    let base = rmse(&constant);
    let summary = RandomSummary {
        estimates: estimates.len(),
        samples,
        rmse_db: total,
        mean_error_db: mean(&errors),
        constant_mean_rmse_db: base,
        rmse_ratio: total / base,
        spearman_size_vs_rmse: if sizes.len() > 1 { spearman(&sizes, &rmses) } else { f64::NAN },
        by_size,
    };
    Ok(RandomEval {
        estimates,
        summary,
        histograms,
    })
}

/// One traffic cell of the PQS grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrafficCell {
    pub c_min_mbps: f64,
    pub c_max_mbps: f64,
}

impl TrafficCell {
    pub fn grid(cfg: &ExperimentConfig) -> Vec<TrafficCell> {
        let mut cells = Vec::new();
        for &c_min_mbps in &cfg.pqs.c_min_mbps {
            for &c_max_mbps in &cfg.pqs.c_max_mbps {
                cells.push(TrafficCell { c_min_mbps, c_max_mbps });
            }
        }
        cells
    }
}

/// Outcome of one PQS scheduling period.
#[derive(Debug, Clone)]
pub struct PeriodResult {
    pub period: u64,
    pub visible_users: usize,
    pub groups: Vec<ScheduledGroup>,
    /// Estimates of every scheduled user, slot by slot, without bias correction.
    pub estimates: Vec<Estimate>,
    /// First slot failing the pairwise audit, if any.
    pub audit_violation: Option<usize>,
    /// Whether any user received more than it requested.
    pub over_served: bool,
}

fn shannon_mbps(bandwidth_hz: f64, sinr_db: f64) -> f64 {
    bandwidth_hz * (1.0 + 10f64.powf(sinr_db / 10.0)).log2() / 1e6
}

/// Runs PQS period `period` of stream `tag` under traffic `cell` and returns
/// the schedule (without estimates) plus the oracle sample of every slot.
/// Periods with the same `(seed, tag, period)` share the population, pass
/// instant and shuffles across cells. `periods` is the length of the run and
/// sets the pass slice the instant is drawn from.
pub fn pqs_schedule_period(
    cfg: &ExperimentConfig,
    cell: TrafficCell,
    tag: &str,
    period: u64,
    periods: u64,
) -> Result<(PeriodResult, Vec<GroupSample>)> {
    let scen = cfg.pqs_scenario();
    let sched = &cfg.pqs.scheduler;
    let mode = cfg.variant;
    let mut rng = rng_for(cfg.seed, tag, period);
    // Period p of P observes the pass inside the p-th of P equal slices, so a
    // run covers the whole pass evenly.
    let periods = periods.max(period + 1) as f64;
    let lo = period as f64 / periods;
    let hi = ((period + 1) as f64 / periods).min(1.0);
    let inst = scen.instant_in(&mut rng, 1, lo, hi)?;
    let n = inst.los.len();

    let traffic = TrafficModel {
        c_min_mbps: cell.c_min_mbps,
        c_max_mbps: cell.c_max_mbps,
    };
    let requests = assign_traffic(&inst.density_weight, &traffic);
    let pass = scen.pass();
    let mut users: Vec<PqsUser> = requests
        .iter()
        .zip(&inst.positions)
        .map(|(&c, p)| {
            let vis = remaining_visibility_s(&pass, &scen.orbit, inst.pass_instant.along_track_rad, p);
            let slots = (vis / sched.slot_duration_s).floor().min(f64::from(u32::MAX)) as u32;
            PqsUser::with_request(c, sched, slots)
        })
        .collect();

    let mut compatible = vec![true; n * n];
    match mode {
        ReportMode::Csi => {
            let ch = group_channels(&inst.los, &inst.extra_loss_db, &scen.link, &scen.array, mode)
                .map_err(ScenarioError::from)?;
            for i in 0..n {
                for j in i + 1..n {
                    let rho = channel_correlation(ch.truth.row(i), ch.truth.row(j)).map_err(ScenarioError::from)?;
                    let ok = rho < sched.correlation_threshold;
                    compatible[i * n + j] = ok;
                    compatible[j * n + i] = ok;
                }
            }
        }
        ReportMode::Geo => {
            for i in 0..n {
                for j in i + 1..n {
                    let d = inst.positions[i].great_circle_km(&inst.positions[j], scen.orbit.earth_radius_km);
                    let ok = d > sched.distance_threshold_km;
                    compatible[i * n + j] = ok;
                    compatible[j * n + i] = ok;
                }
            }
        }
    }
    let compat = |i: usize, j: usize| compatible[i * n + j];

    let mut samples = Vec::new();
    let mut failure: Option<ScenarioError> = None;
    let bandwidth = cfg.link.user_bandwidth_hz;
    let groups = pqs_schedule(&mut rng, &mut users, sched, scen.n_beams, compat, |g| {
        match scen.label_group(&inst, &g.users, mode) {
            Ok(s) => {
                let rates = s.sinr.sinr_db.iter().map(|&x| shannon_mbps(bandwidth, x)).collect();
                samples.push(s);
                Ok(rates)
            }
            Err(e) => {
                failure = Some(e);
                Err(ScheduleError::Serve("oracle evaluation failed"))
            }
        }
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    let groups = groups.map_err(ScenarioError::from)?;
    let audit_violation = audit_groups(&groups, scen.n_beams, compat);
    let over_served = users
        .iter()
        .zip(&requests)
        .any(|(u, &c)| u.served_mbit > c * sched.scheduling_period_s * (1.0 + 1e-12));
    let result = PeriodResult {
        period,
        visible_users: n,
        groups,
        estimates: Vec::new(),
        audit_violation,
        over_served,
    };
    Ok((result, samples))
}

/// [`pqs_schedule_period`] followed by bias-free model estimates of every
/// scheduled user; the channel samples are dropped.
pub fn pqs_period(
    model: &TrainedModel,
    cfg: &ExperimentConfig,
    cell: TrafficCell,
    tag: &str,
    period: u64,
    periods: u64,
) -> Result<PeriodResult> {
    let (mut result, samples) = pqs_schedule_period(cfg, cell, tag, period, periods)?;
    let mut unbiased = model.standardizer;
    unbiased.bias_db = 0.0;
    result.estimates = predict(model, cfg, &unbiased, &samples)?;
    Ok(result)
}

pub fn pqs_periods(
    model: &TrainedModel,
    cfg: &ExperimentConfig,
    cell: TrafficCell,
    tag: &str,
    count: usize,
) -> Result<Vec<PeriodResult>> {
    (0..count as u64)
        .into_par_iter()
        .map(|p| pqs_period(model, cfg, cell, tag, p, count as u64))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub c_min_mbps: f64,
    pub c_max_mbps: f64,
    pub bias_db: f64,
    pub calibration_estimates: usize,
    /// Mean signed error on the calibration sample after correction.
    pub calibration_mean_error_db: f64,
    pub test_estimates: usize,
    /// Mean signed error on fresh periods of the same cell after correction.
    pub test_mean_error_db: f64,
    /// Standard error of `test_mean_error_db` from per-period means.
    pub test_mean_error_se_db: f64,
    pub rmse_db: f64,
    pub median_abs_error_db: f64,
    pub mean_group_size: f64,
    pub audit_violations: usize,
    pub over_served_periods: usize,
}

pub struct CellEval {
    pub cell: TrafficCell,
    pub summary: CellSummary,
    pub estimates: Vec<Estimate>,
    pub periods: Vec<PeriodResult>,
}

fn with_bias(estimates: &[Estimate], s: &LabelStandardizer) -> Vec<Estimate> {
    estimates
        .iter()
        .map(|e| Estimate {
            estimate_db: s.destandardize(e.raw),
            ..*e
        })
        .collect()
}

/// Per-cell bias from held-out calibration periods.
pub fn calibrate_cell(model: &TrainedModel, cfg: &ExperimentConfig, cell: TrafficCell) -> Result<(LabelStandardizer, Vec<Estimate>)> {
    check_model(model, cfg)?;
    let periods = pqs_periods(model, cfg, cell, TAG_PQS_CALIBRATION, cfg.pqs.calibration_periods)?;
    let raw: Vec<Estimate> = periods.into_iter().flat_map(|p| p.estimates).collect();
    let mut std = model.standardizer;
    let outputs: Vec<f64> = raw.iter().map(|e| e.raw).collect();
    let labels: Vec<f64> = raw.iter().map(|e| e.label_db).collect();
    std.calibrate_bias(&outputs, &labels)?;
    let corrected = with_bias(&raw, &std);
    Ok((std, corrected))
}

/// Standard error of the pooled mean signed error with periods as the
/// independent units (ratio-estimator form).
fn period_standard_error(periods: &[PeriodResult], bias_db: f64) -> f64 {
    let sums: Vec<(f64, f64)> = periods
        .iter()
        .map(|p| (p.estimates.iter().map(|e| e.error() - bias_db).sum::<f64>(), p.estimates.len() as f64))
        .collect();
    let total: f64 = sums.iter().map(|s| s.1).sum();
    let m = sums.iter().map(|s| s.0).sum::<f64>() / total;
    let k = sums.len() as f64;
    let ss: f64 = sums.iter().map(|(e, n)| (e - m * n).powi(2)).sum();
    (ss * k / (k - 1.0)).sqrt() / total
}

pub fn eval_pqs_cell(model: &TrainedModel, cfg: &ExperimentConfig, cell: TrafficCell) -> Result<CellEval> {
    let (std, calibration) = calibrate_cell(model, cfg, cell)?;
    let periods = pqs_periods(model, cfg, cell, TAG_PQS_EVAL, cfg.pqs.periods)?;
    let raw: Vec<Estimate> = periods.iter().flat_map(|p| p.estimates.iter().copied()).collect();
    let estimates = with_bias(&raw, &std);
    let errors: Vec<f64> = estimates.iter().map(Estimate::error).collect();
    let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    let calib_err: Vec<f64> = calibration.iter().map(Estimate::error).collect();
    let n_groups: usize = periods.iter().map(|p| p.groups.len()).sum();
    let n_members: usize = periods.iter().flat_map(|p| &p.groups).map(|g| g.users.len()).sum();
    let summary = CellSummary {
        c_min_mbps: cell.c_min_mbps,
        c_max_mbps: cell.c_max_mbps,
        bias_db: std.bias_db,
        calibration_estimates: calibration.len(),
        calibration_mean_error_db: mean(&calib_err),
        test_estimates: estimates.len(),
        test_mean_error_db: mean(&errors),
        test_mean_error_se_db: period_standard_error(&periods, std.bias_db),
        rmse_db: rmse(&errors),
        median_abs_error_db: median(&abs),
        mean_group_size: n_members as f64 / n_groups as f64,
        audit_violations: periods.iter().filter(|p| p.audit_violation.is_some()).count(),
        over_served_periods: periods.iter().filter(|p| p.over_served).count(),
    };
    Ok(CellEval {
        cell,
        summary,
        estimates,
        periods,
    })
}

pub fn eval_pqs(model: &TrainedModel, cfg: &ExperimentConfig) -> Result<Vec<CellEval>> {
    check_model(model, cfg)?;
    TrafficCell::grid(cfg)
        .into_iter()
        .map(|c| eval_pqs_cell(model, cfg, c))
        .collect()
}
