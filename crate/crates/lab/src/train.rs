//! Training loop with warm-restart schedule and cycle-level early stopping.

use std::path::Path;

use dmhsa_core::autodiff::{lr_at_epoch, AdamConfig, AdamState, EarlyStopper, StopDecision, Tensor};
use dmhsa_core::dmhsa::{loss_and_gradients, DmhsaParams, LabelStandardizer};
use dmhsa_core::seed::rng_for;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::dataset::{calibrate_standardizer, generate_batch};
use crate::error::{LabError, Result};
use crate::modelfile::TrainedModel;
use crate::report::{self, Field};

pub const MODEL_FILE: &str = "model.dmhs";
pub const CURVE_FILE: &str = "training_curve.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub epoch: u32,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub epochs_run: u32,
    pub first_epoch_loss: f64,
    pub best_cycle_mean: f64,
    pub last_cycle_mean: f64,
    pub best_cycle: Option<u32>,
    pub stopped_early: bool,
    pub parameter_count: usize,
}

pub struct TrainOutcome {
    pub model: TrainedModel,
    pub curve: Vec<CurvePoint>,
    pub summary: TrainSummary,
}

#[derive(Serialize)]
struct NonFiniteDump<'a> {
    epoch: u32,
    lr: f64,
    loss: f64,
    gradient_norms: Vec<(&'a str, f64)>,
    parameters_finite: bool,
    recent_losses: &'a [CurvePoint],
}

fn l2_norm(t: &Tensor) -> f64 {
    t.data().iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Trains from scratch. With `out` set, a non-finite loss leaves a JSON dump
/// there before the error is returned.
pub fn train(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let standardizer = calibrate_standardizer(cfg)?;
    train_with(cfg, standardizer, out)
}

pub fn train_with(cfg: &ExperimentConfig, standardizer: LabelStandardizer, out: Option<&Path>) -> Result<TrainOutcome> {
    let model_cfg = cfg.model_config();
    let schedule = cfg.lr_schedule();
    let mut params = DmhsaParams::init(&model_cfg, &mut rng_for(cfg.seed, "init", 0))?;
    let mut adam = AdamState::new(AdamConfig::default(), params.tensors());
    let mut stopper = EarlyStopper::new(cfg.train.patience_cycles);

    let mut curve = Vec::with_capacity(cfg.train.max_epochs as usize);
    let mut best: Option<(u32, DmhsaParams)> = None;
    let mut cycle_sum = 0.0;
    let mut cycle_len = 0u32;
    let mut last_cycle_mean = f64::NAN;
    let mut stopped_early = false;

    for epoch in 0..cfg.train.max_epochs {
        let lr = lr_at_epoch(epoch, &schedule);
        let batch = generate_batch(cfg, &standardizer, epoch)?;
        let (loss, grads) = loss_and_gradients(&params, &model_cfg, &batch.batch)?;
        curve.push(CurvePoint { epoch, lr, loss });

        let grads_finite = grads.iter().all(|g| g.data().iter().all(|x| x.is_finite()));
        if !loss.is_finite() || !grads_finite {
            let dump = match out {
                Some(dir) => {
                    let path = dir.join(format!("nonfinite_epoch_{epoch}.json"));
                    let names = &params.layout().names;
                    let d = NonFiniteDump {
                        epoch,
                        lr,
                        loss,
                        gradient_norms: names.iter().map(String::as_str).zip(grads.iter().map(l2_norm)).collect(),
                        parameters_finite: params.all_finite(),
                        recent_losses: &curve[curve.len().saturating_sub(20)..],
                    };
                    report::write_json(&path, &d)?;
                    path.display().to_string()
                }
                None => "<not written>".into(),
            };
            return Err(LabError::NonFiniteLoss { epoch, dump });
        }

        let grad_refs: Vec<&Tensor> = grads.iter().collect();
        adam.step(params.tensors_mut(), &grad_refs, lr, cfg.train.l2);

        if let Some(cycle) = schedule.cycle_of(epoch) {
            cycle_sum += loss;
            cycle_len += 1;
            if cycle_len == schedule.cycle_epochs.max(1) {
                last_cycle_mean = cycle_sum / f64::from(cycle_len);
                cycle_sum = 0.0;
                cycle_len = 0;
                let (improved, decision) = stopper.observe(last_cycle_mean);
                log::info!("cycle {cycle} (epoch {epoch}): mean loss {last_cycle_mean:.5}{}", if improved { " *" } else { "" });
                if improved {
                    best = Some((cycle, params.clone()));
                }
                if decision == StopDecision::Stop {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let parameter_count = dmhsa_core::dmhsa::count_parameters(&params);
    let (best_cycle, params) = match best {
        Some((c, p)) => (Some(c), p),
        None => (None, params),
    };
    let summary = TrainSummary {
        epochs_run: curve.len() as u32,
        first_epoch_loss: curve.first().map_or(f64::NAN, |p| p.loss),
        best_cycle_mean: stopper.best(),
        last_cycle_mean,
        best_cycle,
        stopped_early,
        parameter_count,
    };
    let model = TrainedModel {
        config: model_cfg,
        n_elements: cfg.n_elements(),
        standardizer,
        params,
    };
    Ok(TrainOutcome { model, curve, summary })
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let rows: Vec<Vec<Field>> = curve
        .iter()
        .map(|p| vec![p.epoch.into(), p.lr.into(), p.loss.into()])
        .collect();
    report::write_csv(path, &report::CURVE, &rows)
}
