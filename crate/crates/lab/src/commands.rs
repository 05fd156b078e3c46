//! Subcommand bodies: each reads a configuration, runs one protocol and writes
//! its result files into an output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use dmhsa_core::dmhsa::LabelStandardizer;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::dataset::calibrate_standardizer;
use crate::error::{LabError, Result};
use crate::eval::{self, calibrate_cell, empirical_cdf, eval_pqs, eval_random, TrafficCell};
use crate::modelfile::TrainedModel;
use crate::report::{self, Field};
use crate::selftest::{self, Check};
use crate::train::{self, TrainSummary, CURVE_FILE, MODEL_FILE};

pub const CALIBRATION_FILE: &str = "calibration.json";
pub const HISTOGRAM_FILE: &str = "error_histogram.csv";
pub const RMSE_BY_SIZE_FILE: &str = "rmse_by_size.csv";
pub const CDF_FILE: &str = "pqs_abs_error_cdf.csv";
pub const SCHEDULE_FILE: &str = "pqs_schedules.csv";
pub const PQS_TABLE_FILE: &str = "pqs_rmse.json";
pub const BIAS_FILE: &str = "pqs_bias.json";
pub const COMPLEXITY_FILE: &str = "complexity.csv";

/// Maximum number of points per cell in the CDF file.
const CDF_POINTS: usize = 2000;

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(LabError::io(format!("creating {}", dir.display())))
}

fn load_model(model: Option<&Path>, out: &Path) -> Result<TrainedModel> {
    let path: PathBuf = model.map_or_else(|| out.join(MODEL_FILE), Path::to_path_buf);
    TrainedModel::load(&path)
}

pub fn gen_calibration(cfg: &ExperimentConfig, out: &Path) -> Result<LabelStandardizer> {
    cfg.validate()?;
    ensure_dir(out)?;
    let t = Instant::now();
    let s = calibrate_standardizer(cfg)?;
    report::write_json(&out.join(CALIBRATION_FILE), &s)?;
    report::write_metadata(out, "gen-calibration", cfg, t.elapsed(), s)?;
    Ok(s)
}

/// Trains and writes the model and curve. A `calibration.json` already present
/// in `out` is used instead of recomputing the statistics.
pub fn train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    ensure_dir(out)?;
    let t = Instant::now();
    let cal_path = out.join(CALIBRATION_FILE);
    let standardizer = if cal_path.exists() {
        let text = std::fs::read_to_string(&cal_path).map_err(LabError::io(format!("reading {}", cal_path.display())))?;
        let s: LabelStandardizer = serde_json::from_str(&text)?;
        s.validate()?;
        s
    } else {
        gen_calibration(cfg, out)?
    };
    let outcome = train::train_with(cfg, standardizer, Some(out))?;
    outcome.model.save(&out.join(MODEL_FILE))?;
    train::write_curve(&out.join(CURVE_FILE), &outcome.curve)?;
    log::info!(
        "trained {} epochs; first loss {:.4}, best cycle mean {:.4}",
        outcome.summary.epochs_run,
        outcome.summary.first_epoch_loss,
        outcome.summary.best_cycle_mean
    );
    report::write_metadata(out, "train", cfg, t.elapsed(), &outcome.summary)?;
    Ok(outcome.summary)
}

pub fn eval_random_cmd(cfg: &ExperimentConfig, model: Option<&Path>, out: &Path) -> Result<eval::RandomSummary> {
    cfg.validate()?;
    ensure_dir(out)?;
    let t = Instant::now();
    let model = load_model(model, out)?;
    let ev = eval_random(&model, cfg)?;
    let hist: Vec<Vec<Field>> = ev
        .histograms
        .iter()
        .flat_map(|(&n, bins)| bins.iter().map(move |&(l, r, d)| vec![n.into(), l.into(), r.into(), d.into()]))
        .collect();
    report::write_csv(&out.join(HISTOGRAM_FILE), &report::HISTOGRAM, &hist)?;
    let rows: Vec<Vec<Field>> = ev
        .summary
        .by_size
        .iter()
        .map(|s| vec![s.n_sched.into(), s.estimates.into(), s.rmse_db.into(), s.mean_error_db.into()])
        .collect();
    report::write_csv(&out.join(RMSE_BY_SIZE_FILE), &report::RMSE_BY_SIZE, &rows)?;
    report::write_json(&out.join("eval_random.json"), &ev.summary)?;
    report::write_metadata(out, "eval-random", cfg, t.elapsed(), &ev.summary)?;
    Ok(ev.summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct CellBias {
    pub c_min_mbps: f64,
    pub c_max_mbps: f64,
    pub bias_db: f64,
    pub estimates: usize,
}

pub fn calibrate_bias(cfg: &ExperimentConfig, model: Option<&Path>, out: &Path) -> Result<Vec<CellBias>> {
    cfg.validate()?;
    ensure_dir(out)?;
    let t = Instant::now();
    let model = load_model(model, out)?;
    let biases = TrafficCell::grid(cfg)
        .into_iter()
        .map(|cell| {
            let (s, est) = calibrate_cell(&model, cfg, cell)?;
            Ok(CellBias {
                c_min_mbps: cell.c_min_mbps,
                c_max_mbps: cell.c_max_mbps,
                bias_db: s.bias_db,
                estimates: est.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    report::write_json(&out.join(BIAS_FILE), &biases)?;
    report::write_metadata(out, "calibrate-bias", cfg, t.elapsed(), &biases)?;
    Ok(biases)
}

#[derive(Debug, Clone, Serialize)]
pub struct PqsTable {
    pub variant: String,
    pub cells: Vec<eval::CellSummary>,
}

pub fn eval_pqs_cmd(cfg: &ExperimentConfig, model: Option<&Path>, out: &Path) -> Result<PqsTable> {
    cfg.validate()?;
    ensure_dir(out)?;
    let t = Instant::now();
    let model = load_model(model, out)?;
    let cells = eval_pqs(&model, cfg)?;
    let mut cdf_rows = Vec::new();
    let mut schedule_rows = Vec::new();
    for c in &cells {
        let abs: Vec<f64> = c.estimates.iter().map(|e| e.error().abs()).collect();
        for (x, p) in empirical_cdf(&abs, CDF_POINTS) {
            cdf_rows.push(vec![c.cell.c_min_mbps.into(), c.cell.c_max_mbps.into(), x.into(), p.into()]);
        }
        for p in &c.periods {
            for g in &p.groups {
                let ids: Vec<String> = g.users.iter().map(usize::to_string).collect();
                schedule_rows.push(vec![
                    c.cell.c_min_mbps.into(),
                    c.cell.c_max_mbps.into(),
                    p.period.into(),
                    g.slot_index.into(),
                    ids.join(" ").into(),
                ]);
            }
        }
    }
    report::write_csv(&out.join(CDF_FILE), &report::CDF, &cdf_rows)?;
    report::write_csv(&out.join(SCHEDULE_FILE), &report::SCHEDULE, &schedule_rows)?;
    let table = PqsTable {
        variant: format!("{:?}", cfg.variant).to_lowercase(),
        cells: cells.into_iter().map(|c| c.summary).collect(),
    };
    report::write_json(&out.join(PQS_TABLE_FILE), &table)?;
    report::write_metadata(out, "eval-pqs", cfg, t.elapsed(), &table)?;
    Ok(table)
}

/// Operation counts over `N_C = 1..=24` at `N_sched = 24`, `N_R = 512`.
pub fn complexity(out: &Path) -> Result<Vec<[u64; 4]>> {
    ensure_dir(out)?;
    let rows: Vec<[u64; 4]> = (1..=24u64)
        .map(|n_c| {
            let r = selftest::complexity_row(n_c);
            [n_c, r[0], r[1], r[2]]
        })
        .collect();
    let csv: Vec<Vec<Field>> = rows.iter().map(|r| r.iter().map(|&x| x.into()).collect()).collect();
    report::write_csv(&out.join(COMPLEXITY_FILE), &report::COMPLEXITY, &csv)?;
    Ok(rows)
}

pub fn selftest(seed: u64) -> Vec<Check> {
    selftest::run_all(seed)
}
