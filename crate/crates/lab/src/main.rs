use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dmhsa_core::beamforming::ReportMode;
use dmhsa_lab::commands;
use dmhsa_lab::config::{ExperimentConfig, Overrides, Profile};
use dmhsa_lab::error::LabError;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Variant {
    Csi,
    Geo,
}

#[derive(Debug, Parser)]
#[command(name = "dmhsa", version, about = "Simulate, train and evaluate DMHSA SINR estimators")]
struct Cli {
    /// TOML configuration; keys not given fall back to the selected profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    #[arg(long, global = true, value_enum)]
    variant: Option<Variant>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label and channel-power statistics used for standardization.
    GenCalibration,
    /// Train a model; writes model.dmhs and training_curve.csv.
    Train,
    /// Random-scheduler evaluation: error histograms and RMSE per group size.
    EvalRandom {
        /// Model file (default: <out>/model.dmhs).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Per-cell bias from held-out PQS periods.
    CalibrateBias {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// PQS evaluation over the traffic grid: error CDFs and RMSE table.
    EvalPqs {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Operation counts over an N_C sweep.
    Complexity,
    /// Oracle, gradient, masking and accounting property checks.
    Selftest,
    /// Print the resolved configuration.
    ShowConfig,
}

fn run(cli: Cli) -> Result<ExitCode, LabError> {
    let overrides = Overrides {
        profile: cli.profile,
        seed: cli.seed,
        variant: cli.variant.map(|v| match v {
            Variant::Csi => ReportMode::Csi,
            Variant::Geo => ReportMode::Geo,
        }),
    };
    let cfg = || ExperimentConfig::load(cli.config.as_deref(), &overrides);
    let out = cli.out.as_path();
    match &cli.command {
        Command::GenCalibration => {
            let s = commands::gen_calibration(&cfg()?, out)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Train => {
            let s = commands::train(&cfg()?, out)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::EvalRandom { model } => {
            let s = commands::eval_random_cmd(&cfg()?, model.as_deref(), out)?;
            println!(
                "estimates {}  rmse {:.3} dB  constant-mean rmse {:.3} dB  ratio {:.3}  spearman(size, rmse) {:.3}",
                s.estimates, s.rmse_db, s.constant_mean_rmse_db, s.rmse_ratio, s.spearman_size_vs_rmse
            );
        }
        Command::CalibrateBias { model } => {
            for b in commands::calibrate_bias(&cfg()?, model.as_deref(), out)? {
                println!("C_min {:>5} C_max {:>5}: bias {:+.4} dB over {} estimates", b.c_min_mbps, b.c_max_mbps, b.bias_db, b.estimates);
            }
        }
        Command::EvalPqs { model } => {
            let t = commands::eval_pqs_cmd(&cfg()?, model.as_deref(), out)?;
            for c in &t.cells {
                println!(
                    "C_min {:>5} C_max {:>5}: rmse {:.3} dB  median |e| {:.3} dB  mean error {:+.4} dB  mean group {:.2}",
                    c.c_min_mbps, c.c_max_mbps, c.rmse_db, c.median_abs_error_db, c.test_mean_error_db, c.mean_group_size
                );
            }
        }
        Command::Complexity => {
            println!("n_c,mmse,csi_dmhsa,geo_dmhsa");
            for r in commands::complexity(out)? {
                println!("{},{},{},{}", r[0], r[1], r[2], r[3]);
            }
        }
        Command::Selftest => {
            let checks = commands::selftest(cli.seed.unwrap_or(1));
            let mut ok = true;
            for c in &checks {
                ok &= c.passed;
                println!("{} {} ({:.2} s): {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.seconds, c.detail);
            }
            if !ok {
                return Ok(ExitCode::from(4));
            }
        }
        Command::ShowConfig => print!("{}", cfg()?.to_toml()),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
