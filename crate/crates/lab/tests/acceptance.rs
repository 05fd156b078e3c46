//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use dmhsa_lab::selftest::{self, Check};
use serde_json::Value;

const SEED: u64 = 1;
const ORACLE_MATRICES: usize = 1000;
const RATIO_LIMIT: f64 = 0.7;
const MIN_TEST_ESTIMATES: u64 = 100_000;
const BIAS_TOLERANCE_DB: f64 = 0.05;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const GRADIENT_BUDGET: Duration = Duration::from_secs(120);
const COMPLEXITY_BUDGET: Duration = Duration::from_secs(1);
const PARAMETER_BUDGET: Duration = Duration::from_secs(1);
const TRAIN_BUDGET: Duration = Duration::from_secs(30 * 60);
const PQS_BUDGET: Duration = Duration::from_secs(20 * 60);
const MASKING_BUDGET: Duration = Duration::from_secs(60);

struct Outcome {
    passed: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            passed: true,
            lines: Vec::new(),
        }
    }

    fn require(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.lines.push(format!("     {line}"));
    }

    fn checks(&mut self, checks: &[Check]) {
        for c in checks {
            self.require(c.passed, format!("{}: {} ({:.2} s)", c.name, c.detail, c.seconds));
        }
    }

    fn within(&mut self, started: Instant, budget: Duration) {
        let took = started.elapsed();
        self.require(took < budget, format!("runtime {:.2} s (limit {} s)", took.as_secs_f64(), budget.as_secs_f64()));
    }
}

fn dmhsa(args: &[&str]) -> Result<(String, Duration), String> {
    let t = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_dmhsa"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| format!("spawn failed: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "`dmhsa {}` exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok((String::from_utf8_lossy(&out.stdout).into_owned(), t.elapsed()))
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or(f64::NAN)
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let t = Instant::now();
    o.checks(&selftest::oracle_suite(SEED, ORACLE_MATRICES));
    o.within(t, ORACLE_BUDGET);
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let t = Instant::now();
    o.checks(&selftest::gradient_suite(SEED));
    o.within(t, GRADIENT_BUDGET);
    o
}

fn criterion_3(dir: &Path) -> Outcome {
    let mut o = Outcome::new();
    let out = dir.to_str().expect("utf-8 temp path");
    match dmhsa(&["--out", out, "complexity"]) {
        Ok((stdout, took)) => {
            let expected = "8,294912,98304,4608";
            o.require(
                stdout.lines().any(|l| l.trim() == expected),
                format!("stdout contains the N_C=8 row {expected}"),
            );
            let csv = std::fs::read_to_string(dir.join("complexity.csv")).unwrap_or_default();
            let rows: Vec<Vec<u64>> = csv
                .lines()
                .skip(1)
                .map(|l| l.split(',').filter_map(|x| x.parse().ok()).collect())
                .collect();
            o.require(
                rows.iter().any(|r| r == &[8, 294_912, 98_304, 4_608]),
                "complexity.csv holds the same row".into(),
            );
            o.require(
                rows.len() == 24 && rows.iter().all(|r| r.len() == 4 && r[3] < r[1] && r[1] == 294_912),
                format!("{} rows, MMSE constant and GEO below MMSE for N_C <= 24", rows.len()),
            );
            o.require(took < COMPLEXITY_BUDGET, format!("runtime {:.3} s (limit 1 s)", took.as_secs_f64()));
        }
        Err(e) => o.require(false, e),
    }
    o
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    let t = Instant::now();
    o.checks(&[selftest::parameter_count_check()]);
    o.within(t, PARAMETER_BUDGET);
    o
}

fn criterion_5(runs: &[(&str, &Path)]) -> Outcome {
    let mut o = Outcome::new();
    for (variant, dir) in runs {
        let out = dir.to_str().expect("utf-8 temp path");
        let trained = dmhsa(&["--profile", "desk", "--variant", variant, "--workers", "1", "--out", out, "train"]);
        let took = match trained {
            Ok((_, took)) => took,
            Err(e) => {
                o.require(false, e);
                continue;
            }
        };
        o.require(
            took < TRAIN_BUDGET,
            format!("{variant}: training took {:.1} s (limit {} s)", took.as_secs_f64(), TRAIN_BUDGET.as_secs()),
        );
        if let Ok(run) = read_json(&dir.join("train_run.json")) {
            let s = &run["summary"];
            let (first, last) = (num(s, "first_epoch_loss"), num(s, "last_cycle_mean"));
            o.require(
                last < 0.5 * first,
                format!("{variant}: final cycle-mean loss {last:.4} < half the first-epoch loss {first:.4}"),
            );
        }
        let model = dir.join("model.dmhs");
        let eval = dmhsa(&[
            "--profile",
            "desk",
            "--variant",
            variant,
            "--out",
            out,
            "eval-random",
            "--model",
            model.to_str().expect("utf-8 temp path"),
        ]);
        if let Err(e) = eval {
            o.require(false, e);
            continue;
        }
        match read_json(&dir.join("eval_random.json")) {
            Ok(s) => {
                let estimates = s["estimates"].as_u64().unwrap_or(0);
                let ratio = num(&s, "rmse_ratio");
                o.require(
                    estimates >= MIN_TEST_ESTIMATES,
                    format!("{variant}: {estimates} fresh test estimates (need {MIN_TEST_ESTIMATES})"),
                );
                o.require(
                    ratio <= RATIO_LIMIT,
                    format!(
                        "{variant}: RMSE {:.3} dB vs constant-mean {:.3} dB, ratio {ratio:.3} (limit {RATIO_LIMIT})",
                        num(&s, "rmse_db"),
                        num(&s, "constant_mean_rmse_db")
                    ),
                );
                o.note(format!(
                    "{variant}: Spearman(group size, RMSE) = {:.3} (reported, not gated)",
                    num(&s, "spearman_size_vs_rmse")
                ));
            }
            Err(e) => o.require(false, e),
        }
    }
    o
}

fn criterion_6(runs: &[(&str, &Path)]) -> Outcome {
    let mut o = Outcome::new();
    let t = Instant::now();
    for (variant, dir) in runs {
        let out = dir.to_str().expect("utf-8 temp path");
        let model = dir.join("model.dmhs");
        let ran = dmhsa(&[
            "--profile",
            "desk",
            "--variant",
            variant,
            "--out",
            out,
            "eval-pqs",
            "--model",
            model.to_str().expect("utf-8 temp path"),
        ]);
        if let Err(e) = ran {
            o.require(false, e);
            continue;
        }
        let table = match read_json(&dir.join("pqs_rmse.json")) {
            Ok(t) => t,
            Err(e) => {
                o.require(false, e);
                continue;
            }
        };
        let cells = table["cells"].as_array().cloned().unwrap_or_default();
        o.require(cells.len() == 4, format!("{variant}: {} traffic cells (need 4)", cells.len()));
        for c in &cells {
            let (lo, hi) = (num(c, "c_min_mbps"), num(c, "c_max_mbps"));
            let held_out = num(c, "test_mean_error_db");
            o.require(
                held_out.abs() <= BIAS_TOLERANCE_DB,
                format!(
                    "{variant} C_min {lo} C_max {hi}: bias {:+.3} dB; held-out mean signed error {held_out:+.4} dB \
                     (SE {:.4}, {} estimates), calibration sample {:+.1e} dB",
                    num(c, "bias_db"),
                    num(c, "test_mean_error_se_db"),
                    c["test_estimates"],
                    num(c, "calibration_mean_error_db"),
                ),
            );
            let audits = c["audit_violations"].as_u64().unwrap_or(u64::MAX);
            let over = c["over_served_periods"].as_u64().unwrap_or(u64::MAX);
            o.require(
                audits == 0 && over == 0,
                format!("{variant} C_min {lo} C_max {hi}: {audits} audit violations, {over} over-served periods"),
            );
            o.note(format!(
                "{variant} C_min {lo} C_max {hi}: RMSE {:.4} dB, median |error| {:.3} dB, mean group {:.2}",
                num(c, "rmse_db"),
                num(c, "median_abs_error_db"),
                num(c, "mean_group_size"),
            ));
        }
        let mut c_maxes: Vec<f64> = cells.iter().map(|c| num(c, "c_max_mbps")).collect();
        c_maxes.sort_by(f64::total_cmp);
        c_maxes.dedup();
        for c_max in c_maxes {
            let mut row: Vec<&Value> = cells.iter().filter(|c| num(c, "c_max_mbps") == c_max).collect();
            row.sort_by(|a, b| num(a, "c_min_mbps").total_cmp(&num(b, "c_min_mbps")));
            if let [low, high] = row[..] {
                let (rl, rh) = (num(low, "rmse_db"), num(high, "rmse_db"));
                o.require(
                    rh <= rl,
                    format!(
                        "{variant} C_max {c_max}: RMSE {rh:.4} dB at C_min {} <= {rl:.4} dB at C_min {}",
                        num(high, "c_min_mbps"),
                        num(low, "c_min_mbps")
                    ),
                );
            } else {
                o.require(false, format!("{variant} C_max {c_max}: expected two C_min levels"));
            }
        }
    }
    o.within(t, PQS_BUDGET);
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    let t = Instant::now();
    o.checks(&selftest::masking_suite(SEED));
    o.within(t, MASKING_BUDGET);
    o
}

fn criterion_8(first: &Path, second: &Path) -> Outcome {
    let mut o = Outcome::new();
    let out = second.to_str().expect("utf-8 temp path");
    if let Err(e) = dmhsa(&["--profile", "desk", "--workers", "1", "--out", out, "train"]) {
        o.require(false, e);
        return o;
    }
    for file in ["model.dmhs", "training_curve.csv", "calibration.json"] {
        let (a, b) = (std::fs::read(first.join(file)), std::fs::read(second.join(file)));
        match (a, b) {
            (Ok(a), Ok(b)) => o.require(a == b, format!("{file}: {} bytes, identical: {}", a.len(), a == b)),
            _ => o.require(false, format!("{file}: missing")),
        }
    }
    o
}

fn report(n: u32, title: &str, o: &Outcome) {
    println!("criterion {n}: {} {title}", if o.passed { "PASS" } else { "FAIL" });
    for l in &o.lines {
        println!("    {l}");
    }
}

fn main() -> ExitCode {
    let root = tempfile::tempdir().expect("temp dir");
    let dirs = ["complexity", "geo", "csi", "geo-rerun"].map(|d| {
        let p = root.path().join(d);
        std::fs::create_dir_all(&p).expect("temp subdir");
        p
    });
    let [complexity, geo, csi, geo_rerun] = &dirs;
    let runs = [("geo", geo.as_path()), ("csi", csi.as_path())];

    let mut all = true;
    let mut run = |n: u32, title: &str, o: Outcome| {
        report(n, title, &o);
        all &= o.passed;
    };
    run(1, "oracle correctness", criterion_1());
    run(2, "gradient integrity", criterion_2());
    run(3, "complexity reproduction", criterion_3(complexity));
    run(4, "parameter-count band", criterion_4());
    run(5, "desk-scale training efficacy", criterion_5(&runs));
    run(6, "PQS protocol behavior", criterion_6(&runs));
    run(7, "masking invariants", criterion_7());
    run(8, "single-worker determinism", criterion_8(geo, geo_rerun));

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
