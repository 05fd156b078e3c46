//! Property suites shared by the `selftest` command and the acceptance gate.

use std::time::Instant;

use dmhsa_core::autodiff::primitive_gradient_suite;
use dmhsa_core::beamforming::{evaluate_linear, evaluate_sinr, mmse_beamformer, per_antenna_normalize, BeamformerConfig};
use dmhsa_core::dmhsa::{
    complexity_estimate, count_parameters, count_parameters_closed_form, forward, loss_and_gradients,
    parameter_gradient_check, AttentionMasks, Batch, ComplexityMethod, DmhsaConfig, DmhsaParams, FeatureMatrix,
    PaddingMask,
};
use dmhsa_core::seed::rng_for;
use dmhsa_core::{CMatrix, Complex64};
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn check(name: &str, started: Instant, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn random_channel(rows: usize, cols: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Gauss-Jordan inverse with partial pivoting.
fn explicit_inverse(a: &CMatrix) -> Option<CMatrix> {
    let n = a.rows();
    let mut m = a.clone();
    let mut inv = CMatrix::identity(n);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[(i, col)].norm().total_cmp(&m[(j, col)].norm()))?;
        if m[(pivot, col)].norm() == 0.0 {
            return None;
        }
        for c in 0..n {
            let (x, y) = (m[(col, c)], m[(pivot, c)]);
            m[(col, c)] = y;
            m[(pivot, c)] = x;
            let (x, y) = (inv[(col, c)], inv[(pivot, c)]);
            inv[(col, c)] = y;
            inv[(pivot, c)] = x;
        }
        let d = m[(col, col)].inv();
        for c in 0..n {
            m[(col, c)] *= d;
            inv[(col, c)] *= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[(r, col)];
                if f != Complex64::new(0.0, 0.0) {
                    for c in 0..n {
                        let (mc, ic) = (m[(col, c)], inv[(col, c)]);
                        m[(r, c)] -= f * mc;
                        inv[(r, c)] -= f * ic;
                    }
                }
            }
        }
    }
    Some(inv)
}

/// MMSE solve against an explicit inverse, per-antenna row norms and the
/// single-user identity.
pub fn oracle_suite(seed: u64, matrices: usize) -> Vec<Check> {
    let started = Instant::now();
    let mut rng = rng_for(seed, "selftest-oracle", 0);
    let mut worst_rel = 0.0f64;
    let mut worst_norm = 0.0f64;
    let mut failures = 0;
    for _ in 0..matrices {
        let n_sched = rng.random_range(1..=24);
        let n_r = rng.random_range(n_sched..=64);
        let cfg = BeamformerConfig {
            n_elements: n_r,
            per_element_power_w: rng.random_range(0.01..1.0),
        };
        let h = random_channel(n_sched, n_r, &mut rng);
        let Ok(b) = mmse_beamformer(&h, &cfg) else {
            failures += 1;
            continue;
        };
        let mut g = h.gram();
        for i in 0..n_sched {
            g[(i, i)] += Complex64::new(cfg.regularization(), 0.0);
        }
        let Some(b_ref) = explicit_inverse(&g).and_then(|gi| h.conj_transpose().matmul(&gi).ok()) else {
            failures += 1;
            continue;
        };
        worst_rel = worst_rel.max(b.max_abs_diff(&b_ref) / b_ref.max_abs());
        let (bn, _) = per_antenna_normalize(&b, &cfg);
        let target = cfg.row_norm_target();
        for r in 0..bn.rows() {
            let n = bn.row(r).iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            worst_norm = worst_norm.max((n - target).abs());
        }
    }
    let solve = check(
        "mmse solve vs explicit inverse",
        started,
        failures == 0 && worst_rel <= 1e-9,
        format!("{matrices} matrices up to 24x64, max relative deviation {worst_rel:.3e}, failures {failures} (tol 1e-9)"),
    );
    let norms = check(
        "per-antenna row norms",
        started,
        failures == 0 && worst_norm <= 1e-10,
        format!("max |row norm - sqrt(P_av/N_R)| {worst_norm:.3e} (tol 1e-10)"),
    );

    let t = Instant::now();
    let mut exact = true;
    for _ in 0..200 {
        let n_r = rng.random_range(1..=64);
        let cfg = BeamformerConfig {
            n_elements: n_r,
            per_element_power_w: 0.065,
        };
        let h = random_channel(1, n_r, &mut rng);
        let b = mmse_beamformer(&h, &cfg).map(|b| per_antenna_normalize(&b, &cfg).0);
        let ok = b.ok().and_then(|b| Some((evaluate_linear(&h, &b).ok()?, evaluate_sinr(&h, &b).ok()?)));
        exact &= ok.is_some_and(|((_, inr), rep)| inr[0] == 0.0 && rep.sinr_db[0] == rep.snr_db[0]);
    }
    let single = check("single-user SINR equals SNR", t, exact, "200 random single-user channels, bitwise".into());
    vec![solve, norms, single]
}

fn random_features(cfg: &DmhsaConfig, n_valid: usize, rng: &mut impl Rng) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = (0..n_valid)
        .map(|_| (0..cfg.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    FeatureMatrix::from_rows(cfg.n_beams, cfg.feature_dim, &rows).expect("valid rows")
}

fn jittered(cfg: &DmhsaConfig, rng: &mut impl Rng) -> DmhsaParams {
    let mut p = DmhsaParams::init(cfg, rng).expect("valid config");
    for t in p.tensors_mut() {
        for x in t.data_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
    }
    p
}

/// Finite-difference checks of every primitive and of the full model graph.
pub fn gradient_suite(seed: u64) -> Vec<Check> {
    let t = Instant::now();
    let mut rng = rng_for(seed, "selftest-gradients", 0);
    let prim = primitive_gradient_suite(100, &mut rng);
    let primitives = match prim {
        Ok(reports) => {
            let (name, worst) = reports
                .iter()
                .map(|(n, r)| (*n, r.max_rel_error))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap_or(("-", 0.0));
            check(
                "primitive gradients",
                t,
                worst <= 1e-4,
                format!("{} primitives x 100 probes, worst relative error {worst:.3e} ({name}) (tol 1e-4)", reports.len()),
            )
        }
        Err(e) => check("primitive gradients", t, false, e.to_string()),
    };

    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut probes = 0;
    let mut error = None;
    for cfg in [DmhsaConfig::geo(6), DmhsaConfig::csi(16, 6)] {
        let p = jittered(&cfg, &mut rng);
        for _ in 0..5 {
            let n_valid = rng.random_range(1..=cfg.n_beams);
            let f = random_features(&cfg, n_valid, &mut rng);
            let labels: Vec<f64> = (0..n_valid).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut batch = Batch::new(cfg.n_beams, cfg.feature_dim);
            if let Err(e) = batch.push(&f, &labels) {
                error = Some(e.to_string());
                continue;
            }
            match parameter_gradient_check(&p, &cfg, &batch, 20, &mut rng) {
                Ok(r) => {
                    worst = worst.max(r.max_rel_error);
                    probes += r.probes;
                }
                Err(e) => error = Some(e.to_string()),
            }
        }
    }
    let composite = check(
        "composite model gradient",
        t,
        error.is_none() && worst <= 1e-3,
        match error {
            Some(e) => e,
            None => format!("both variants, 20 parameters x 5 inputs each ({probes} probes), worst relative error {worst:.3e} (tol 1e-3)"),
        },
    );
    vec![primitives, composite]
}

pub const COMPLEXITY_EXPECTED: [u64; 3] = [294_912, 98_304, 4_608];

pub fn complexity_row(n_c: u64) -> [u64; 3] {
    [ComplexityMethod::Mmse, ComplexityMethod::CsiDmhsa, ComplexityMethod::GeoDmhsa]
        .map(|m| complexity_estimate(m, 24, 512, n_c))
}

pub fn complexity_check() -> Check {
    let t = Instant::now();
    let row = complexity_row(8);
    let below = (1..=24).all(|n| {
        let r = complexity_row(n);
        r[2] < r[0]
    });
    check(
        "complexity at N_sched=24, N_R=512, N_C=8",
        t,
        row == COMPLEXITY_EXPECTED && below,
        format!("MMSE {} / CSI {} / GEO {}; GEO below MMSE for N_C <= 24: {below}", row[0], row[1], row[2]),
    )
}

pub fn parameter_count_check() -> Check {
    let t = Instant::now();
    let geo_cfg = DmhsaConfig::geo(24);
    let csi_cfg = DmhsaConfig::csi(512, 24);
    let mut rng = rng_for(0, "selftest-params", 0);
    let geo = DmhsaParams::init(&geo_cfg, &mut rng).map(|p| count_parameters(&p));
    let csi = DmhsaParams::init(&csi_cfg, &mut rng).map(|p| count_parameters(&p));
    let (Ok(geo), Ok(csi)) = (geo, csi) else {
        return check("parameter counts", t, false, "model initialization failed".into());
    };
    let consistent = geo == count_parameters_closed_form(&geo_cfg) && csi == count_parameters_closed_form(&csi_cfg);
    check(
        "parameter counts",
        t,
        consistent && (530..=1000).contains(&geo) && (4400..=5400).contains(&csi),
        format!(
            "GEO {geo} (band 530..1000, reference 762), CSI N_R=512 {csi} (band 4400..5400, reference 4.8k); \
             the surplus over the references is the position embedding and the readout biases"
        ),
    )
}

/// Padding invariance of outputs and loss, and the self-interference mask.
pub fn masking_suite(seed: u64) -> Vec<Check> {
    let t = Instant::now();
    let mut rng = rng_for(seed, "selftest-masking", 0);
    let mut identical = true;
    let mut trials = 0;
    for cfg in [DmhsaConfig::geo(8), DmhsaConfig::csi(16, 8)] {
        let p = jittered(&cfg, &mut rng);
        for n_valid in 1..cfg.n_beams {
            let f = random_features(&cfg, n_valid, &mut rng);
            let labels: Vec<f64> = (0..n_valid).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut batch = Batch::new(cfg.n_beams, cfg.feature_dim);
            batch.push(&f, &labels).expect("consistent sample");
            let (Ok(base), Ok((base_loss, _))) = (forward(&f, &p, &cfg), loss_and_gradients(&p, &cfg, &batch)) else {
                identical = false;
                continue;
            };
            for _ in 0..5 {
                trials += 1;
                let mut b = batch.clone();
                let w = cfg.feature_dim;
                for x in &mut b.features[n_valid * w..] {
                    *x = rng.random_range(-100.0..100.0);
                }
                for l in &mut b.labels[n_valid..] {
                    *l = rng.random_range(-1e6..1e6);
                }
                let out = forward(&b.sample(0), &p, &cfg);
                let loss = loss_and_gradients(&p, &cfg, &b);
                identical &= match (out, loss) {
                    (Ok(o), Ok((l, _))) => {
                        o.out[..n_valid] == base.out[..n_valid]
                            && o.snr[..n_valid] == base.snr[..n_valid]
                            && o.inr[..n_valid] == base.inr[..n_valid]
                            && l.to_bits() == base_loss.to_bits()
                    }
                    _ => false,
                };
            }
        }
    }
    let padding = check(
        "padded-slot perturbation",
        t,
        identical,
        format!("{trials} perturbations of padded features and labels; valid outputs and loss bit-identical: {identical}"),
    );

    let t = Instant::now();
    let mut diag_zero = true;
    for n_b in 1..=24 {
        for n_valid in 1..=n_b {
            let Ok(mask) = PaddingMask::new(n_b, n_valid) else {
                diag_zero = false;
                continue;
            };
            let m = AttentionMasks::new(mask);
            diag_zero &= (0..n_b).all(|i| !m.inr[i * n_b + i]);
            diag_zero &= (0..n_b).all(|i| (0..n_b).all(|j| m.inr[i * n_b + j] <= m.snr[i * n_b + j]));
        }
    }
    let diagonal = check("interference mask diagonal", t, diag_zero, "every N_B <= 24 and fill level".into());
    vec![padding, diagonal]
}

pub fn run_all(seed: u64) -> Vec<Check> {
    let mut all = oracle_suite(seed, 1000);
    all.extend(gradient_suite(seed));
    all.push(complexity_check());
    all.push(parameter_count_check());
    all.extend(masking_suite(seed));
    all
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_inverse_inverts() {
        let mut rng = rng_for(2, "inv", 0);
        let h = random_channel(5, 9, &mut rng);
        let mut g = h.gram();
        for i in 0..5 {
            g[(i, i)] += Complex64::new(1.0, 0.0);
        }
        let gi = explicit_inverse(&g).unwrap();
        assert!(g.matmul(&gi).unwrap().max_abs_diff(&CMatrix::identity(5)) < 1e-12);
    }

    #[test]
    fn quick_suites_pass() {
        for c in oracle_suite(1, 50).into_iter().chain(masking_suite(1)).chain([complexity_check(), parameter_count_check()]) {
            assert!(c.passed, "{c:?}");
        }
    }
}
