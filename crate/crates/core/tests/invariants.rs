use dmhsa_core::beamforming::{beamforming_matrix, evaluate_linear, evaluate_sinr, BeamformerConfig};
use dmhsa_core::channel::{build_channel_matrix, ArrayConfig, LinkBudget};
use dmhsa_core::geometry::{LineOfSight, UvCoordinate};
use dmhsa_core::seed::rng_for;
use dmhsa_core::{CMatrix, Complex64};
use proptest::prelude::*;
use rand::Rng;

fn gaussian_channel(seed: u64, rows: usize, cols: usize) -> CMatrix {
    let mut rng = rng_for(seed, "invariants", 0);
    CMatrix::from_fn(rows, cols, |_, _| {
        let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        Complex64::new(a, b)
    })
}

fn los(range_m: f64, u: f64, v: f64) -> LineOfSight {
    LineOfSight {
        slant_range_m: range_m,
        elevation_deg: 60.0,
        off_nadir_rad: (u * u + v * v).sqrt().asin(),
        uv: UvCoordinate { u, v },
    }
}

fn group() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 1usize..=8).prop_flat_map(|(seed, n)| (Just(seed), Just(n), n..=32))
}

proptest! {
    #[test]
    fn per_antenna_power_is_exact((seed, n_sched, n_r) in group(), p_el in 0.01f64..1.0) {
        let cfg = BeamformerConfig { n_elements: n_r, per_element_power_w: p_el };
        let h = gaussian_channel(seed, n_sched, n_r);
        let b = beamforming_matrix(&h, &cfg).unwrap();
        prop_assert_eq!(b.zero_rows, 0);
        let target = cfg.total_power_w() / n_r as f64;
        for r in 0..n_r {
            let power: f64 = b.normalized.row(r).iter().map(|x| x.norm_sqr()).sum();
            prop_assert!(((power - target) / target).abs() < 1e-10);
        }
    }

    #[test]
    fn dropping_a_beam_never_lowers_other_sinr((seed, n_sched, n_r) in group(), pick in any::<prop::sample::Index>()) {
        prop_assume!(n_sched > 1);
        let cfg = BeamformerConfig { n_elements: n_r, per_element_power_w: 0.065 };
        let h = gaussian_channel(seed, n_sched, n_r);
        let b = beamforming_matrix(&h, &cfg).unwrap().normalized;
        let removed = pick.index(n_sched);
        let mut thinned = b.clone();
        for r in 0..n_r {
            thinned[(r, removed)] = Complex64::new(0.0, 0.0);
        }
        let (s0, i0) = evaluate_linear(&h, &b).unwrap();
        let (s1, i1) = evaluate_linear(&h, &thinned).unwrap();
        for k in (0..n_sched).filter(|&k| k != removed) {
            prop_assert_eq!(s0[k], s1[k]);
            prop_assert!(i1[k] <= i0[k] * (1.0 + 1e-12));
            prop_assert!(s1[k] / (1.0 + i1[k]) >= s0[k] / (1.0 + i0[k]) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn single_user_sinr_is_snr(seed in any::<u64>(), n_r in 1usize..=64) {
        let cfg = BeamformerConfig { n_elements: n_r, per_element_power_w: 0.065 };
        let h = gaussian_channel(seed, 1, n_r);
        let b = beamforming_matrix(&h, &cfg).unwrap().normalized;
        let rep = evaluate_sinr(&h, &b).unwrap();
        prop_assert_eq!(rep.sinr_db[0], rep.snr_db[0]);
    }

    #[test]
    fn channel_magnitude_and_loss_scaling(
        range_km in 1000f64..2500.0,
        u in -0.6f64..0.6,
        v in -0.6f64..0.6,
        loss_db in 0f64..20.0,
    ) {
        let lb = LinkBudget::default();
        let cfg = ArrayConfig::half_wavelength(6, 6, lb.carrier_frequency_hz, 2.0);
        let user = [los(range_km * 1e3, u, v)];
        let clear = build_channel_matrix(&user, &[], &lb, &cfg, true).unwrap();
        let lossy = build_channel_matrix(&user, &[loss_db], &lb, &cfg, false).unwrap();
        let m0 = clear[(0, 0)].norm();
        let scale = 1.0 / 10f64.powf(loss_db / 10.0).sqrt();
        for n in 0..cfg.n_elements {
            prop_assert!(((clear[(0, n)].norm() - m0) / m0).abs() < 1e-9);
            prop_assert!((lossy[(0, n)].norm() / clear[(0, n)].norm() - scale).abs() < 1e-12);
        }
    }
}
