use dmhsa_core::beamforming::ReportMode;
use dmhsa_lab::config::{ExperimentConfig, Overrides, Profile};
use dmhsa_lab::eval::{pqs_schedule_period, PeriodResult, TrafficCell};

const PERIODS: u64 = 60;

fn desk(variant: ReportMode) -> ExperimentConfig {
    ExperimentConfig::profile(
        Profile::Desk,
        &Overrides {
            variant: Some(variant),
            ..Default::default()
        },
    )
    .unwrap()
}

fn run(cfg: &ExperimentConfig, cell: TrafficCell) -> Vec<PeriodResult> {
    (0..PERIODS)
        .map(|p| pqs_schedule_period(cfg, cell, "pqs-properties", p, PERIODS).unwrap().0)
        .collect()
}

fn mean_group_size(periods: &[PeriodResult]) -> f64 {
    let groups: Vec<usize> = periods.iter().flat_map(|p| p.groups.iter().map(|g| g.users.len())).collect();
    groups.iter().sum::<usize>() as f64 / groups.len() as f64
}

#[test]
fn low_minimum_rate_schedules_fewer_users() {
    for variant in [ReportMode::Geo, ReportMode::Csi] {
        let cfg = desk(variant);
        for c_max in [100.0, 500.0] {
            let low = run(&cfg, TrafficCell { c_min_mbps: 5.0, c_max_mbps: c_max });
            let high = run(&cfg, TrafficCell { c_min_mbps: 20.0, c_max_mbps: c_max });
            let (a, b) = (mean_group_size(&low), mean_group_size(&high));
            // With C_max = 500 every slot can be full under both minima.
            if c_max == 100.0 {
                assert!(a < b, "{variant:?} C_max {c_max}: {a} vs {b}");
            } else {
                assert!(a <= b, "{variant:?} C_max {c_max}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn groups_pass_audit_and_nobody_is_over_served() {
    for variant in [ReportMode::Geo, ReportMode::Csi] {
        let cfg = desk(variant);
        for cell in TrafficCell::grid(&cfg) {
            for p in run(&cfg, cell) {
                assert_eq!(p.audit_violation, None);
                assert!(!p.over_served);
                assert!(p.groups.iter().all(|g| !g.users.is_empty() && g.users.len() <= cfg.model.n_beams));
                assert!(p.groups.iter().all(|g| g.users.iter().all(|&u| u < p.visible_users)));
                assert!(p.groups.windows(2).all(|w| w[1].slot_index == w[0].slot_index + 1));
            }
        }
    }
}
