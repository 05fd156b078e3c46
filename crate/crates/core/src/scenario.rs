//! Turns a scenario description into scheduled groups, oracle labels and
//! model inputs.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::beamforming::{group_channels, sinr_from_channels, BeamformerConfig, BeamformingError, GroupChannels, ReportMode, SinrReport};
use crate::channel::{ArrayConfig, LinkBudget};
use crate::dmhsa::{extract_features_csi, extract_features_geo, DmhsaConfig, DmhsaError, FeatureMatrix, LabelStandardizer};
use crate::geometry::{drop_users, observe, GeometryError, GroundPosition, LineOfSight, OrbitConfig, PassInstant, SatellitePass, UserMixture, UserPopulation};
use crate::scheduling::{random_schedule, ScheduleError};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Beamforming(#[from] BeamformingError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Model(#[from] DmhsaError),
    #[error("fewer than {needed} users visible after {attempts} pass instants")]
    TooFewVisible { needed: usize, attempts: usize },
    #[error("invalid scenario: {0}")]
    InvalidConfig(&'static str),
}

/// Log-normal shadowing added to the channel loss, clamped at 0 dB.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct Shadowing {
    pub mean_db: f64,
    pub sigma_db: f64,
}

impl Shadowing {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma_db == 0.0 {
            return self.mean_db.max(0.0);
        }
        let z: f64 = rng.sample(StandardNormal);
        (self.mean_db + self.sigma_db * z).max(0.0)
    }
}

/// Everything needed to simulate scheduling instants over one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub orbit: OrbitConfig,
    pub link: LinkBudget,
    pub array: ArrayConfig,
    pub beamformer: BeamformerConfig,
    /// User distribution; the pass flies over its anchor.
    pub mixture: UserMixture,
    pub pass_heading_deg: f64,
    /// Users dropped per scheduling instant.
    pub population: usize,
    pub min_group: usize,
    pub n_beams: usize,
    pub shadowing: Shadowing,
}

const MAX_INSTANT_ATTEMPTS: usize = 64;

/// One scheduling instant: the visible population and the chosen group.
#[derive(Debug, Clone)]
pub struct Instant {
    pub pass_instant: PassInstant,
    pub positions: Vec<GroundPosition>,
    pub density_weight: Vec<f64>,
    pub los: Vec<LineOfSight>,
    pub extra_loss_db: Vec<f64>,
}

/// One labelled group.
#[derive(Debug, Clone)]
pub struct GroupSample {
    pub los: Vec<LineOfSight>,
    pub channels: GroupChannels,
    pub sinr: SinrReport,
}

impl GroupSample {
    /// Mean `|Ĥ_{k,n}|²` of each user's reported channel.
    pub fn channel_power(&self) -> Vec<f64> {
        let h = &self.channels.estimate;
        (0..h.rows())
            .map(|k| h.row(k).iter().map(|c| c.norm_sqr()).sum::<f64>() / h.cols() as f64)
            .collect()
    }

    pub fn features(&self, cfg: &DmhsaConfig, standardizer: &LabelStandardizer) -> Result<FeatureMatrix, DmhsaError> {
        match cfg.variant {
            ReportMode::Csi => extract_features_csi(&self.channels.estimate, cfg.n_beams, standardizer),
            ReportMode::Geo => {
                let uv: Vec<_> = self.los.iter().map(|l| l.uv).collect();
                extract_features_geo(&uv, cfg.n_beams)
            }
        }
    }
}

impl Scenario {
    pub fn pass(&self) -> SatellitePass {
        SatellitePass {
            center: self.mixture.anchor,
            heading_deg: self.pass_heading_deg,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.orbit.validate()?;
        self.link.validate().map_err(BeamformingError::from)?;
        self.array.validate().map_err(BeamformingError::from)?;
        self.beamformer.validate()?;
        if self.beamformer.n_elements != self.array.n_elements {
            return Err(ScenarioError::InvalidConfig("beamformer and array element counts differ"));
        }
        if self.min_group == 0 || self.min_group > self.n_beams {
            return Err(ScenarioError::InvalidConfig("need 1 <= min_group <= n_beams"));
        }
        if self.population < self.min_group {
            return Err(ScenarioError::InvalidConfig("population smaller than min_group"));
        }
        if !(self.shadowing.sigma_db >= 0.0 && self.shadowing.mean_db.is_finite()) {
            return Err(ScenarioError::InvalidConfig("shadowing parameters"));
        }
        Ok(())
    }

    /// Drops a population, picks a pass instant at which at least `needed`
    /// users are visible and keeps only the visible ones.
    pub fn instant<R: Rng + ?Sized>(&self, rng: &mut R, needed: usize) -> Result<Instant, ScenarioError> {
        self.instant_in(rng, needed, 0.0, 1.0)
    }

    /// As [`Scenario::instant`], with the pass instant drawn uniformly from the
    /// fraction `[lo, hi)` of the visibility interval.
    pub fn instant_in<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        needed: usize,
        lo: f64,
        hi: f64,
    ) -> Result<Instant, ScenarioError> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(ScenarioError::InvalidConfig("pass window must satisfy 0 <= lo < hi <= 1"));
        }
        let UserPopulation {
            positions,
            density_weight,
        } = drop_users(rng.next_u64(), self.population, &self.mixture, &self.orbit)?;
        let pass = self.pass();
        for _ in 0..MAX_INSTANT_ATTEMPTS {
            let f: f64 = rng.random();
            let pass_instant = pass.instant_at_fraction(&self.orbit, lo + (hi - lo) * f);
            let mut inst = Instant {
                pass_instant,
                positions: Vec::new(),
                density_weight: Vec::new(),
                los: Vec::new(),
                extra_loss_db: Vec::new(),
            };
            for (p, w) in positions.iter().zip(&density_weight) {
                if let Ok(los) = observe(&pass_instant, &self.orbit, p) {
                    if los.elevation_deg >= self.orbit.min_elevation_deg {
                        inst.positions.push(*p);
                        inst.density_weight.push(*w);
                        inst.los.push(los);
                    }
                }
            }
            if inst.los.len() >= needed {
                inst.extra_loss_db = (0..inst.los.len()).map(|_| self.shadowing.draw(rng)).collect();
                return Ok(inst);
            }
        }
        Err(ScenarioError::TooFewVisible {
            needed,
            attempts: MAX_INSTANT_ATTEMPTS,
        })
    }

    /// Oracle labels for `members` of an instant.
    pub fn label_group(&self, inst: &Instant, members: &[usize], mode: ReportMode) -> Result<GroupSample, ScenarioError> {
        let los: Vec<LineOfSight> = members.iter().map(|&k| inst.los[k]).collect();
        let loss: Vec<f64> = members.iter().map(|&k| inst.extra_loss_db[k]).collect();
        let channels = group_channels(&los, &loss, &self.link, &self.array, mode)?;
        let sinr = sinr_from_channels(&channels, &self.beamformer)?;
        Ok(GroupSample { los, channels, sinr })
    }

    /// Random-scheduler sample number `index` of the stream `(seed, tag)`.
    pub fn random_sample(&self, seed: u64, tag: &str, index: u64, mode: ReportMode) -> Result<GroupSample, ScenarioError> {
        let mut rng = rng_for(seed, tag, index);
        let inst = self.instant(&mut rng, self.min_group)?;
        let members = random_schedule(&mut rng, inst.los.len(), self.min_group, self.n_beams)?;
        self.label_group(&inst, &members, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamforming::sinr_oracle;
    use crate::geometry::Cluster;
    use alloc::vec;

    fn scenario() -> Scenario {
        let array = ArrayConfig::half_wavelength(4, 4, 20e9, 2.0);
        Scenario {
            orbit: OrbitConfig::default(),
            link: LinkBudget::default(),
            beamformer: BeamformerConfig {
                n_elements: array.n_elements,
                ..BeamformerConfig::default()
            },
            array,
            mixture: UserMixture {
                anchor: GroundPosition::new(45.0, 9.0),
                clusters: vec![
                    Cluster {
                        east_km: 0.0,
                        north_km: 0.0,
                        sigma_km: 150.0,
                        weight: 2.0,
                    },
                    Cluster {
                        east_km: 300.0,
                        north_km: -200.0,
                        sigma_km: 80.0,
                        weight: 1.0,
                    },
                ],
            },
            pass_heading_deg: 15.0,
            population: 24,
            min_group: 2,
            n_beams: 6,
            shadowing: Shadowing::default(),
        }
    }

    #[test]
    fn random_sample_labels_replay() {
        let s = scenario();
        s.validate().unwrap();
        for i in 0..20 {
            let a = s.random_sample(7, "train", i, ReportMode::Geo).unwrap();
            let b = s.random_sample(7, "train", i, ReportMode::Geo).unwrap();
            assert_eq!(a.sinr, b.sinr);
            assert!((2..=6).contains(&a.los.len()));
            assert!(a.los.iter().all(|l| l.elevation_deg >= 30.0));
            let replay = sinr_oracle(&a.los, &[], &s.link, &s.array, &s.beamformer, ReportMode::Geo).unwrap();
            for (x, y) in replay.sinr_db.iter().zip(&a.sinr.sinr_db) {
                assert!((x - y).abs() < 1e-9);
            }
        }
        let c = s.random_sample(7, "train", 0, ReportMode::Geo).unwrap();
        let d = s.random_sample(7, "train", 1, ReportMode::Geo).unwrap();
        assert_ne!(c.sinr, d.sinr);
    }

    #[test]
    fn shadowing_only_affects_truth() {
        let mut s = scenario();
        s.shadowing = Shadowing {
            mean_db: 1.0,
            sigma_db: 2.0,
        };
        let csi = s.random_sample(3, "x", 0, ReportMode::Csi).unwrap();
        let geo = s.random_sample(3, "x", 0, ReportMode::Geo).unwrap();
        assert_eq!(csi.channels.truth, geo.channels.truth);
        assert_eq!(csi.channels.truth, csi.channels.estimate);
        assert_ne!(geo.channels.truth, geo.channels.estimate);
    }

    #[test]
    fn features_match_variant() {
        let s = scenario();
        let g = s.random_sample(5, "f", 0, ReportMode::Csi).unwrap();
        let std = LabelStandardizer::identity();
        let f = g.features(&DmhsaConfig::csi(16, 6), &std).unwrap();
        assert_eq!(f.feature_dim(), 18);
        assert_eq!(f.mask().n_valid(), g.los.len());
        assert_eq!(f.row(0)[16], g.channel_power()[0]);
        let f = g.features(&DmhsaConfig::geo(6), &std).unwrap();
        assert_eq!(f.row(0)[..2], [g.los[0].uv.u, g.los[0].uv.v]);
    }

    #[test]
    fn windowed_instant_stays_in_window() {
        let s = scenario();
        let duration = s.pass().duration_s(&s.orbit);
        let mut rng = rng_for(11, "window", 0);
        for k in 0..8 {
            let (lo, hi) = (k as f64 / 8.0, (k + 1) as f64 / 8.0);
            let inst = s.instant_in(&mut rng, 1, lo, hi).unwrap();
            let f = inst.pass_instant.time_s / duration;
            assert!(f >= lo - 1e-9 && f <= hi + 1e-9, "{f} outside [{lo}, {hi})");
        }
        assert!(s.instant_in(&mut rng, 1, 0.5, 0.5).is_err());
        let a = s.instant(&mut rng_for(2, "w", 0), 1).unwrap();
        let b = s.instant_in(&mut rng_for(2, "w", 0), 1, 0.0, 1.0).unwrap();
        assert_eq!(a.pass_instant, b.pass_instant);
    }
}
