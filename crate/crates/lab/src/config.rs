//! Experiment configuration: built-in profiles overlaid with a user file.

use std::path::Path;

use dmhsa_core::autodiff::LrSchedule;
use dmhsa_core::beamforming::{BeamformerConfig, ReportMode};
use dmhsa_core::channel::{ArrayConfig, LinkBudget};
use dmhsa_core::dmhsa::DmhsaConfig;
use dmhsa_core::geometry::{Cluster, GroundPosition, OrbitConfig, UserMixture};
use dmhsa_core::math;
use dmhsa_core::scenario::{Scenario, Shadowing};
use dmhsa_core::scheduling::PqsConfig;
use serde::{Deserialize, Serialize};

const PAPER: &str = include_str!("../profiles/paper.toml");
const DESK: &str = include_str!("../profiles/desk.toml");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

impl Profile {
    fn base(self) -> &'static str {
        match self {
            Profile::Paper => PAPER,
            Profile::Desk => DESK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub carrier_frequency_hz: f64,
    pub user_bandwidth_hz: f64,
    pub noise_temperature_k: f64,
    pub rx_gain_dbi: f64,
    pub stochastic_loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub spacing_wavelengths: f64,
    pub pattern_exponent: f64,
    pub per_element_power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsersSection {
    pub anchor_latitude_deg: f64,
    pub anchor_longitude_deg: f64,
    pub pass_heading_deg: f64,
    pub population: usize,
    pub clusters: Vec<Cluster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n_beams: usize,
    pub n_channels: usize,
    pub n_heads: usize,
    pub leaky_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub max_epochs: u32,
    pub min_group: usize,
    pub l2: f64,
    pub warmup_epochs: u32,
    pub cycle_epochs: u32,
    pub lr_min: f64,
    pub lr_max: f64,
    pub patience_cycles: u32,
    pub calibration_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub test_estimates: usize,
    pub histogram_bins: usize,
    pub inference_chunk: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PqsSection {
    #[serde(flatten)]
    pub scheduler: PqsConfig,
    pub population: usize,
    pub periods: usize,
    pub calibration_periods: usize,
    pub c_min_mbps: Vec<f64>,
    pub c_max_mbps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub seed: u64,
    pub variant: ReportMode,
    pub orbit: OrbitConfig,
    pub link: LinkSection,
    pub array: ArraySection,
    pub users: UsersSection,
    pub shadowing: Shadowing,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub pqs: PqsSection,
}

/// Command-line values that take precedence over every file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub variant: Option<ReportMode>,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ExperimentConfig {
    /// The built-in profile with overrides applied.
    pub fn profile(profile: Profile, overrides: &Overrides) -> Result<Self, ConfigError> {
        Self::from_document(None, &Overrides {
            profile: Some(profile),
            ..overrides.clone()
        })
    }

    /// Reads `path` (if any) over its profile. The profile is taken from the
    /// overrides, then from the file's `profile` key, then defaults to desk.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.display().to_string(),
                source,
            })?),
            None => None,
        };
        Self::from_document(text.as_deref(), overrides)
    }

    pub fn from_document(text: Option<&str>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let user: toml::Table = match text {
            Some(t) => toml::from_str(t)?,
            None => toml::Table::new(),
        };
        let profile = match overrides.profile {
            Some(p) => p,
            None => match user.get("profile") {
                Some(v) => Profile::deserialize(v.clone())?,
                None => Profile::Desk,
            },
        };
        let mut doc: toml::Table = toml::from_str(profile.base())?;
        merge(&mut doc, user);
        doc.insert("profile".into(), toml::Value::try_from(profile).expect("enum"));
        if let Some(seed) = overrides.seed {
            let seed = i64::try_from(seed).map_err(|_| ConfigError::Invalid("seed must fit in 63 bits".into()))?;
            doc.insert("seed".into(), toml::Value::Integer(seed));
        }
        if let Some(v) = overrides.variant {
            doc.insert("variant".into(), toml::Value::try_from(v).expect("enum"));
        }
        let cfg = ExperimentConfig::deserialize(toml::Value::Table(doc))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn link_budget(&self) -> LinkBudget {
        LinkBudget {
            carrier_frequency_hz: self.link.carrier_frequency_hz,
            user_bandwidth_hz: self.link.user_bandwidth_hz,
            noise_temperature_k: self.link.noise_temperature_k,
            rx_gain: math::db_to_linear(self.link.rx_gain_dbi),
            stochastic_loss_db: self.link.stochastic_loss_db,
        }
    }

    pub fn array_config(&self) -> ArrayConfig {
        let a = &self.array;
        let mut cfg = ArrayConfig::half_wavelength(a.grid_rows, a.grid_cols, self.link.carrier_frequency_hz, a.pattern_exponent);
        cfg.element_spacing_m = a.spacing_wavelengths * self.link_budget().wavelength_m();
        cfg
    }

    pub fn n_elements(&self) -> usize {
        self.array.grid_rows * self.array.grid_cols
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            orbit: self.orbit,
            link: self.link_budget(),
            array: self.array_config(),
            beamformer: BeamformerConfig {
                n_elements: self.n_elements(),
                per_element_power_w: self.array.per_element_power_w,
            },
            mixture: UserMixture {
                anchor: GroundPosition::new(self.users.anchor_latitude_deg, self.users.anchor_longitude_deg),
                clusters: self.users.clusters.clone(),
            },
            pass_heading_deg: self.users.pass_heading_deg,
            population: self.users.population,
            min_group: self.train.min_group,
            n_beams: self.model.n_beams,
            shadowing: self.shadowing,
        }
    }

    /// Scenario used by the PQS protocol (larger population, groups of any size).
    pub fn pqs_scenario(&self) -> Scenario {
        Scenario {
            population: self.pqs.population,
            min_group: 1,
            ..self.scenario()
        }
    }

    pub fn model_config(&self) -> DmhsaConfig {
        let base = match self.variant {
            ReportMode::Csi => DmhsaConfig::csi(self.n_elements(), self.model.n_beams),
            ReportMode::Geo => DmhsaConfig::geo(self.model.n_beams),
        };
        DmhsaConfig {
            n_channels: self.model.n_channels,
            n_heads: self.model.n_heads,
            leaky_slope: self.model.leaky_slope,
            ..base
        }
    }

    pub fn lr_schedule(&self) -> LrSchedule {
        LrSchedule {
            warmup_epochs: self.train.warmup_epochs,
            cycle_epochs: self.train.cycle_epochs,
            lr_min: self.train.lr_min,
            lr_max: self.train.lr_max,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        self.scenario().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.pqs_scenario().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.model_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.pqs.scheduler.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let t = &self.train;
        if t.batch_size == 0 || t.max_epochs == 0 || t.calibration_samples < 2 {
            return bad("train.batch_size, train.max_epochs must be positive and calibration_samples >= 2");
        }
        if t.cycle_epochs == 0 || t.patience_cycles == 0 {
            return bad("train.cycle_epochs and train.patience_cycles must be positive");
        }
        if !(t.lr_min > 0.0 && t.lr_min <= t.lr_max && t.lr_max.is_finite()) || !(t.l2 >= 0.0) {
            return bad("need 0 < lr_min <= lr_max and l2 >= 0");
        }
        let e = &self.eval;
        if e.test_estimates == 0 || e.histogram_bins == 0 || e.inference_chunk == 0 {
            return bad("eval sizes must be positive");
        }
        let p = &self.pqs;
        if p.periods == 0 || p.calibration_periods == 0 || p.c_min_mbps.is_empty() || p.c_max_mbps.is_empty() {
            return bad("pqs periods and capacity grids must be non-empty");
        }
        for &lo in &p.c_min_mbps {
            for &hi in &p.c_max_mbps {
                if !(lo > 0.0 && lo <= hi) {
                    return bad("every pqs c_min must be positive and not exceed every c_max");
                }
            }
        }
        if !(self.array.spacing_wavelengths > 0.0) {
            return bad("array.spacing_wavelengths must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_load() {
        let desk = ExperimentConfig::profile(Profile::Desk, &Overrides::default()).unwrap();
        assert_eq!(desk.n_elements(), 64);
        assert_eq!(desk.model.n_beams, 8);
        assert_eq!(desk.train.batch_size, 256);
        let paper = ExperimentConfig::profile(Profile::Paper, &Overrides::default()).unwrap();
        assert_eq!(paper.n_elements(), 512);
        assert_eq!(paper.model_config().feature_dim, 3);
        let csi = Overrides {
            variant: Some(ReportMode::Csi),
            ..Overrides::default()
        };
        let paper_csi = ExperimentConfig::profile(Profile::Paper, &csi).unwrap();
        assert_eq!(paper_csi.model_config().feature_dim, 514);
        assert_eq!(paper.lr_schedule(), LrSchedule::default());
        assert_eq!(paper.pqs.scheduler, PqsConfig::default());
        assert!((paper.link_budget().rx_gain - LinkBudget::default().rx_gain).abs() < 1e-6);
    }

    #[test]
    fn dotted_keys_and_overrides() {
        let doc = "profile = \"paper\"\nmodel.n_channels = 16\ntrain.max_epochs = 7\n[orbit]\naltitude_km = 600.0\n";
        let o = Overrides {
            seed: Some(99),
            variant: Some(ReportMode::Csi),
            ..Overrides::default()
        };
        let c = ExperimentConfig::from_document(Some(doc), &o).unwrap();
        assert_eq!(c.profile, Profile::Paper);
        assert_eq!((c.model.n_channels, c.train.max_epochs, c.seed), (16, 7, 99));
        assert_eq!(c.orbit.altitude_km, 600.0);
        assert_eq!(c.orbit.min_elevation_deg, 30.0);
        assert_eq!(c.variant, ReportMode::Csi);
        let c = ExperimentConfig::from_document(Some(doc), &Overrides { profile: Some(Profile::Desk), ..o }).unwrap();
        assert_eq!(c.n_elements(), 64);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(
            ExperimentConfig::from_document(Some("train.epochs = 3"), &Overrides::default()),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_document(Some("model.n_heads = 3"), &Overrides::default()),
            Err(ConfigError::Invalid(_))
        ));
        assert!(ExperimentConfig::from_document(Some("pqs.c_min_mbps = [200.0]"), &Overrides::default()).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::profile(Profile::Desk, &Overrides::default()).unwrap();
        let back = ExperimentConfig::from_document(Some(&c.to_toml()), &Overrides::default()).unwrap();
        assert_eq!(back, c);
    }
}
