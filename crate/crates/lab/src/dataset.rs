//! Simulated datasets: calibration statistics and per-epoch batches.

use dmhsa_core::dmhsa::{Batch, LabelStandardizer};
use dmhsa_core::scenario::GroupSample;
use dmhsa_core::seed::derive_seed;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::Result;

pub const TAG_CALIBRATION: &str = "calibration";
pub const TAG_TRAIN: &str = "train";
pub const TAG_EVAL: &str = "eval-random";

/// Random-scheduler samples `0..count` of stream `(tag, round)`, generated in
/// parallel but always returned in index order.
pub fn random_samples(cfg: &ExperimentConfig, tag: &str, round: u64, count: usize) -> Result<Vec<GroupSample>> {
    let scenario = cfg.scenario();
    let seed = derive_seed(cfg.seed, tag, round);
    let samples = (0..count as u64)
        .into_par_iter()
        .map(|i| scenario.random_sample(seed, tag, i, cfg.variant))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(samples)
}

/// Label and channel-power statistics from one calibration draw.
pub fn calibrate_standardizer(cfg: &ExperimentConfig) -> Result<LabelStandardizer> {
    let samples = random_samples(cfg, TAG_CALIBRATION, 0, cfg.train.calibration_samples)?;
    let sinr: Vec<f64> = samples.iter().flat_map(|s| s.sinr.sinr_db.iter().copied()).collect();
    let power: Vec<f64> = samples.iter().flat_map(|s| s.channel_power()).collect();
    Ok(LabelStandardizer::from_samples(&sinr, &power)?)
}

/// Model batch plus the raw dB labels of every valid slot, sample by sample.
#[derive(Debug, Clone)]
pub struct LabelledBatch {
    pub batch: Batch,
    pub labels_db: Vec<Vec<f64>>,
}

pub fn assemble(cfg: &ExperimentConfig, standardizer: &LabelStandardizer, samples: &[GroupSample]) -> Result<LabelledBatch> {
    let model = cfg.model_config();
    let mut batch = Batch::new(model.n_beams, model.feature_dim);
    let mut labels_db = Vec::with_capacity(samples.len());
    for s in samples {
        let f = s.features(&model, standardizer)?;
        let std_labels: Vec<f64> = s.sinr.sinr_db.iter().map(|x| standardizer.standardize(*x)).collect();
        batch.push(&f, &std_labels)?;
        labels_db.push(s.sinr.sinr_db.clone());
    }
    Ok(LabelledBatch { batch, labels_db })
}

/// Fresh training batch of epoch `epoch`; never shared with other epochs.
pub fn generate_batch(cfg: &ExperimentConfig, standardizer: &LabelStandardizer, epoch: u32) -> Result<LabelledBatch> {
    let samples = random_samples(cfg, TAG_TRAIN, u64::from(epoch), cfg.train.batch_size)?;
    assemble(cfg, standardizer, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Overrides, Profile};
    use dmhsa_core::beamforming::sinr_oracle;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::profile(Profile::Desk, &Overrides::default()).unwrap();
        c.train.batch_size = 16;
        c.train.calibration_samples = 64;
        c
    }

    #[test]
    fn batches_are_reproducible_and_fresh() {
        let cfg = small();
        let s = calibrate_standardizer(&cfg).unwrap();
        let a = generate_batch(&cfg, &s, 3).unwrap();
        let b = generate_batch(&cfg, &s, 3).unwrap();
        let c = generate_batch(&cfg, &s, 4).unwrap();
        assert_eq!(a.batch, b.batch);
        assert_ne!(a.batch.features, c.batch.features);
        assert_eq!(a.batch.len(), 16);
    }

    #[test]
    fn labels_replay_the_oracle() {
        let cfg = small();
        let scen = cfg.scenario();
        let samples = random_samples(&cfg, TAG_TRAIN, 0, 16).unwrap();
        let s = calibrate_standardizer(&cfg).unwrap();
        let lb = assemble(&cfg, &s, &samples).unwrap();
        for (sample, labels) in samples.iter().zip(&lb.labels_db) {
            let replay = sinr_oracle(&sample.los, &[], &scen.link, &scen.array, &scen.beamformer, cfg.variant).unwrap();
            for (a, b) in replay.sinr_db.iter().zip(labels) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        for (i, n) in lb.batch.n_valid.iter().enumerate() {
            for k in 0..*n {
                let l = lb.batch.labels[i * cfg.model.n_beams + k];
                assert!((s.destandardize(l) - lb.labels_db[i][k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_data() {
        let cfg = small();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| random_samples(&cfg, TAG_TRAIN, 9, 32)).unwrap();
        let b = four.install(|| random_samples(&cfg, TAG_TRAIN, 9, 32)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.sinr, y.sinr);
        }
    }
}
