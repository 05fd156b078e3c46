use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{DmhsaConfig, DmhsaError};
use crate::autodiff::Tensor;
use crate::math;

/// Names and shapes of every parameter block, in storage order.
///
/// Order: `fc1.{w,b}`, `ln1.{gamma,beta}`, `fc2.{w,b}`, `ln2.{gamma,beta}`,
/// `pe`, then for `snr` and `inr`: per head `q.{w,b}`, `k.{w,b}`, `v.{w,b}`,
/// followed by `out.{w,b}` and `readout.{w,b}`. Weights are stored `[in, out]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    n_heads: usize,
}

pub(super) const FC1_W: usize = 0;
pub(super) const FC1_B: usize = 1;
pub(super) const LN1_G: usize = 2;
pub(super) const LN1_B: usize = 3;
pub(super) const FC2_W: usize = 4;
pub(super) const FC2_B: usize = 5;
pub(super) const LN2_G: usize = 6;
pub(super) const LN2_B: usize = 7;
pub(super) const PE: usize = 8;
const TRUNK: usize = 9;

/// Indices of one attention module's blocks.
#[derive(Debug, Clone, Copy)]
pub(super) struct ModuleIndex {
    base: usize,
    n_heads: usize,
}

impl ModuleIndex {
    /// `(q_w, q_b, k_w, k_b, v_w, v_b)` of head `j`.
    pub(super) fn head(&self, j: usize) -> [usize; 6] {
        let b = self.base + 6 * j;
        [b, b + 1, b + 2, b + 3, b + 4, b + 5]
    }

    pub(super) fn out(&self) -> (usize, usize) {
        let b = self.base + 6 * self.n_heads;
        (b, b + 1)
    }

    pub(super) fn readout(&self) -> (usize, usize) {
        let b = self.base + 6 * self.n_heads + 2;
        (b, b + 1)
    }
}

impl ParamLayout {
    pub fn new(cfg: &DmhsaConfig) -> Self {
        let (d, c, hd) = (cfg.feature_dim, cfg.n_channels, cfg.head_dim());
        let mut names = Vec::new();
        let mut shapes = Vec::new();
        let mut add = |n: String, s: Vec<usize>| {
            names.push(n);
            shapes.push(s);
        };
        add("fc1.w".into(), vec![d, c]);
        add("fc1.b".into(), vec![c]);
        add("ln1.gamma".into(), vec![c]);
        add("ln1.beta".into(), vec![c]);
        add("fc2.w".into(), vec![c, c]);
        add("fc2.b".into(), vec![c]);
        add("ln2.gamma".into(), vec![c]);
        add("ln2.beta".into(), vec![c]);
        add("pe".into(), vec![cfg.n_beams, c]);
        for m in ["snr", "inr"] {
            for j in 0..cfg.n_heads {
                for p in ["q", "k", "v"] {
                    add(format!("{m}.head{j}.{p}.w"), vec![c, hd]);
                    add(format!("{m}.head{j}.{p}.b"), vec![hd]);
                }
            }
            add(format!("{m}.out.w"), vec![c, c]);
            add(format!("{m}.out.b"), vec![c]);
            add(format!("{m}.readout.w"), vec![c, 1]);
            add(format!("{m}.readout.b"), vec![1]);
        }
        Self {
            names,
            shapes,
            n_heads: cfg.n_heads,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub(super) fn module(&self, inr: bool) -> ModuleIndex {
        let per = 6 * self.n_heads + 4;
        ModuleIndex {
            base: TRUNK + if inr { per } else { 0 },
            n_heads: self.n_heads,
        }
    }
}

/// All learnable tensors of one model, ordered by [`ParamLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct DmhsaParams {
    layout: ParamLayout,
    tensors: Vec<Tensor>,
}

impl DmhsaParams {
    /// Kaiming-uniform weights for the leaky slope, zero biases, unit/zero
    /// layer-norm affine terms and `N(0, 0.02²)` position embeddings.
    pub fn init<R: Rng + ?Sized>(cfg: &DmhsaConfig, rng: &mut R) -> Result<Self, DmhsaError> {
        cfg.validate()?;
        let layout = ParamLayout::new(cfg);
        let gain = 1.0 + cfg.leaky_slope * cfg.leaky_slope;
        let tensors = layout
            .names
            .iter()
            .zip(&layout.shapes)
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data: Vec<f64> = if name == "pe" {
                    (0..n).map(|_| 0.02 * rng.sample::<f64, _>(StandardNormal)).collect()
                } else if name.ends_with(".gamma") {
                    vec![1.0; n]
                } else if name.ends_with(".w") {
                    let bound = math::sqrt(6.0 / (gain * shape[0] as f64));
                    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                } else {
                    vec![0.0; n]
                };
                Tensor::new(shape.clone(), data).expect("layout shape")
            })
            .collect();
        Ok(Self { layout, tensors })
    }

    /// Reassembles parameters from tensors in layout order.
    pub fn from_tensors(cfg: &DmhsaConfig, tensors: Vec<Tensor>) -> Result<Self, DmhsaError> {
        cfg.validate()?;
        let layout = ParamLayout::new(cfg);
        if tensors.len() != layout.len() || tensors.iter().zip(&layout.shapes).any(|(t, s)| t.shape() != s.as_slice()) {
            return Err(DmhsaError::DimensionMismatch("parameter blocks do not match the layout"));
        }
        Ok(Self { layout, tensors })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.layout.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data().iter().all(|x| x.is_finite()))
    }
}

pub fn count_parameters(params: &DmhsaParams) -> usize {
    params.tensors.iter().map(Tensor::len).sum()
}

pub fn count_parameters_closed_form(cfg: &DmhsaConfig) -> usize {
    let (d, c, b) = (cfg.feature_dim, cfg.n_channels, cfg.n_beams);
    (d + 1) * c + 4 * c + c * (c + 1) + b * c + 2 * (c + 1) * (4 * c + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;

    #[test]
    fn counts() {
        let mut rng = rng_for(1, "params", 0);
        let geo = DmhsaConfig::geo(24);
        let p = DmhsaParams::init(&geo, &mut rng).unwrap();
        assert_eq!(count_parameters(&p), 922);
        assert!((530..=1000).contains(&count_parameters(&p)));

        let csi = DmhsaConfig::csi(512, 24);
        let p = DmhsaParams::init(&csi, &mut rng).unwrap();
        assert_eq!(count_parameters(&p), 5010);
        assert!((4400..=5400).contains(&count_parameters(&p)));

        for n_c in [4, 8, 16, 24] {
            for cfg in [geo, csi] {
                let cfg = DmhsaConfig { n_channels: n_c, ..cfg };
                let p = DmhsaParams::init(&cfg, &mut rng).unwrap();
                assert_eq!(count_parameters(&p), count_parameters_closed_form(&cfg));
            }
        }
        // Doubling N_C from 8 to 16 for the location model.
        let a = count_parameters_closed_form(&geo);
        let b = count_parameters_closed_form(&DmhsaConfig { n_channels: 16, ..geo });
        assert_eq!(b - a, (4 * 8 + 4 * 8 + (16 * 17 - 72) + 24 * 8) + 2 * (17 * 65 - 9 * 33));
    }

    #[test]
    fn layout_indices() {
        let cfg = DmhsaConfig::geo(6);
        let l = ParamLayout::new(&cfg);
        assert_eq!(l.names[PE], "pe");
        let inr = l.module(true);
        assert_eq!(l.names[inr.head(3)[4]], "inr.head3.v.w");
        assert_eq!(l.names[inr.out().1], "inr.out.b");
        assert_eq!(l.names[l.module(false).readout().0], "snr.readout.w");
        assert_eq!(inr.readout().1, l.len() - 1);
    }

    #[test]
    fn init_conventions() {
        let cfg = DmhsaConfig::geo(8);
        let p = DmhsaParams::init(&cfg, &mut rng_for(9, "params", 0)).unwrap();
        assert!(p.get("ln2.gamma").unwrap().data().iter().all(|x| *x == 1.0));
        assert!(p.get("snr.out.b").unwrap().data().iter().all(|x| *x == 0.0));
        let bound = math::sqrt(6.0 / (1.0001 * 3.0));
        assert!(p.get("fc1.w").unwrap().data().iter().all(|x| x.abs() <= bound));
        let pe = p.get("pe").unwrap().data();
        assert!(pe.iter().all(|x| x.abs() < 0.15) && pe.iter().any(|x| *x != 0.0));
        assert!(DmhsaParams::from_tensors(&cfg, p.tensors()[1..].to_vec()).is_err());
    }
}
