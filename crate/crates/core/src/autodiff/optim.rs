use alloc::vec::Vec;

use super::Tensor;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments for an ordered list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        Self {
            config,
            step: 0,
            m: params.iter().map(|p| alloc::vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| alloc::vec![0.0; p.len()]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One Adam update. The L2 term is added to the gradient before the moments.
    ///
    /// # Panics
    /// If `params` or `grads` do not match the layout the state was created with.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[&Tensor], lr: f64, l2: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let t = self.step as f64;
        let c1 = 1.0 - math::powf(beta1, t);
        let c2 = 1.0 - math::powf(beta2, t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.len(), g.len(), "gradient shape mismatch");
            for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                let eff = gi + l2 * *w;
                *mi = beta1 * *mi + (1.0 - beta1) * eff;
                *vi = beta2 * *vi + (1.0 - beta2) * eff * eff;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= lr * mhat / (math::sqrt(vhat) + epsilon);
            }
        }
    }
}

/// Linear warmup followed by cosine annealing with warm restarts.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct LrSchedule {
    pub warmup_epochs: u32,
    pub cycle_epochs: u32,
    pub lr_min: f64,
    pub lr_max: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            warmup_epochs: 40,
            cycle_epochs: 100,
            lr_min: 1e-4,
            lr_max: 5e-3,
        }
    }
}

impl LrSchedule {
    /// Index of the annealing cycle containing `epoch`; `None` during warmup.
    pub fn cycle_of(&self, epoch: u32) -> Option<u32> {
        epoch
            .checked_sub(self.warmup_epochs)
            .map(|e| e / self.cycle_epochs.max(1))
    }
}

pub fn lr_at_epoch(epoch: u32, s: &LrSchedule) -> f64 {
    let span = s.lr_max - s.lr_min;
    if epoch < s.warmup_epochs {
        return s.lr_min + span * epoch as f64 / s.warmup_epochs as f64;
    }
    let tc = s.cycle_epochs.max(1);
    let tau = (epoch - s.warmup_epochs) % tc;
    s.lr_min + 0.5 * span * (1.0 + math::cos(math::PI * tau as f64 / tc as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Stops after `patience` consecutive cycles without a strict improvement of the
/// cycle-mean loss.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: u32,
    best: f64,
    stale: u32,
}

impl EarlyStopper {
    pub fn new(patience: u32) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Feeds one completed cycle's mean loss. Returns whether it improved and
    /// the resulting decision.
    pub fn observe(&mut self, cycle_mean: f64) -> (bool, StopDecision) {
        let improved = cycle_mean < self.best;
        if improved {
            self.best = cycle_mean;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        let decision = if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        };
        (improved, decision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn first_step_moves_by_lr() {
        for lr in [1e-3, 5e-3, 0.1] {
            let mut p = vec![Tensor::from_vec(vec![0.3, -2.0])];
            let g = Tensor::from_vec(vec![1.0, 1.0]);
            let mut st = AdamState::new(AdamConfig::default(), &p);
            st.step(&mut p, &[&g], lr, 0.0);
            for (after, before) in p[0].data().iter().zip([0.3, -2.0]) {
                let delta = after - before;
                assert!(((delta + lr) / lr).abs() < 1e-6, "{delta}");
            }
        }
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = vec![Tensor::from_vec(vec![1.5, -0.25, 0.0])];
        let before = p.clone();
        let g = Tensor::zeros(&[3]);
        let mut st = AdamState::new(AdamConfig::default(), &p);
        for _ in 0..10 {
            st.step(&mut p, &[&g], 0.01, 0.0);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn l2_pulls_towards_zero() {
        let mut p = vec![Tensor::from_vec(vec![2.0])];
        let g = Tensor::zeros(&[1]);
        let mut st = AdamState::new(AdamConfig::default(), &p);
        st.step(&mut p, &[&g], 0.01, 1e-6);
        assert!(p[0].data()[0] < 2.0);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut p = vec![Tensor::from_vec(vec![0.0])];
        let mut st = AdamState::new(AdamConfig::default(), &p);
        for _ in 0..200 {
            let w = p[0].data()[0];
            let g = Tensor::from_vec(vec![2.0 * (w - 3.0)]);
            st.step(&mut p, &[&g], 0.1, 0.0);
        }
        assert!((p[0].data()[0] - 3.0).abs() < 0.05, "{:?}", p[0]);
    }

    #[test]
    fn schedule_values() {
        let s = LrSchedule::default();
        assert_eq!(lr_at_epoch(0, &s), 1e-4);
        assert!((lr_at_epoch(40, &s) - 5e-3).abs() < 1e-15);
        assert!((lr_at_epoch(90, &s) - 2.55e-3).abs() < 1e-12);
        assert!((lr_at_epoch(20, &s) - 2.55e-3).abs() < 1e-12);
        assert!((lr_at_epoch(140, &s) - 5e-3).abs() < 1e-15);
        assert_eq!(s.cycle_of(39), None);
        assert_eq!(s.cycle_of(40), Some(0));
        assert_eq!(s.cycle_of(140), Some(1));
        for e in 0..400 {
            let lr = lr_at_epoch(e, &s);
            assert!((s.lr_min..=s.lr_max).contains(&lr));
        }
        // Continuous at the end of warmup, monotone non-increasing within a cycle.
        assert!((lr_at_epoch(39, &s) - lr_at_epoch(40, &s)).abs() < 2e-4);
        for e in 40..139 {
            assert!(lr_at_epoch(e + 1, &s) <= lr_at_epoch(e, &s));
        }
    }

    #[test]
    fn stopper_needs_strict_improvement() {
        let mut st = EarlyStopper::new(4);
        assert_eq!(st.observe(1.0), (true, StopDecision::Continue));
        assert_eq!(st.observe(1.0).1, StopDecision::Continue);
        assert_eq!(st.observe(1.2).1, StopDecision::Continue);
        assert_eq!(st.observe(1.1).1, StopDecision::Continue);
        assert_eq!(st.observe(1.0), (false, StopDecision::Stop));

        let mut st = EarlyStopper::new(4);
        for (i, loss) in [5.0, 4.0, 4.5, 4.4, 4.3, 3.9, 4.0].iter().enumerate() {
            assert_eq!(st.observe(*loss).1, StopDecision::Continue, "cycle {i}");
        }
        assert_eq!(st.best(), 3.9);
    }
}
