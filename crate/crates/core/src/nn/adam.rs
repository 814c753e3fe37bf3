//! Adam optimizer with the step-count learning-rate schedule.

use crate::nn::params::ParamStore;

/// Piecewise-constant learning rate over the step counter.
#[derive(Debug, Clone)]
pub struct LrSchedule {
    pub base: f64,
    /// `(step_threshold, lr)` pairs, ascending; the lr applies once
    /// `step >= step_threshold`.
    pub drops: Vec<(u64, f64)>,
}

impl LrSchedule {
    /// 2e-4, dropping to 2e-5 after 100k steps and 2e-6 after 200k.
    pub fn paper_default() -> LrSchedule {
        LrSchedule { base: 2e-4, drops: vec![(100_000, 2e-5), (200_000, 2e-6)] }
    }

    pub fn constant(lr: f64) -> LrSchedule {
        LrSchedule { base: lr, drops: Vec::new() }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        let mut lr = self.base;
        for &(threshold, value) in &self.drops {
            if step >= threshold {
                lr = value;
            }
        }
        lr
    }
}

/// First/second moment state per parameter plus the schedule.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub schedule: LrSchedule,
}

/// Per-step report; updates with non-finite gradients are skipped rather
/// than corrupting the parameters.
#[derive(Debug, Clone, Default)]
pub struct AdamReport {
    pub skipped_non_finite: usize,
    pub lr: f64,
}

impl AdamState {
    /// Betas (0.5, 0.999), epsilon 1e-8.
    pub fn new(store: &ParamStore, schedule: LrSchedule) -> AdamState {
        let m = store.iter().map(|p| vec![0.0; p.data.len()]).collect();
        let v = store.iter().map(|p| vec![0.0; p.data.len()]).collect();
        AdamState { m, v, step: 0, beta1: 0.5, beta2: 0.999, epsilon: 1e-8, schedule }
    }

    /// One Adam step with bias correction over all parameters in the store,
    /// consuming the accumulated gradients.
    pub fn step(&mut self, store: &mut ParamStore) -> AdamReport {
        let len = store.len();
        self.step_range(store, 0..len)
    }

    /// Adam step restricted to a contiguous index range of the store; moment
    /// state outside the range is untouched so several optimizers can share
    /// one store (e.g. generator and discriminator partitions).
    pub fn step_range(
        &mut self,
        store: &mut ParamStore,
        range: std::ops::Range<usize>,
    ) -> AdamReport {
        self.step += 1;
        let lr = self.schedule.lr_at(self.step - 1);
        let mut report = AdamReport { lr, ..Default::default() };
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for idx in range {
            let entry = store.entry_mut(idx);
            if entry.grad.iter().any(|g| !g.is_finite()) {
                report.skipped_non_finite += 1;
                continue;
            }
            for i in 0..entry.data.len() {
                let g = entry.grad[i];
                self.m[idx][i] = self.beta1 * self.m[idx][i] + (1.0 - self.beta1) * g;
                self.v[idx][i] = self.beta2 * self.v[idx][i] + (1.0 - self.beta2) * g * g;
                let mhat = self.m[idx][i] / bc1;
                let vhat = self.v[idx][i] / bc2;
                entry.data[i] -= lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        report
    }
}
