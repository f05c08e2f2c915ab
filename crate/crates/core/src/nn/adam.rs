use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: BTreeMap<String, Vec<f32>>,
    v: BTreeMap<String, Vec<f32>>,
    skipped: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            skipped: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Steps skipped because a gradient was non-finite.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f32]> {
        self.m.get(name).map(Vec::as_slice)
    }

    /// Applies one update. Parameters without a gradient are left alone.
    /// If any gradient is non-finite the whole step is skipped.
    /// Returns whether the update was applied.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>) -> bool {
        if grads.values().any(|g| !g.is_finite()) {
            self.skipped += 1;
            log::warn!("skipping optimizer step: non-finite gradient ({} skipped so far)", self.skipped);
            return false;
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (name, g) in grads {
            let Some(p) = params.get_mut(name) else { continue };
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.numel()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.numel()]);
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(name: &str, v: f32) -> BTreeMap<String, Tensor> {
        [(name.to_string(), Tensor::scalar(v))].into_iter().collect()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = ParamStore::new();
        ps.insert("w", Tensor::scalar(1.5));
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut ps, &one("w", 0.0));
        assert_eq!(ps.get("w").unwrap().item(), 1.5);
        assert_eq!(adam.first_moment("w").unwrap(), &[0.0]);
    }

    #[test]
    fn moments_decay_under_zero_gradient() {
        let mut ps = ParamStore::new();
        ps.insert("w", Tensor::scalar(0.0));
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut ps, &one("w", 1.0));
        let m1 = adam.first_moment("w").unwrap()[0];
        adam.step(&mut ps, &one("w", 0.0));
        let m2 = adam.first_moment("w").unwrap()[0];
        assert!((m2 - 0.9 * m1).abs() < 1e-7);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut ps = ParamStore::new();
        ps.insert("w", Tensor::scalar(1.0));
        let mut adam = Adam::new(AdamConfig { lr: 0.1, ..Default::default() });
        adam.step(&mut ps, &one("w", 1.0));
        let w = ps.get("w").unwrap().item();
        assert!((w - 0.9).abs() < 1e-5, "w = {w}");
    }

    #[test]
    fn converges_on_quadratic() {
        let mut ps = ParamStore::new();
        ps.insert("w", Tensor::scalar(0.0));
        // With default moments the iterate rings around the optimum; the
        // residual after 100 steps depends on lr (0.1 leaves ~0.02).
        let mut adam = Adam::new(AdamConfig { lr: 0.3, ..Default::default() });
        for _ in 0..100 {
            let w = ps.get("w").unwrap().item();
            adam.step(&mut ps, &one("w", 2.0 * (w - 3.0)));
        }
        let w = ps.get("w").unwrap().item();
        assert!((w - 3.0).abs() < 1e-2, "w = {w}");
    }

    #[test]
    fn non_finite_gradient_skips() {
        let mut ps = ParamStore::new();
        ps.insert("w", Tensor::scalar(1.0));
        let mut adam = Adam::new(AdamConfig::default());
        assert!(!adam.step(&mut ps, &one("w", f32::NAN)));
        assert_eq!(adam.skipped(), 1);
        assert_eq!(adam.steps(), 0);
        assert_eq!(ps.get("w").unwrap().item(), 1.0);
    }
}
