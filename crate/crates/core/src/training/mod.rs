//! Masked-language-model pre-training and classification fine-tuning.

pub mod finetune;
pub mod masking;
pub mod pretrain;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Tensor};

pub use finetune::{finetune, predict, EpochMetrics, FinetuneConfig, FinetuneOutput, FinetuneRun};
pub use masking::{whole_ggram_mask, MaskedExample, Replacement};
pub use pretrain::{masked_example_loss, mlm_loss, pretrain, pretrain_examples, PretrainOptions, MlmLoss, PretrainOutput, StepMetrics};

/// Pre-training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mask_ratio: f64,
    pub mask_token_prob: f64,
    pub random_token_prob: f64,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub batch_size: usize,
    pub epochs: usize,
    /// Overrides `epochs` when set.
    pub max_steps: Option<usize>,
    pub seed: u64,
    /// Checkpoint period in steps; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mask_ratio: 0.15,
            mask_token_prob: 0.8,
            random_token_prob: 0.1,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 16,
            epochs: 1,
            max_steps: None,
            seed: 42,
            checkpoint_every: 0,
            workers: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_ratio > 0.0 && self.mask_ratio <= 1.0) {
            return Err(Error::Config(format!("mask_ratio must be in (0, 1], got {}", self.mask_ratio)));
        }
        let p = self.mask_token_prob + self.random_token_prob;
        if self.mask_token_prob < 0.0 || self.random_token_prob < 0.0 || p > 1.0 + 1e-9 {
            return Err(Error::Config("replacement probabilities must be non-negative and sum to at most 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be non-negative, got {}", self.lr)));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Independent random stream for one (seed, epoch, item) triple.
pub fn example_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) ^ index as u64);
    rng
}

/// Per-example result of a forward/backward pass.
pub(crate) struct ExampleGrad {
    pub loss: f32,
    /// Whether the example contributed to the loss at all.
    pub counted: bool,
    pub grads: BTreeMap<String, Tensor>,
}

/// Runs `f` over `items` in parallel (on a dedicated pool when `workers > 0`)
/// and returns results in input order.
pub(crate) fn par_map<T, R, F>(workers: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let run = || items.par_iter().map(&f).collect::<Vec<R>>();
    if workers == 0 {
        return run();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}

/// Sums per-example gradients in input order and divides by the number of
/// counted examples, so the result does not depend on thread scheduling.
/// Returns the mean loss and the averaged gradients, or `None` when nothing
/// was counted.
pub(crate) fn reduce_grads(results: Vec<ExampleGrad>) -> Option<(f32, BTreeMap<String, Tensor>)> {
    let mut total: BTreeMap<String, Tensor> = BTreeMap::new();
    let mut loss = 0.0f64;
    let mut n = 0usize;
    for r in results.into_iter().filter(|r| r.counted) {
        loss += r.loss as f64;
        n += 1;
        for (name, g) in r.grads {
            match total.get_mut(&name) {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                None => {
                    total.insert(name, g);
                }
            }
        }
    }
    if n == 0 {
        return None;
    }
    let inv = 1.0 / n as f32;
    for g in total.values_mut() {
        for v in g.data_mut() {
            *v *= inv;
        }
    }
    Some(((loss / n as f64) as f32, total))
}
