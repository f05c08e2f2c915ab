use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{example_rng, par_map, reduce_grads, ExampleGrad};
use crate::corpus::{LabeledDataset, TaskData};
use crate::error::{Error, Result};
use crate::eval::mcc_of;
use crate::featurize::{Example, Featurizer};
use crate::model::{class_logits_var, forward_on_tape, ModelState};
use crate::nn::{Adam, AdamConfig, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub lr: f32,
    pub batch_size: usize,
    pub epochs: usize,
    /// One run per seed; results are averaged.
    pub seeds: Vec<u64>,
    pub workers: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            lr: 5e-4,
            batch_size: 16,
            epochs: 3,
            seeds: vec![42],
            workers: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f32,
    pub dev_mcc: f64,
}

/// One seed's run, keeping the epoch with the best dev MCC.
#[derive(Debug, Clone)]
pub struct FinetuneRun {
    pub seed: u64,
    pub best_epoch: usize,
    pub dev_mcc: f64,
    pub test_mcc: f64,
    pub log: Vec<EpochMetrics>,
    pub state: ModelState,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutput {
    pub runs: Vec<FinetuneRun>,
    pub mean_dev_mcc: f64,
    pub mean_test_mcc: f64,
}

impl FinetuneOutput {
    /// The run with the highest dev MCC (earliest on ties).
    pub fn best(&self) -> &FinetuneRun {
        let mut best = &self.runs[0];
        for r in &self.runs[1..] {
            if r.dev_mcc > best.dev_mcc {
                best = r;
            }
        }
        best
    }
}

fn featurize_split(featurizer: &Featurizer, ds: &LabeledDataset) -> Vec<(Example, usize)> {
    ds.records.iter().map(|(s, l)| (featurizer.featurize(s), *l)).collect()
}

/// Predicted class per example.
pub fn predict(state: &ModelState, examples: &[Example], workers: usize) -> Result<Vec<usize>> {
    let out = par_map(workers, examples, |ex| -> Result<usize> {
        let mut tape = Tape::new();
        let f = forward_on_tape(state, &mut tape, &ex.to_input(), None)?;
        let y = class_logits_var(state, &mut tape, f.final_reps)?;
        let logits = tape.value(y).data();
        let mut best = 0;
        for (k, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = k;
            }
        }
        Ok(best)
    });
    out.into_iter().collect()
}

fn split_mcc(state: &ModelState, data: &[(Example, usize)], k: usize, workers: usize) -> Result<f64> {
    let examples: Vec<Example> = data.iter().map(|(e, _)| e.clone()).collect();
    let pred = predict(state, &examples, workers)?;
    let gold: Vec<usize> = data.iter().map(|(_, l)| *l).collect();
    mcc_of(&gold, &pred, k)
}

fn class_grad(state: &ModelState, ex: &Example, label: usize) -> Result<ExampleGrad> {
    let mut tape = Tape::new();
    let f = forward_on_tape(state, &mut tape, &ex.to_input(), None)?;
    let logits = class_logits_var(state, &mut tape, f.final_reps)?;
    let loss = tape.cross_entropy(logits, &[Some(label as u32)])?;
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    Ok(ExampleGrad {
        loss: value,
        counted: true,
        grads: tape.param_grads(&grads),
    })
}

/// Fine-tunes a copy of `init` once per seed. A classification head is
/// added when `init` has none or its class count differs from the task's.
pub fn finetune(
    task: &TaskData,
    featurizer: &Featurizer,
    init: &ModelState,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutput> {
    cfg.validate()?;
    init.validate()?;
    let k = task.train.num_classes;
    if task.train.is_empty() || task.dev.is_empty() || task.test.is_empty() {
        return Err(Error::Validation("train, dev and test splits must all be non-empty".into()));
    }
    let first = task.train.records[0].1;
    if task.train.labels().all(|l| l == first) {
        return Err(Error::Validation(format!(
            "train split of {:?} has a single class ({first})",
            task.name
        )));
    }
    let train = featurize_split(featurizer, &task.train);
    let dev = featurize_split(featurizer, &task.dev);
    let test = featurize_split(featurizer, &task.test);

    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut state = init.clone();
        if state.num_classes() != Some(k) {
            state.init_classifier(k, seed)?;
        }
        let mut adam = Adam::new(AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        });
        let mut best: Option<(usize, f64, ModelState)> = None;
        let mut log = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut example_rng(seed, epoch, 0));
            let mut loss_sum = 0.0f64;
            let mut batches = 0usize;
            for batch in order.chunks(cfg.batch_size) {
                let results = par_map(cfg.workers, batch, |&i| class_grad(&state, &train[i].0, train[i].1));
                let results = results.into_iter().collect::<Result<Vec<_>>>()?;
                let Some((loss, grads)) = reduce_grads(results) else { continue };
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { step: adam.steps() as usize });
                }
                adam.step(&mut state.params, &grads);
                loss_sum += loss as f64;
                batches += 1;
            }
            let dev_mcc = split_mcc(&state, &dev, k, cfg.workers)?;
            let m = EpochMetrics {
                epoch: epoch + 1,
                train_loss: (loss_sum / batches.max(1) as f64) as f32,
                dev_mcc,
            };
            log::info!("seed {seed} epoch {} loss {:.4} dev MCC {:.4}", m.epoch, m.train_loss, m.dev_mcc);
            log.push(m);
            if best.as_ref().is_none_or(|(_, b, _)| dev_mcc > *b) {
                best = Some((epoch + 1, dev_mcc, state.clone()));
            }
        }
        let (best_epoch, dev_mcc, state) = best.expect("at least one epoch");
        let test_mcc = split_mcc(&state, &test, k, cfg.workers)?;
        runs.push(FinetuneRun {
            seed,
            best_epoch,
            dev_mcc,
            test_mcc,
            log,
            state,
        });
    }
    let n = runs.len() as f64;
    Ok(FinetuneOutput {
        mean_dev_mcc: runs.iter().map(|r| r.dev_mcc).sum::<f64>() / n,
        mean_test_mcc: runs.iter().map(|r| r.test_mcc).sum::<f64>() / n,
        runs,
    })
}
