use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::masking::{whole_ggram_mask, MaskedExample};
use super::{example_rng, par_map, reduce_grads, ExampleGrad, TrainConfig};
use crate::corpus::Sequence;
use crate::error::{Error, Result};
use crate::featurize::{Example, Featurizer};
use crate::model::{forward_on_tape, mlm_logits_var, ModelState};
use crate::nn::{Adam, Tape, Tensor};
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub loss: f32,
    pub lr: f32,
    pub masked_frac: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PretrainOptions {
    /// Periodic and last-good checkpoints go here.
    pub checkpoint_dir: Option<PathBuf>,
    /// JSON-lines metrics file, one record per step.
    pub metrics_log: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub state: ModelState,
    pub log: Vec<StepMetrics>,
    pub skipped_steps: u64,
}

fn mlm_on_tape(state: &ModelState, tape: &mut Tape, masked: &MaskedExample) -> Result<crate::nn::Var> {
    let f = forward_on_tape(state, tape, &masked.to_input(), None)?;
    let logits = mlm_logits_var(state, tape, f.final_reps)?;
    tape.cross_entropy(logits, &masked.labels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlmLoss {
    pub loss: f32,
    /// No position carried a label; `loss` is 0.
    pub skipped: bool,
}

/// Mean cross-entropy of `logits` (`N x V`) over positions with a label.
pub fn mlm_loss(logits: &Tensor, labels: &[Option<TokenId>]) -> Result<MlmLoss> {
    let mut tape = Tape::new();
    let x = tape.constant(logits.clone());
    let loss = tape.cross_entropy(x, labels)?;
    Ok(MlmLoss {
        loss: tape.value(loss).item(),
        skipped: labels.iter().all(Option::is_none),
    })
}

/// Model MLM loss on one masked example.
pub fn masked_example_loss(state: &ModelState, masked: &MaskedExample) -> Result<f32> {
    let mut tape = Tape::new();
    let loss = mlm_on_tape(state, &mut tape, masked)?;
    Ok(tape.value(loss).item())
}

fn mlm_grad(state: &ModelState, masked: &MaskedExample) -> Result<ExampleGrad> {
    let mut tape = Tape::new();
    let loss = mlm_on_tape(state, &mut tape, masked)?;
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    Ok(ExampleGrad {
        loss: value,
        counted: !masked.masked_positions.is_empty(),
        grads: tape.param_grads(&grads),
    })
}

/// Pre-trains on raw sequences, splitting long ones into windows that fit
/// the model.
pub fn pretrain(
    corpus: &[Sequence],
    featurizer: &Featurizer,
    init: ModelState,
    cfg: &TrainConfig,
    opts: &PretrainOptions,
) -> Result<PretrainOutput> {
    let examples: Vec<Example> = corpus.iter().flat_map(|s| featurizer.featurize_chunked(s)).collect();
    pretrain_examples(&examples, featurizer, init, cfg, opts)
}

/// Pre-trains on already featurized examples.
///
/// Masks are drawn afresh for every example in every epoch from a stream
/// keyed by (seed, epoch, example index), so runs are reproducible and
/// independent of the worker count.
pub fn pretrain_examples(
    examples: &[Example],
    featurizer: &Featurizer,
    init: ModelState,
    cfg: &TrainConfig,
    opts: &PretrainOptions,
) -> Result<PretrainOutput> {
    cfg.validate()?;
    init.validate()?;
    if examples.is_empty() {
        return Err(Error::Validation("pre-training corpus is empty".into()));
    }
    if init.config.token_vocab_size != featurizer.tokens.len() {
        return Err(Error::Validation(format!(
            "model token vocabulary {} does not match tokenizer size {}",
            init.config.token_vocab_size,
            featurizer.tokens.len()
        )));
    }
    if init.config.ggram_vocab_size < featurizer.ggrams.len() {
        return Err(Error::Validation(format!(
            "model G-gram vocabulary {} is smaller than {} entries",
            init.config.ggram_vocab_size,
            featurizer.ggrams.len()
        )));
    }
    if let Some(dir) = &opts.checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut metrics_out = match &opts.metrics_log {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => None,
    };

    let adam_cfg = cfg.adam();
    let mut adam = Adam::new(adam_cfg);
    let mut state = init;
    let steps_per_epoch = examples.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.max_steps.unwrap_or(cfg.epochs * steps_per_epoch);
    let mut log = Vec::with_capacity(total_steps);
    let mut order: Vec<usize> = Vec::new();

    for step in 0..total_steps {
        let epoch = step / steps_per_epoch;
        let in_epoch = step % steps_per_epoch;
        if in_epoch == 0 {
            order = (0..examples.len()).collect();
            order.shuffle(&mut example_rng(cfg.seed, epoch, usize::MAX >> 32));
        }
        let batch = &order[in_epoch * cfg.batch_size..((in_epoch + 1) * cfg.batch_size).min(order.len())];
        let masked: Vec<MaskedExample> = batch
            .iter()
            .map(|&i| whole_ggram_mask(&examples[i], cfg, &featurizer.tokens, &mut example_rng(cfg.seed, epoch, i)))
            .collect();
        let masked_frac = masked.iter().map(MaskedExample::masked_fraction).sum::<f64>() / masked.len() as f64;

        let results = par_map(cfg.workers, &masked, |m| mlm_grad(&state, m));
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let Some((loss, grads)) = reduce_grads(results) else {
            log::debug!("step {step}: no masked tokens in batch");
            continue;
        };
        if !loss.is_finite() {
            if let Some(dir) = &opts.checkpoint_dir {
                state.save(dir.join("last_good.ckpt"), &adam_cfg)?;
            }
            return Err(Error::NonFiniteLoss { step });
        }
        adam.step(&mut state.params, &grads);

        let m = StepMetrics {
            step: step + 1,
            loss,
            lr: adam_cfg.lr,
            masked_frac,
        };
        if let Some(out) = metrics_out.as_mut() {
            let path = opts.metrics_log.as_deref().unwrap_or(Path::new(""));
            serde_json::to_writer(&mut *out, &m)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        log::info!("step {} loss {:.4} masked {:.3}", m.step, m.loss, m.masked_frac);
        log.push(m);

        if let Some(dir) = &opts.checkpoint_dir {
            if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
                state.save(dir.join(format!("step_{:06}.ckpt", step + 1)), &adam_cfg)?;
            }
        }
    }
    if let Some(mut out) = metrics_out {
        let path = opts.metrics_log.as_deref().unwrap_or(Path::new(""));
        out.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(PretrainOutput {
        state,
        log,
        skipped_steps: adam.skipped(),
    })
}
