#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dnazen::ggram::{GGramEntry, GGramMatchSet, GGramVocab, Match};
use dnazen::model::{ModelConfig, ModelInput, ModelState};
use dnazen::nn::{Tape, Tensor, Var};
use dnazen::tokenizer::TokenVocab;
use dnazen::Result;

pub const FD_EPS: f32 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

/// Worst-case gradient error of one input, relative to that input's
/// largest gradient entry.
#[derive(Debug, Clone, Copy)]
pub struct GradError {
    pub max_abs: f64,
    pub scale: f64,
}

impl GradError {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.max_abs
        } else {
            self.max_abs / self.scale
        }
    }
}

/// Which entries of an input to probe: all of them up to `limit`, otherwise
/// a fixed random sample of `limit`.
pub fn probe_indices(n: usize, limit: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= limit {
        (0..n).collect()
    } else {
        (0..limit).map(|_| rng.gen_range(0..n)).collect()
    }
}

/// Checks `f` (any output shape) against central differences. The output
/// is reduced to a scalar with fixed random weights; the finite-difference
/// side does that reduction in f64.
pub fn gradcheck<F>(inputs: &[Tensor], limit: usize, seed: u64, f: F) -> Vec<GradError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut r = rng(seed);
    let out_shape = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let y = f(&mut tape, &vars).unwrap();
        tape.value(y).shape().to_vec()
    };
    let weights = randn(&out_shape, &mut r);

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let y = f(&mut tape, &vars).unwrap();
    let w = tape.constant(weights.clone());
    let yw = tape.mul(y, w).unwrap();
    let loss = tape.sum(yw);
    let grads = tape.backward(loss).unwrap();

    let eval = |xs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        let y = f(&mut tape, &vars).unwrap();
        tape.value(y)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum()
    };

    let mut out = Vec::with_capacity(inputs.len());
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).map(|g| g.data().to_vec()).unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let mut err = GradError { max_abs: 0.0, scale: 0.0 };
        for j in probe_indices(inputs[i].numel(), limit, &mut r) {
            let mut xs = inputs.to_vec();
            let x0 = xs[i].data()[j];
            xs[i].data_mut()[j] = x0 + FD_EPS;
            let up = eval(&xs);
            xs[i].data_mut()[j] = x0 - FD_EPS;
            let down = eval(&xs);
            // Use the perturbation actually representable in f32.
            let h = (x0 + FD_EPS) as f64 - (x0 - FD_EPS) as f64;
            let numeric = (up - down) / h;
            let a = analytic[j] as f64;
            err.max_abs = err.max_abs.max((a - numeric).abs());
            err.scale = err.scale.max(a.abs()).max(numeric.abs());
        }
        out.push(err);
    }
    out
}

pub fn small_config(token_vocab: usize, ggram_vocab: usize) -> ModelConfig {
    ModelConfig {
        hidden: 16,
        token_layers: 3,
        ggram_layers: 2,
        heads: 2,
        token_vocab_size: token_vocab,
        ggram_vocab_size: ggram_vocab,
        max_len: 32,
        max_matches: 16,
    }
}

/// Random token ids (CLS first, SEP last) and random spans over the inner
/// positions.
pub fn random_input(state: &ModelState, n: usize, t: usize, rng: &mut ChaCha8Rng) -> ModelInput {
    let cfg = &state.config;
    let mut ids = vec![2u32];
    ids.extend((0..n - 2).map(|_| rng.gen_range(5..cfg.token_vocab_size as u32)));
    ids.push(3);
    let matches = (0..t)
        .map(|_| {
            let len = rng.gen_range(2..=4.min(n - 2));
            let start = rng.gen_range(1..=n - 1 - len);
            Match {
                ggram: rng.gen_range(0..cfg.ggram_vocab_size as u32),
                start,
                end: start + len,
            }
        })
        .collect();
    ModelInput::new(ids, &GGramMatchSet { matches, source_len: n })
}

pub fn acgt_vocab() -> TokenVocab {
    TokenVocab::from_merges(&['A', 'C', 'G', 'T'], &[]).unwrap()
}

/// A G-gram vocabulary over the given token tuples.
pub fn ggram_vocab(tuples: &[Vec<u32>]) -> GGramVocab {
    let entries = tuples
        .iter()
        .map(|t| GGramEntry {
            tokens: t.clone(),
            text: String::new(),
            freq: 1,
        })
        .collect();
    let min = tuples.iter().map(Vec::len).min().unwrap_or(2).max(2);
    let max = tuples.iter().map(Vec::len).max().unwrap_or(5).max(min);
    GGramVocab::new(entries, min, max, None).unwrap()
}

/// Cross-entropy in f64 over `Some` rows of a `rows x classes` logit table.
pub fn cross_entropy_f64(logits: &Tensor, labels: &[Option<u32>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for (i, label) in labels.iter().enumerate() {
        let Some(label) = label else { continue };
        let row: Vec<f64> = logits.row(i).iter().map(|&x| x as f64).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
        total += z.ln() + max - row[*label as usize];
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Gradient check of a whole-model loss with respect to every parameter
/// tensor. `logits` builds the logit table on a tape from a state.
pub fn param_gradcheck<F>(
    state: &ModelState,
    labels: &[Option<u32>],
    limit: usize,
    seed: u64,
    logits: F,
) -> Vec<(String, GradError)>
where
    F: Fn(&ModelState, &mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let y = logits(state, &mut tape).unwrap();
    let loss = tape.cross_entropy(y, labels).unwrap();
    let grads = tape.backward(loss).unwrap();
    let analytic = tape.param_grads(&grads);

    let eval = |s: &ModelState| -> f64 {
        let mut tape = Tape::new();
        let y = logits(s, &mut tape).unwrap();
        cross_entropy_f64(tape.value(y), labels)
    };

    let mut r = rng(seed);
    let mut work = state.clone();
    let names: Vec<String> = state.params.iter().map(|(n, _)| n.clone()).collect();
    let mut out = Vec::new();
    for name in names {
        let n = state.params.get(&name).unwrap().numel();
        let a = analytic.get(&name).map(|g| g.data().to_vec()).unwrap_or_else(|| vec![0.0; n]);
        let mut err = GradError { max_abs: 0.0, scale: 0.0 };
        for j in probe_indices(n, limit, &mut r) {
            let x0 = state.params.get(&name).unwrap().data()[j];
            work.params.get_mut(&name).unwrap().data_mut()[j] = x0 + FD_EPS;
            let up = eval(&work);
            work.params.get_mut(&name).unwrap().data_mut()[j] = x0 - FD_EPS;
            let down = eval(&work);
            work.params.get_mut(&name).unwrap().data_mut()[j] = x0;
            let h = (x0 + FD_EPS) as f64 - (x0 - FD_EPS) as f64;
            let numeric = (up - down) / h;
            err.max_abs = err.max_abs.max((a[j] as f64 - numeric).abs());
            err.scale = err.scale.max((a[j] as f64).abs()).max(numeric.abs());
        }
        out.push((name, err));
    }
    out
}

/// Redraws every parameter from N(0, std) (LayerNorm gains around 1), so
/// attention is far from uniform and gradients are well above f32 noise.
pub fn spread_params(state: &mut ModelState, std: f32, seed: u64) {
    let mut r = rng(seed);
    for (name, t) in state.params.iter_mut() {
        let fresh = Tensor::randn(t.shape(), std, &mut r);
        for (v, n) in t.data_mut().iter_mut().zip(fresh.data()) {
            *v = if name.ends_with(".g") { 1.0 + n * 0.2 } else { *n };
        }
    }
}
