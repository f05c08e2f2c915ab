//! Synthetic corpora and the planted-motif classification task.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{LabeledDataset, Sequence, Split, TaskData};
use crate::error::{Error, Result};

const BASES: [char; 4] = ['A', 'C', 'G', 'T'];

pub fn random_bases<R: Rng + ?Sized>(rng: &mut R, len: usize) -> String {
    (0..len).map(|_| BASES[rng.gen_range(0..4)]).collect()
}

/// `n` uniform random sequences of `len` bases.
pub fn random_corpus(n: usize, len: usize, seed: u64) -> Vec<Sequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| Sequence::new(format!("r{i}"), &random_bases(&mut rng, len)).expect("non-empty"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotifTaskConfig {
    pub num_sequences: usize,
    pub length: usize,
    pub motif: String,
    /// Train and dev fractions; the rest is test.
    pub train_frac: f64,
    pub dev_frac: f64,
    pub seed: u64,
}

impl Default for MotifTaskConfig {
    fn default() -> Self {
        MotifTaskConfig {
            num_sequences: 2000,
            length: 80,
            motif: "TATAAA".into(),
            train_frac: 0.8,
            dev_frac: 0.1,
            seed: 7,
        }
    }
}

/// Binary task: positives (label 1) carry the motif once at a random offset
/// in a motif-free background; each negative (label 0) is a base shuffle of
/// a positive that no longer contains the motif, so composition matches.
pub fn motif_task(cfg: &MotifTaskConfig) -> Result<TaskData> {
    let m = cfg.motif.len();
    if m == 0 || cfg.length <= m + 1 {
        return Err(Error::Config(format!(
            "length {} cannot hold motif {:?}",
            cfg.length, cfg.motif
        )));
    }
    if cfg.num_sequences < 6 {
        return Err(Error::Config("need at least 6 sequences".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.num_sequences);
    for i in 0..cfg.num_sequences {
        let positive = loop {
            let mut bg = random_bases(&mut rng, cfg.length - m);
            if bg.contains(&cfg.motif) {
                continue;
            }
            let at = rng.gen_range(0..=bg.len());
            bg.insert_str(at, &cfg.motif);
            if bg.matches(&cfg.motif).count() == 1 {
                break bg;
            }
        };
        if i % 2 == 0 {
            records.push((Sequence::new(format!("pos{i}"), &positive)?, 1));
        } else {
            let mut chars: Vec<char> = positive.chars().collect();
            let negative = loop {
                chars.shuffle(&mut rng);
                let s: String = chars.iter().collect();
                if !s.contains(&cfg.motif) {
                    break s;
                }
            };
            records.push((Sequence::new(format!("neg{i}"), &negative)?, 0));
        }
    }
    records.shuffle(&mut rng);
    let n_train = (cfg.train_frac * cfg.num_sequences as f64).round() as usize;
    let n_dev = (cfg.dev_frac * cfg.num_sequences as f64).round() as usize;
    let test = records.split_off((n_train + n_dev).min(records.len()));
    let dev = records.split_off(n_train.min(records.len()));
    Ok(TaskData {
        name: "motif".into(),
        train: LabeledDataset::new(records, 2, Split::Train)?,
        dev: LabeledDataset::new(dev, 2, Split::Dev)?,
        test: LabeledDataset::new(test, 2, Split::Test)?,
    })
}
