//! Whole G-gram masking.
//!
//! 1. Seed positions are drawn uniformly without replacement from the
//!    non-special tokens.
//! 2. A seed inside one or more matched G-grams masks every token of each of
//!    them. Seeding stops once the masked count reaches `ceil(ratio * n)`,
//!    so only the final seed's expansion can overshoot.
//! 3. Each masked position independently becomes MASK, a random non-special
//!    token, or stays unchanged.
//!
//! Matches whose tokens are all masked are withheld from the G-gram encoder
//! so it cannot leak the answer.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::featurize::Example;
use crate::ggram::{GGramMatchSet, Match};
use crate::model::ModelInput;
use crate::tokenizer::{TokenId, TokenVocab};

/// What stage 3 did to a masked position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Replacement {
    Mask,
    Random,
    Keep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedExample {
    pub input_ids: Vec<TokenId>,
    /// Original id at masked positions, `None` elsewhere.
    pub labels: Vec<Option<TokenId>>,
    /// Sorted ascending.
    pub masked_positions: Vec<usize>,
    /// Stage-1 seeds in the order they were drawn.
    pub seeds: Vec<usize>,
    /// Parallel to `masked_positions`.
    pub replacements: Vec<Replacement>,
    /// Indices into the original match list.
    pub withheld_match_ids: Vec<usize>,
    /// The matches left for the G-gram encoder.
    pub matches: GGramMatchSet,
    /// Number of non-special positions.
    pub maskable: usize,
}

impl MaskedExample {
    pub fn ggram_ids(&self) -> Vec<u32> {
        self.matches.ggram_ids()
    }

    pub fn masked_fraction(&self) -> f64 {
        if self.maskable == 0 {
            0.0
        } else {
            self.masked_positions.len() as f64 / self.maskable as f64
        }
    }

    /// Model input: masked tokens with the reduced match set.
    pub fn to_input(&self) -> ModelInput {
        ModelInput::new(self.input_ids.clone(), &self.matches)
    }
}

/// Applies whole G-gram masking to one example.
pub fn whole_ggram_mask<R: Rng + ?Sized>(
    example: &Example,
    cfg: &TrainConfig,
    vocab: &TokenVocab,
    rng: &mut R,
) -> MaskedExample {
    let ids = &example.token_ids;
    let matches = &example.matches.matches;
    let n = ids.len();
    let specials = vocab.specials();
    let mut candidates: Vec<usize> = (0..n).filter(|&i| !specials.contains(ids[i])).collect();
    let maskable = candidates.len();
    let budget = (cfg.mask_ratio * maskable as f64).ceil() as usize;

    let mut masked = vec![false; n];
    let mut seeds = Vec::new();
    let mut count = 0;
    if budget > 0 {
        candidates.shuffle(rng);
        for seed in candidates {
            if count >= budget {
                break;
            }
            if masked[seed] {
                continue;
            }
            masked[seed] = true;
            seeds.push(seed);
            count += 1;
            for m in matches.iter().filter(|m| m.contains(seed)) {
                for p in m.start..m.end {
                    // Matches never cover specials, but stay safe if given one that does.
                    if !masked[p] && !specials.contains(ids[p]) {
                        masked[p] = true;
                        count += 1;
                    }
                }
            }
        }
    }

    let first_random = vocab.num_specials() as TokenId;
    let vocab_len = vocab.len() as TokenId;
    let mut input_ids = ids.clone();
    let mut labels = vec![None; n];
    let mut masked_positions = Vec::with_capacity(count);
    let mut replacements = Vec::with_capacity(count);
    for p in (0..n).filter(|&p| masked[p]) {
        labels[p] = Some(ids[p]);
        masked_positions.push(p);
        let r: f64 = rng.gen();
        let rep = if r < cfg.mask_token_prob {
            input_ids[p] = specials.mask;
            Replacement::Mask
        } else if r < cfg.mask_token_prob + cfg.random_token_prob && first_random < vocab_len {
            input_ids[p] = rng.gen_range(first_random..vocab_len);
            Replacement::Random
        } else {
            Replacement::Keep
        };
        replacements.push(rep);
    }

    let mut withheld_match_ids = Vec::new();
    let mut kept: Vec<Match> = Vec::with_capacity(matches.len());
    for (t, m) in matches.iter().enumerate() {
        if (m.start..m.end).all(|p| masked[p]) {
            withheld_match_ids.push(t);
        } else {
            kept.push(*m);
        }
    }

    MaskedExample {
        input_ids,
        labels,
        masked_positions,
        seeds,
        replacements,
        withheld_match_ids,
        matches: GGramMatchSet {
            matches: kept,
            source_len: n,
        },
        maskable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab() -> TokenVocab {
        TokenVocab::from_merges(&['A', 'C', 'G', 'T'], &[]).unwrap()
    }

    fn example(n_inner: usize, matches: Vec<Match>) -> Example {
        let v = vocab();
        let sp = v.specials();
        let mut ids = vec![sp.cls];
        ids.extend((0..n_inner).map(|i| 5 + (i % 4) as TokenId));
        ids.push(sp.sep);
        let len = ids.len();
        Example {
            token_ids: ids,
            matches: GGramMatchSet {
                matches,
                source_len: len,
            },
        }
    }

    #[test]
    fn no_matches_is_plain_token_masking() {
        let ex = example(40, vec![]);
        let m = whole_ggram_mask(&ex, &TrainConfig::default(), &vocab(), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(m.masked_positions.len(), 6); // ceil(0.15 * 40)
        assert!(m.withheld_match_ids.is_empty());
        assert!(!m.masked_positions.contains(&0) && !m.masked_positions.contains(&41));
    }

    #[test]
    fn seed_inside_match_masks_whole_span() {
        // Budget 1 with a single candidate inside the match: positions 3,4,5.
        let v = vocab();
        let sp = v.specials();
        let mut ex = example(6, vec![Match { ggram: 0, start: 3, end: 6 }]);
        // Make every position except 4 special so the only seed is 4.
        for p in [1, 2, 3, 5, 6] {
            ex.token_ids[p] = sp.pad;
        }
        ex.token_ids[3] = 5;
        ex.token_ids[5] = 6;
        let cfg = TrainConfig {
            mask_ratio: 0.1,
            ..Default::default()
        };
        // Candidates: 3, 4, 5 -> budget 1. Any seed expands to the match.
        let m = whole_ggram_mask(&ex, &cfg, &v, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(m.masked_positions, vec![3, 4, 5]);
        assert_eq!(m.withheld_match_ids, vec![0]);
        assert!(m.matches.is_empty());
        assert_eq!(m.labels[4], Some(ex.token_ids[4]));
    }

    #[test]
    fn zero_budget_leaves_input() {
        let v = vocab();
        let sp = v.specials();
        let ex = Example {
            token_ids: vec![sp.cls, sp.sep],
            matches: GGramMatchSet {
                matches: vec![],
                source_len: 2,
            },
        };
        let m = whole_ggram_mask(&ex, &TrainConfig::default(), &v, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(m.masked_positions.is_empty());
        assert!(m.labels.iter().all(Option::is_none));
        assert_eq!(m.input_ids, ex.token_ids);
    }

    #[test]
    fn same_seed_same_example() {
        let ex = example(100, vec![Match { ggram: 0, start: 10, end: 14 }]);
        let cfg = TrainConfig::default();
        let a = whole_ggram_mask(&ex, &cfg, &vocab(), &mut ChaCha8Rng::seed_from_u64(5));
        let b = whole_ggram_mask(&ex, &cfg, &vocab(), &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }
}
