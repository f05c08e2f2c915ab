use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

/// Unigram and adjacent-bigram counts over a tokenized corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PmiStatistics {
    pub unigram: HashMap<TokenId, u64>,
    pub bigram: HashMap<(TokenId, TokenId), u64>,
    pub total_tokens: u64,
    pub total_bigrams: u64,
}

impl PmiStatistics {
    /// Adds one sequence. Bigrams never cross sequence boundaries.
    pub fn add_sequence(&mut self, ids: &[TokenId]) {
        for &id in ids {
            *self.unigram.entry(id).or_default() += 1;
        }
        for w in ids.windows(2) {
            *self.bigram.entry((w[0], w[1])).or_default() += 1;
        }
        self.total_tokens += ids.len() as u64;
        self.total_bigrams += ids.len().saturating_sub(1) as u64;
    }

    pub fn merge(mut self, other: PmiStatistics) -> PmiStatistics {
        for (k, v) in other.unigram {
            *self.unigram.entry(k).or_default() += v;
        }
        for (k, v) in other.bigram {
            *self.bigram.entry(k).or_default() += v;
        }
        self.total_tokens += other.total_tokens;
        self.total_bigrams += other.total_bigrams;
        self
    }
}

/// Counts unigrams and within-sequence bigrams.
///
/// Shards are counted in parallel and merged by summation, so the result does
/// not depend on the thread count.
pub fn count_statistics<S>(corpus: &[S]) -> Result<PmiStatistics>
where
    S: AsRef<[TokenId]> + Sync,
{
    if corpus.is_empty() {
        return Err(Error::Validation("cannot count statistics over an empty corpus".into()));
    }
    let stats = corpus
        .par_chunks(256)
        .map(|shard| {
            let mut s = PmiStatistics::default();
            for seq in shard {
                s.add_sequence(seq.as_ref());
            }
            s
        })
        .reduce(PmiStatistics::default, PmiStatistics::merge);
    if stats.total_tokens == 0 {
        return Err(Error::Validation("corpus contains no tokens".into()));
    }
    Ok(stats)
}

/// `ln( p(x1 x2) / (p(x1) p(x2)) )` with bigram and unigram probabilities
/// normalized by their own totals. An unseen bigram scores `-inf`.
pub fn pmi(stats: &PmiStatistics, x1: TokenId, x2: TokenId) -> Result<f64> {
    let c1 = *stats
        .unigram
        .get(&x1)
        .ok_or(Error::UnknownId { kind: "token", id: x1 })?;
    let c2 = *stats
        .unigram
        .get(&x2)
        .ok_or(Error::UnknownId { kind: "token", id: x2 })?;
    let c12 = stats.bigram.get(&(x1, x2)).copied().unwrap_or(0);
    if c12 == 0 || stats.total_bigrams == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let n = stats.total_tokens as f64;
    let p12 = c12 as f64 / stats.total_bigrams as f64;
    let p1 = c1 as f64 / n;
    let p2 = c2 as f64 / n;
    Ok((p12 / (p1 * p2)).ln())
}
