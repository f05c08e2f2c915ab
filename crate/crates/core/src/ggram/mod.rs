//! G-gram mining and matching.
//!
//! A G-gram is a run of 2..=5 adjacent tokens whose every internal boundary
//! has a PMI at or above a threshold. Mining happens once over a tokenized
//! corpus ([`count_statistics`], [`build_vocab`]); matching runs per input
//! ([`GGramMatcher`]) and produces the token/G-gram incidence matrix that the
//! model fuses on.

mod automaton;
mod extract;
mod matrix;
mod report;
mod stats;

pub use automaton::{cap_matches, GGramMatcher};
pub use extract::{build_vocab, segment_by_scores, segment_ggrams, ExtractParams, GGramEntry, GGramVocab};
pub use matrix::MatchingMatrix;
pub use report::{ggram_stats, stats_tsv, GGramStatsRow, STATS_HEADER};
pub use stats::{count_statistics, pmi, PmiStatistics};

use serde::{Deserialize, Serialize};

/// One occurrence of a vocabulary G-gram: tokens `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Match {
    pub ggram: u32,
    pub start: usize,
    pub end: usize,
}

impl Match {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.start <= pos && pos < self.end
    }
}

/// All G-gram occurrences in one token sequence of length `source_len`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GGramMatchSet {
    pub matches: Vec<Match>,
    pub source_len: usize,
}

impl GGramMatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn ggram_ids(&self) -> Vec<u32> {
        self.matches.iter().map(|m| m.ggram).collect()
    }

    /// Shifts every span by `offset` tokens (e.g. past a leading CLS).
    pub fn shifted(&self, offset: usize, new_len: usize) -> GGramMatchSet {
        GGramMatchSet {
            matches: self
                .matches
                .iter()
                .map(|m| Match {
                    ggram: m.ggram,
                    start: m.start + offset,
                    end: m.end + offset,
                })
                .collect(),
            source_len: new_len,
        }
    }
}
