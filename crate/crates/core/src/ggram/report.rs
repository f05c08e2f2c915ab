use std::collections::HashSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{GGramMatcher, GGramVocab};
use crate::corpus::{LabeledDataset, Split};
use crate::tokenizer::TokenVocab;

pub const STATS_HEADER: [&str; 7] = [
    "Species",
    "Task",
    "Dataset",
    "Split",
    "Total G-gram",
    "Distinct G-gram",
    "Avg. G-gram",
];

/// Per-split G-gram counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GGramStatsRow {
    pub split: Split,
    pub records: usize,
    pub total: u64,
    pub distinct: usize,
    /// `total / records`, rounded to one decimal.
    pub avg: f64,
}

/// Counts matches over every record of each dataset, tokenized without
/// specials and without any cap on the match count.
pub fn ggram_stats(
    datasets: &[&LabeledDataset],
    vocab: &GGramVocab,
    tokvocab: &TokenVocab,
) -> Vec<GGramStatsRow> {
    let matcher = GGramMatcher::new(vocab);
    datasets
        .iter()
        .map(|ds| {
            let mut total = 0u64;
            let mut distinct = HashSet::new();
            for (seq, _) in &ds.records {
                let toks = tokvocab.encode(seq, false);
                let set = matcher.find_all(&toks.ids);
                total += set.len() as u64;
                distinct.extend(set.matches.iter().map(|m| m.ggram));
            }
            let avg = if ds.is_empty() {
                0.0
            } else {
                (total as f64 / ds.len() as f64 * 10.0).round() / 10.0
            };
            GGramStatsRow {
                split: ds.split,
                records: ds.len(),
                total,
                distinct: distinct.len(),
                avg,
            }
        })
        .collect()
}

/// Renders rows as a TSV table with the [`STATS_HEADER`] columns.
pub fn stats_tsv(rows: &[GGramStatsRow], species: &str, task: &str, dataset: &str) -> String {
    let mut out = STATS_HEADER.join("\t");
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{species}\t{task}\t{dataset}\t{}\t{}\t{}\t{:.1}",
            r.split, r.total, r.distinct, r.avg
        )
        .expect("write to string");
    }
    out
}
