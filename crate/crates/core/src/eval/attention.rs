use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Sequence;
use crate::error::Result;
use crate::featurize::Featurizer;
use crate::model::{ggram_encoder_forward, ModelState};

/// One matched G-gram and the attention it receives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionEntry {
    pub ggram: u32,
    pub text: String,
    /// Token span within the example, specials included.
    pub start: usize,
    pub end: usize,
    pub weight: f32,
    pub motif: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleAttention {
    pub id: String,
    /// Per G-gram encoder layer, sorted by weight descending.
    pub layers: Vec<Vec<AttentionEntry>>,
    /// Weights averaged over layers, sorted descending.
    pub mean: Vec<AttentionEntry>,
    pub motif_in_top_k: bool,
}

impl ExampleAttention {
    pub fn top(&self, k: usize) -> &[AttentionEntry] {
        &self.mean[..k.min(self.mean.len())]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub motif: Option<String>,
    pub top_k: usize,
    pub examples: Vec<ExampleAttention>,
    /// Ids of sequences skipped because nothing matched.
    pub skipped: Vec<String>,
}

impl AttentionReport {
    /// Fraction of reported examples with a motif G-gram in the top k.
    pub fn motif_hit_rate(&self) -> f64 {
        if self.examples.is_empty() {
            return 0.0;
        }
        self.examples.iter().filter(|e| e.motif_in_top_k).count() as f64 / self.examples.len() as f64
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("Example\tLayer\tRank\tG-gram\tStart\tEnd\tWeight\tMotif\n");
        for e in &self.examples {
            let layers = e.layers.iter().enumerate().map(|(l, v)| ((l + 1).to_string(), v));
            for (layer, entries) in layers.chain(std::iter::once(("mean".to_string(), &e.mean))) {
                for (rank, a) in entries.iter().enumerate() {
                    writeln!(
                        out,
                        "{}\t{layer}\t{}\t{}\t{}\t{}\t{:.6}\t{}",
                        e.id,
                        rank + 1,
                        a.text,
                        a.start,
                        a.end,
                        a.weight,
                        if a.motif { "*" } else { "" }
                    )
                    .expect("write to string");
                }
            }
        }
        out
    }
}

fn sorted(mut v: Vec<AttentionEntry>) -> Vec<AttentionEntry> {
    // Stable: ties keep match order.
    v.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    v
}

/// Attention of one sequence's G-grams, or `None` when nothing matched.
///
/// A G-gram's weight in a layer is the attention it receives, averaged over
/// heads and over the querying G-grams.
pub fn example_attention(
    state: &ModelState,
    featurizer: &Featurizer,
    seq: &Sequence,
    motif: Option<&str>,
    top_k: usize,
) -> Result<Option<ExampleAttention>> {
    let ex = featurizer.featurize(seq);
    if ex.matches.is_empty() {
        return Ok(None);
    }
    let ids = ex.matches.ggram_ids();
    let enc = ggram_encoder_forward(state, &ids)?;
    let t = ids.len();
    let entry = |j: usize, weight: f32| {
        let m = ex.matches.matches[j];
        let text = featurizer
            .ggrams
            .get(m.ggram)
            .map(|e| e.text.clone())
            .unwrap_or_default();
        AttentionEntry {
            ggram: m.ggram,
            motif: motif.is_some_and(|p| !p.is_empty() && text.contains(p)),
            text,
            start: m.start,
            end: m.end,
            weight,
        }
    };
    let mut per_layer = Vec::with_capacity(enc.attention.len());
    let mut mean = vec![0.0f64; t];
    for heads in &enc.attention {
        let mut w = vec![0.0f64; t];
        for a in heads {
            for q in 0..a.rows() {
                for (slot, &x) in w.iter_mut().zip(a.row(q)) {
                    *slot += x as f64;
                }
            }
        }
        let denom = (heads.len() * t) as f64;
        for (m, x) in mean.iter_mut().zip(w.iter_mut()) {
            *x /= denom;
            *m += *x;
        }
        per_layer.push(sorted((0..t).map(|j| entry(j, w[j] as f32)).collect()));
    }
    let layers = enc.attention.len().max(1) as f64;
    let mean = sorted((0..t).map(|j| entry(j, (mean[j] / layers) as f32)).collect());
    let motif_in_top_k = mean.iter().take(top_k).any(|e| e.motif);
    Ok(Some(ExampleAttention {
        id: seq.id.clone(),
        layers: per_layer,
        mean,
        motif_in_top_k,
    }))
}

/// Per-example attention tables for `sample`. Sequences with no matches
/// are listed in `skipped` and a notice is logged.
pub fn attention_report(
    state: &ModelState,
    featurizer: &Featurizer,
    sample: &[Sequence],
    motif: Option<&str>,
    top_k: usize,
) -> Result<AttentionReport> {
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    for seq in sample {
        match example_attention(state, featurizer, seq, motif, top_k)? {
            Some(e) => examples.push(e),
            None => skipped.push(seq.id.clone()),
        }
    }
    if !skipped.is_empty() {
        log::info!("{} of {} sequences have no G-gram matches", skipped.len(), sample.len());
    }
    Ok(AttentionReport {
        motif: motif.map(str::to_string),
        top_k,
        examples,
        skipped,
    })
}
