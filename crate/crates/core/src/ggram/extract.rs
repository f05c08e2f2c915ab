use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::{pmi, PmiStatistics};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, TokenVocab};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractParams {
    pub theta: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub min_freq: u64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            theta: 2.0,
            min_len: 2,
            max_len: 5,
            min_freq: 2,
        }
    }
}

impl ExtractParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_len < 2 {
            return Err(Error::Config(format!(
                "min_len must be at least 2, got {}",
                self.min_len
            )));
        }
        if self.max_len < self.min_len {
            return Err(Error::Config(format!(
                "max_len {} is below min_len {}",
                self.max_len, self.min_len
            )));
        }
        if self.theta.is_nan() {
            return Err(Error::Config("theta is NaN".into()));
        }
        Ok(())
    }
}

/// Splits a token run at every boundary whose score is below `theta`.
///
/// `scores[i]` belongs to the boundary between tokens `i` and `i + 1`.
/// Returns the maximal undelimited runs of at least two tokens.
pub fn segment_by_scores(scores: &[f64], theta: f64) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < theta {
            if i + 1 - start >= 2 {
                spans.push(start..i + 1);
            }
            start = i + 1;
        }
    }
    let n = scores.len() + 1;
    if n - start >= 2 {
        spans.push(start..n);
    }
    spans
}

/// Candidate G-gram spans of `tokens` under PMI threshold `theta`.
pub fn segment_ggrams(
    tokens: &[TokenId],
    stats: &PmiStatistics,
    theta: f64,
) -> Result<Vec<Range<usize>>> {
    if tokens.len() < 2 {
        return Ok(Vec::new());
    }
    let scores = tokens
        .windows(2)
        .map(|w| pmi(stats, w[0], w[1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(segment_by_scores(&scores, theta))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GGramEntry {
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub freq: u64,
}

/// The G-gram vocabulary. Ids are positions in `entries`.
#[derive(Debug, Clone, PartialEq)]
pub struct GGramVocab {
    entries: Vec<GGramEntry>,
    index: HashMap<Vec<TokenId>, u32>,
    pub min_len: usize,
    pub max_len: usize,
    pub theta: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct EntryLine {
    tokens: Vec<TokenId>,
    text: String,
    freq: u64,
    id: u32,
}

#[derive(Serialize, Deserialize)]
struct VocabMeta {
    theta: Option<f64>,
    min_len: usize,
    max_len: usize,
    size: usize,
}

impl GGramVocab {
    pub fn new(entries: Vec<GGramEntry>, min_len: usize, max_len: usize, theta: Option<f64>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.tokens.len() < min_len || e.tokens.len() > max_len {
                return Err(Error::Validation(format!(
                    "G-gram {i} has length {} outside [{min_len}, {max_len}]",
                    e.tokens.len()
                )));
            }
            if index.insert(e.tokens.clone(), i as u32).is_some() {
                return Err(Error::Validation(format!("duplicate G-gram {:?}", e.tokens)));
            }
        }
        Ok(GGramVocab {
            entries,
            index,
            min_len,
            max_len,
            theta,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[GGramEntry] {
        &self.entries
    }

    pub fn get(&self, id: u32) -> Option<&GGramEntry> {
        self.entries.get(id as usize)
    }

    pub fn id_of(&self, tokens: &[TokenId]) -> Option<u32> {
        self.index.get(tokens).copied()
    }

    /// Fills each entry's `text` from the token vocabulary.
    pub fn annotate(&mut self, tok: &TokenVocab) -> Result<()> {
        for e in &mut self.entries {
            e.text = tok.decode(&e.tokens)?;
        }
        Ok(())
    }

    /// Writes one JSON object per line, plus a `<path>.meta.json` sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (i, e) in self.entries.iter().enumerate() {
            let line = serde_json::to_string(&EntryLine {
                tokens: e.tokens.clone(),
                text: e.text.clone(),
                freq: e.freq,
                id: i as u32,
            })?;
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let meta_path = meta_path(path);
        let meta = VocabMeta {
            theta: self.theta,
            min_len: self.min_len,
            max_len: self.max_len,
            size: self.len(),
        };
        std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)
            .map_err(|e| Error::io(&meta_path, e))
    }

    /// Reads a JSON-lines vocab. Length bounds come from the sidecar when it
    /// exists, otherwise from the entries themselves.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: EntryLine = serde_json::from_str(&line).map_err(|err| Error::Parse {
                line: i + 1,
                msg: err.to_string(),
            })?;
            if e.id as usize != entries.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected id {}, found {}", entries.len(), e.id),
                });
            }
            entries.push(GGramEntry {
                tokens: e.tokens,
                text: e.text,
                freq: e.freq,
            });
        }
        let meta_path = meta_path(path);
        let (min_len, max_len, theta) = match std::fs::read_to_string(&meta_path) {
            Ok(text) => {
                let m: VocabMeta = serde_json::from_str(&text)?;
                (m.min_len, m.max_len, m.theta)
            }
            Err(_) => (
                entries.iter().map(|e| e.tokens.len()).min().unwrap_or(2),
                entries.iter().map(|e| e.tokens.len()).max().unwrap_or(5),
                None,
            ),
        };
        GGramVocab::new(entries, min_len, max_len, theta)
    }
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

/// Mines the G-gram vocabulary.
///
/// Every sequence is segmented at sub-threshold PMI boundaries. Runs within
/// `[min_len, max_len]` count as one occurrence; longer runs contribute every
/// `max_len` window. Tuples containing an `excluded` token (e.g. any token
/// with an `N`) are dropped, as are tuples seen fewer than `min_freq` times.
/// Ids are assigned by descending frequency, then ascending token tuple.
pub fn build_vocab<S>(
    corpus: &[S],
    stats: &PmiStatistics,
    params: &ExtractParams,
    excluded: &HashSet<TokenId>,
) -> Result<GGramVocab>
where
    S: AsRef<[TokenId]>,
{
    params.validate()?;
    let mut counts: HashMap<&[TokenId], u64> = HashMap::new();
    for seq in corpus {
        let tokens = seq.as_ref();
        for span in segment_ggrams(tokens, stats, params.theta)? {
            let run = &tokens[span];
            if run.len() < params.min_len {
                continue;
            }
            let windows: Box<dyn Iterator<Item = &[TokenId]>> = if run.len() > params.max_len {
                Box::new(run.windows(params.max_len))
            } else {
                Box::new(std::iter::once(run))
            };
            for w in windows {
                if w.iter().any(|t| excluded.contains(t)) {
                    continue;
                }
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    let mut kept: Vec<(&[TokenId], u64)> = counts
        .into_iter()
        .filter(|(_, f)| *f >= params.min_freq)
        .collect();
    kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let entries = kept
        .into_iter()
        .map(|(tokens, freq)| GGramEntry {
            tokens: tokens.to_vec(),
            text: String::new(),
            freq,
        })
        .collect();
    GGramVocab::new(entries, params.min_len, params.max_len, Some(params.theta))
}
