//! Byte-pair encoding over nucleotide text.
//!
//! Ids are laid out as: the five specials, then the single-base alphabet seen
//! during training (sorted), then every merged token in the order it was
//! learned. The JSON vocab file only stores the alphabet and the ordered merge
//! list, so ids are reproducible from it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Sequence;
use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];
const VOCAB_VERSION: u32 = 1;

pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialIds {
    pub pad: TokenId,
    pub unk: TokenId,
    pub cls: TokenId,
    pub sep: TokenId,
    pub mask: TokenId,
}

impl SpecialIds {
    pub fn contains(&self, id: TokenId) -> bool {
        id == self.pad || id == self.unk || id == self.cls || id == self.sep || id == self.mask
    }
}

/// A trained BPE vocabulary. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenVocab {
    alphabet: Vec<char>,
    merges: Vec<(String, String)>,
    tokens: Vec<String>,
    token_to_id: HashMap<String, TokenId>,
    // (left, right) -> (rank, merged id)
    merge_ranks: HashMap<(TokenId, TokenId), (usize, TokenId)>,
    specials: SpecialIds,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    alphabet: Vec<String>,
    merges: Vec<[String; 2]>,
    specials: BTreeMap<String, SpecialEntry>,
}

#[derive(Serialize, Deserialize)]
struct SpecialEntry {
    token: String,
    id: TokenId,
}

impl TokenVocab {
    /// Builds a vocabulary from an alphabet and an ordered merge list.
    pub fn from_merges(alphabet: &[char], merges: &[(String, String)]) -> Result<Self> {
        let mut alphabet = alphabet.to_vec();
        alphabet.sort_unstable();
        alphabet.dedup();
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(alphabet.iter().map(|c| c.to_string()));
        let mut token_to_id: HashMap<String, TokenId> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        let mut merge_ranks = HashMap::new();
        for (rank, (l, r)) in merges.iter().enumerate() {
            let lookup = |t: &String| {
                token_to_id.get(t).copied().ok_or_else(|| {
                    Error::Validation(format!("merge {rank} uses unknown token {t:?}"))
                })
            };
            let (li, ri) = (lookup(l)?, lookup(r)?);
            let merged = format!("{l}{r}");
            let id = match token_to_id.get(&merged) {
                Some(&id) => id,
                None => {
                    let id = tokens.len() as TokenId;
                    tokens.push(merged.clone());
                    token_to_id.insert(merged, id);
                    id
                }
            };
            merge_ranks.entry((li, ri)).or_insert((rank, id));
        }
        Ok(TokenVocab {
            alphabet,
            merges: merges.to_vec(),
            tokens,
            token_to_id,
            merge_ranks,
            specials: SpecialIds {
                pad: 0,
                unk: 1,
                cls: 2,
                sep: 3,
                mask: 4,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn specials(&self) -> SpecialIds {
        self.specials
    }

    /// Number of special ids; they occupy `[0, num_specials)`.
    pub fn num_specials(&self) -> usize {
        SPECIALS.len()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        self.specials.contains(id)
    }

    /// Ids of non-special tokens whose text contains `base`.
    pub fn tokens_containing(&self, base: char) -> HashSet<TokenId> {
        self.tokens
            .iter()
            .enumerate()
            .skip(SPECIALS.len())
            .filter(|(_, t)| t.contains(base))
            .map(|(i, _)| i as TokenId)
            .collect()
    }

    /// Splits `seq` into tokens by applying merges in training order.
    pub fn encode(&self, seq: &Sequence, add_specials: bool) -> TokenSeq {
        let bases = seq.bases().as_bytes();
        let mut ids: Vec<TokenId> = bases
            .iter()
            .map(|&b| self.id_of_base(b as char))
            .collect();
        let mut offsets: Vec<(usize, usize)> = (0..bases.len()).map(|i| (i, i + 1)).collect();

        loop {
            let best = ids
                .windows(2)
                .filter_map(|w| self.merge_ranks.get(&(w[0], w[1])))
                .min_by_key(|(rank, _)| *rank)
                .copied();
            let Some((rank, merged)) = best else { break };
            let (l, r) = (&self.merges[rank].0, &self.merges[rank].1);
            let (li, ri) = (self.token_to_id[l], self.token_to_id[r]);
            let mut out_ids = Vec::with_capacity(ids.len());
            let mut out_off = Vec::with_capacity(ids.len());
            let mut i = 0;
            while i < ids.len() {
                if i + 1 < ids.len() && ids[i] == li && ids[i + 1] == ri {
                    out_ids.push(merged);
                    out_off.push((offsets[i].0, offsets[i + 1].1));
                    i += 2;
                } else {
                    out_ids.push(ids[i]);
                    out_off.push(offsets[i]);
                    i += 1;
                }
            }
            ids = out_ids;
            offsets = out_off;
        }

        if add_specials {
            let end = bases.len();
            ids.insert(0, self.specials.cls);
            offsets.insert(0, (0, 0));
            ids.push(self.specials.sep);
            offsets.push((end, end));
        }
        TokenSeq { ids, offsets }
    }

    fn id_of_base(&self, base: char) -> TokenId {
        let mut buf = [0u8; 4];
        self.token_to_id
            .get(base.encode_utf8(&mut buf) as &str)
            .copied()
            .unwrap_or(self.specials.unk)
    }

    /// Concatenates token texts, skipping specials.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id).ok_or(Error::UnknownId { kind: "token", id })?;
            if !self.is_special(id) {
                out.push_str(tok);
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let specials = [
            ("pad", self.specials.pad),
            ("unk", self.specials.unk),
            ("cls", self.specials.cls),
            ("sep", self.specials.sep),
            ("mask", self.specials.mask),
        ]
        .into_iter()
        .map(|(name, id)| {
            (
                name.to_string(),
                SpecialEntry {
                    token: self.tokens[id as usize].clone(),
                    id,
                },
            )
        })
        .collect();
        let file = VocabFile {
            version: VOCAB_VERSION,
            alphabet: self.alphabet.iter().map(|c| c.to_string()).collect(),
            merges: self
                .merges
                .iter()
                .map(|(l, r)| [l.clone(), r.clone()])
                .collect(),
            specials,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(text)?;
        if file.version != VOCAB_VERSION {
            return Err(Error::Validation(format!(
                "unsupported vocab version {}",
                file.version
            )));
        }
        let mut alphabet = Vec::new();
        for a in &file.alphabet {
            let mut chars = a.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => alphabet.push(c),
                _ => {
                    return Err(Error::Validation(format!(
                        "alphabet entry {a:?} is not a single character"
                    )))
                }
            }
        }
        let merges: Vec<(String, String)> =
            file.merges.into_iter().map(|[l, r]| (l, r)).collect();
        let vocab = TokenVocab::from_merges(&alphabet, &merges)?;
        for (name, entry) in &file.specials {
            if vocab.id(&entry.token) != Some(entry.id) {
                return Err(Error::Validation(format!(
                    "special {name} ({:?}) does not have id {}",
                    entry.token, entry.id
                )));
            }
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Token ids with the base span each one covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<TokenId>,
    /// `(base_start, base_end)` per token; specials cover an empty span.
    pub offsets: Vec<(usize, usize)>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn texts<'v>(&self, vocab: &'v TokenVocab) -> Vec<&'v str> {
        self.ids
            .iter()
            .map(|&id| vocab.token(id).unwrap_or(UNK))
            .collect()
    }
}

/// Learns merges greedily by pair frequency until `vocab_size` tokens exist
/// or no pair occurs at least twice. Ties go to the lexicographically
/// smallest merged text.
pub fn train_bpe<'a, I>(corpus: I, vocab_size: usize) -> Result<TokenVocab>
where
    I: IntoIterator<Item = &'a Sequence>,
{
    let mut word_counts: HashMap<&str, i64> = HashMap::new();
    for seq in corpus {
        *word_counts.entry(seq.bases()).or_default() += 1;
    }
    if word_counts.is_empty() {
        return Err(Error::Validation("cannot train BPE on an empty corpus".into()));
    }
    let mut alphabet: Vec<char> = word_counts
        .keys()
        .flat_map(|w| w.chars())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    alphabet.sort_unstable();
    let floor = SPECIALS.len() + alphabet.len();
    if vocab_size <= floor {
        return Err(Error::Config(format!(
            "vocab_size {vocab_size} must exceed specials + alphabet ({floor})"
        )));
    }

    let base = TokenVocab::from_merges(&alphabet, &[])?;
    let mut texts: Vec<String> = base.tokens.clone();
    let mut text_to_id = base.token_to_id.clone();

    // Sorted for a reproducible word order.
    let mut words: Vec<(&str, i64)> = word_counts.into_iter().collect();
    words.sort_unstable();
    let counts: Vec<i64> = words.iter().map(|(_, c)| *c).collect();
    let mut symbols: Vec<Vec<TokenId>> = words
        .iter()
        .map(|(w, _)| w.chars().map(|c| base.id_of_base(c)).collect())
        .collect();

    let mut pair_counts: HashMap<(TokenId, TokenId), i64> = HashMap::new();
    let mut pair_words: HashMap<(TokenId, TokenId), HashSet<usize>> = HashMap::new();
    for (wi, syms) in symbols.iter().enumerate() {
        for w in syms.windows(2) {
            *pair_counts.entry((w[0], w[1])).or_default() += counts[wi];
            pair_words.entry((w[0], w[1])).or_default().insert(wi);
        }
    }

    let mut merges: Vec<(String, String)> = Vec::new();
    let mut vocab_len = texts.len();
    while vocab_len < vocab_size {
        let mut best: Option<(i64, String, (TokenId, TokenId))> = None;
        for (&pair, &count) in &pair_counts {
            if count < 2 || best.as_ref().is_some_and(|(bc, _, _)| count < *bc) {
                continue;
            }
            let merged = concat(&texts, pair);
            let better = match &best {
                None => true,
                Some((bc, bt, bp)) => count > *bc || (&merged, pair) < (bt, *bp),
            };
            if better {
                best = Some((count, merged, pair));
            }
        }
        let Some((_, merged, pair)) = best else { break };
        let new_id = match text_to_id.get(&merged) {
            Some(&id) => id,
            None => {
                let id = texts.len() as TokenId;
                texts.push(merged.clone());
                text_to_id.insert(merged, id);
                vocab_len += 1;
                id
            }
        };
        merges.push((
            texts[pair.0 as usize].clone(),
            texts[pair.1 as usize].clone(),
        ));

        let mut affected: Vec<usize> = pair_words
            .remove(&pair)
            .unwrap_or_default()
            .into_iter()
            .collect();
        affected.sort_unstable();
        for wi in affected {
            let c = counts[wi];
            let syms = &mut symbols[wi];
            for w in syms.windows(2) {
                let p = (w[0], w[1]);
                if let Some(v) = pair_counts.get_mut(&p) {
                    *v -= c;
                }
                if let Some(set) = pair_words.get_mut(&p) {
                    set.remove(&wi);
                }
            }
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && (syms[i], syms[i + 1]) == pair {
                    out.push(new_id);
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            *syms = out;
            for w in syms.windows(2) {
                let p = (w[0], w[1]);
                *pair_counts.entry(p).or_default() += c;
                pair_words.entry(p).or_default().insert(wi);
            }
        }
        pair_counts.retain(|_, v| *v > 0);
    }

    TokenVocab::from_merges(&alphabet, &merges)
}

fn concat(texts: &[String], pair: (TokenId, TokenId)) -> String {
    let mut s = String::with_capacity(texts[pair.0 as usize].len() + texts[pair.1 as usize].len());
    s.push_str(&texts[pair.0 as usize]);
    s.push_str(&texts[pair.1 as usize]);
    s
}
