//! Turns sequences into model inputs: tokenize, truncate, match G-grams.

use crate::corpus::Sequence;
use crate::error::Result;
use crate::ggram::{build_vocab, cap_matches, count_statistics, ExtractParams, GGramMatchSet, GGramMatcher, GGramVocab};
use crate::model::ModelInput;
use crate::tokenizer::{train_bpe, TokenId, TokenVocab};

/// Token ids (CLS and SEP included) and the G-gram matches over them.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub token_ids: Vec<TokenId>,
    pub matches: GGramMatchSet,
}

impl Example {
    pub fn to_input(&self) -> ModelInput {
        ModelInput::new(self.token_ids.clone(), &self.matches)
    }
}

/// Token vocabulary, G-gram vocabulary and matcher, with the model's length
/// limits.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub tokens: TokenVocab,
    pub ggrams: GGramVocab,
    matcher: GGramMatcher,
    pub max_len: usize,
    pub max_matches: usize,
}

impl Featurizer {
    pub fn new(tokens: TokenVocab, ggrams: GGramVocab, max_len: usize, max_matches: usize) -> Self {
        assert!(max_len >= 3, "max_len must leave room for CLS and SEP");
        let matcher = GGramMatcher::new(&ggrams);
        Featurizer {
            tokens,
            ggrams,
            matcher,
            max_len,
            max_matches,
        }
    }

    pub fn matcher(&self) -> &GGramMatcher {
        &self.matcher
    }

    /// Uncapped matches over specials-free token ids.
    pub fn find_matches(&self, inner: &[TokenId]) -> GGramMatchSet {
        self.matcher.find_all(inner)
    }

    /// Wraps specials-free ids (at most `max_len - 2`) in CLS/SEP and
    /// attaches capped matches.
    pub fn example_from_inner(&self, inner: &[TokenId]) -> Example {
        let inner = &inner[..inner.len().min(self.max_len - 2)];
        let sp = self.tokens.specials();
        let mut token_ids = Vec::with_capacity(inner.len() + 2);
        token_ids.push(sp.cls);
        token_ids.extend_from_slice(inner);
        token_ids.push(sp.sep);
        let found = self.matcher.find_all(inner);
        let matches = cap_matches(&found, self.max_matches).shifted(1, token_ids.len());
        Example { token_ids, matches }
    }

    /// One example per sequence; tokens past `max_len - 2` are dropped.
    pub fn featurize(&self, seq: &Sequence) -> Example {
        let toks = self.tokens.encode(seq, false);
        self.example_from_inner(&toks.ids)
    }

    /// Splits a long sequence into consecutive token windows that each fit
    /// `max_len` once CLS and SEP are added.
    pub fn featurize_chunked(&self, seq: &Sequence) -> Vec<Example> {
        let toks = self.tokens.encode(seq, false);
        toks.ids
            .chunks(self.max_len - 2)
            .map(|c| self.example_from_inner(c))
            .collect()
    }
}

/// Trains a tokenizer on `corpus`, mines G-grams from the same corpus and
/// wraps both in a [`Featurizer`].
pub fn fit_featurizer(
    corpus: &[Sequence],
    bpe_vocab_size: usize,
    params: &ExtractParams,
    max_len: usize,
    max_matches: usize,
) -> Result<Featurizer> {
    let tokens = train_bpe(corpus.iter(), bpe_vocab_size)?;
    let ids: Vec<Vec<TokenId>> = corpus.iter().map(|s| tokens.encode(s, false).ids).collect();
    let stats = count_statistics(&ids)?;
    let mut ggrams = build_vocab(&ids, &stats, params, &tokens.tokens_containing('N'))?;
    ggrams.annotate(&tokens)?;
    Ok(Featurizer::new(tokens, ggrams, max_len, max_matches))
}
