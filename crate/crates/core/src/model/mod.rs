//! The dual encoder.
//!
//! A position-free G-gram encoder runs over the matched G-grams of an input.
//! Its layer-`l` output is added, through the matching matrix, onto the
//! layer-`l` output of the token encoder for every `l` up to the G-gram
//! encoder depth; the fused states feed the next token layer.

mod forward;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ggram::{GGramMatchSet, MatchingMatrix};
use crate::nn::{checkpoint, AdamConfig, LayerParams, ParamStore, Tensor};
use crate::tokenizer::TokenId;

pub use forward::{
    classify, class_logits_var, e4bu_forward, forward, forward_on_tape, ggram_attention_summary,
    ggram_encoder_forward, mlm_logits, mlm_logits_var, plain_encoder_forward, ForwardTrace,
    GGramEncoding, TapeForward,
};

const EMBED_STD: f32 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub token_layers: usize,
    pub ggram_layers: usize,
    pub heads: usize,
    pub token_vocab_size: usize,
    pub ggram_vocab_size: usize,
    /// Longest token sequence, specials included.
    pub max_len: usize,
    /// Most G-gram matches fed to the G-gram encoder per input.
    pub max_matches: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            token_layers: 4,
            ggram_layers: 2,
            heads: 4,
            token_vocab_size: 0,
            ggram_vocab_size: 0,
            max_len: 128,
            max_matches: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return bad(format!(
                "heads ({}) must divide hidden ({})",
                self.heads, self.hidden
            ));
        }
        if self.token_layers == 0 {
            return bad("token_layers must be positive".into());
        }
        if self.ggram_layers > self.token_layers {
            return bad(format!(
                "ggram_layers ({}) must not exceed token_layers ({})",
                self.ggram_layers, self.token_layers
            ));
        }
        if self.max_len < 3 || self.max_matches == 0 {
            return bad("max_len must be at least 3 and max_matches positive".into());
        }
        if self.token_vocab_size == 0 {
            return bad("token_vocab_size must be positive".into());
        }
        Ok(())
    }

    /// Every parameter name with its expected shape.
    pub fn expected_shapes(&self, num_classes: Option<usize>) -> Vec<(String, Vec<usize>)> {
        let h = self.hidden;
        let mut out = vec![
            ("tok.embed".to_string(), vec![self.token_vocab_size, h]),
            ("tok.pos".to_string(), vec![self.max_len, h]),
            ("tok.ln.g".to_string(), vec![h]),
            ("tok.ln.b".to_string(), vec![h]),
            ("gg.embed".to_string(), vec![self.ggram_vocab_size, h]),
            ("mlm.w".to_string(), vec![h, self.token_vocab_size]),
            ("mlm.b".to_string(), vec![self.token_vocab_size]),
        ];
        let f = crate::nn::FFN_MULT * h;
        let layer_shapes = [
            vec![h, h], vec![h], vec![h, h], vec![h], vec![h, h], vec![h], vec![h, h], vec![h],
            vec![h], vec![h], vec![h, f], vec![f], vec![f, h], vec![h], vec![h], vec![h],
        ];
        for (prefix, n) in [("gg", self.ggram_layers), ("tok", self.token_layers)] {
            for l in 0..n {
                for (name, shape) in crate::nn::LAYER_PARAM_NAMES.iter().zip(&layer_shapes) {
                    out.push((format!("{prefix}.layer.{l}.{name}"), shape.clone()));
                }
            }
        }
        if let Some(k) = num_classes {
            out.push(("cls.w".to_string(), vec![h, k]));
            out.push(("cls.b".to_string(), vec![k]));
        }
        out
    }
}

pub(crate) fn layer_prefix(encoder: &str, l: usize) -> String {
    format!("{encoder}.layer.{l}")
}

/// Model input: token ids (specials included), matched G-gram ids and the
/// matching matrix between them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub token_ids: Vec<TokenId>,
    pub ggram_ids: Vec<u32>,
    pub matrix: MatchingMatrix,
}

impl ModelInput {
    pub fn new(token_ids: Vec<TokenId>, matches: &GGramMatchSet) -> Self {
        let mut set = matches.clone();
        set.source_len = token_ids.len();
        ModelInput {
            ggram_ids: set.ggram_ids(),
            matrix: MatchingMatrix::from_matches(&set),
            token_ids,
        }
    }

    /// Input with no G-gram matches.
    pub fn tokens_only(token_ids: Vec<TokenId>) -> Self {
        let n = token_ids.len();
        ModelInput {
            token_ids,
            ggram_ids: Vec::new(),
            matrix: MatchingMatrix::empty(n),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format: String,
    config: ModelConfig,
    num_classes: Option<usize>,
    optimizer: AdamConfig,
}

/// All parameters of both encoders and the heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: ParamStore,
    num_classes: Option<usize>,
}

impl ModelState {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden;
        let mut params = ParamStore::new();
        params.insert("tok.embed", Tensor::randn(&[config.token_vocab_size, h], EMBED_STD, &mut rng));
        params.insert("tok.pos", Tensor::randn(&[config.max_len, h], EMBED_STD, &mut rng));
        params.insert("tok.ln.g", Tensor::full(&[h], 1.0));
        params.insert("tok.ln.b", Tensor::zeros(&[h]));
        params.insert("gg.embed", Tensor::randn(&[config.ggram_vocab_size, h], EMBED_STD, &mut rng));
        for l in 0..config.ggram_layers {
            LayerParams::init(h, config.heads, &mut rng)?.store_into(&mut params, &layer_prefix("gg", l));
        }
        for l in 0..config.token_layers {
            LayerParams::init(h, config.heads, &mut rng)?.store_into(&mut params, &layer_prefix("tok", l));
        }
        params.insert("mlm.w", Tensor::randn(&[h, config.token_vocab_size], EMBED_STD, &mut rng));
        params.insert("mlm.b", Tensor::zeros(&[config.token_vocab_size]));
        Ok(ModelState {
            config,
            params,
            num_classes: None,
        })
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    /// Adds a fresh classification head over the CLS representation.
    pub fn init_classifier(&mut self, num_classes: usize, seed: u64) -> Result<()> {
        if num_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {num_classes}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC1A5_51F1);
        let h = self.config.hidden;
        self.params.insert("cls.w", Tensor::randn(&[h, num_classes], EMBED_STD, &mut rng));
        self.params.insert("cls.b", Tensor::zeros(&[num_classes]));
        self.num_classes = Some(num_classes);
        Ok(())
    }

    /// Checks every tensor against the config; the error lists each
    /// missing, unexpected or mis-shaped tensor by name.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let expected = self.config.expected_shapes(self.num_classes);
        let mut problems = Vec::new();
        for (name, shape) in &expected {
            match self.params.get(name) {
                None => problems.push(format!("missing {name} {shape:?}")),
                Some(t) if t.shape() != shape.as_slice() => problems.push(format!(
                    "{name}: expected {shape:?}, found {:?}",
                    t.shape()
                )),
                Some(_) => {}
            }
        }
        for (name, t) in self.params.iter() {
            if !expected.iter().any(|(n, _)| n == name) {
                problems.push(format!("unexpected {name} {:?}", t.shape()));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!(
                "parameter shapes do not match the manifest config:\n  {}",
                problems.join("\n  ")
            )))
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, optimizer: &AdamConfig) -> Result<()> {
        let manifest = serde_json::to_value(Manifest {
            format: "dnazen-model".into(),
            config: self.config,
            num_classes: self.num_classes,
            optimizer: *optimizer,
        })?;
        checkpoint::save(path, &manifest, &self.params)
    }

    pub fn to_bytes(&self, optimizer: &AdamConfig) -> Result<Vec<u8>> {
        let manifest = serde_json::to_value(Manifest {
            format: "dnazen-model".into(),
            config: self.config,
            num_classes: self.num_classes,
            optimizer: *optimizer,
        })?;
        checkpoint::encode(&manifest, &self.params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (manifest, params) = checkpoint::load(path)?;
        Self::from_parts(manifest, params)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (manifest, params) = checkpoint::decode(bytes)?;
        Self::from_parts(manifest, params)
    }

    fn from_parts(manifest: serde_json::Value, params: ParamStore) -> Result<Self> {
        let m: Manifest = serde_json::from_value(manifest)
            .map_err(|e| Error::Checkpoint(format!("bad manifest: {e}")))?;
        let state = ModelState {
            config: m.config,
            params,
            num_classes: m.num_classes,
        };
        state.validate()?;
        Ok(state)
    }
}
