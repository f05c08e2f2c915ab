//! Layered pipeline configuration.
//!
//! Values resolve in this order, later layers winning:
//! built-in defaults, the TOML file, `DNAZEN_<SECTION>_<KEY>` environment
//! variables, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use dnazen::corpus::SeqFormat;
use dnazen::ggram::ExtractParams;
use dnazen::model::ModelConfig;
use dnazen::training::{FinetuneConfig, TrainConfig};

use crate::Invalid;

pub const ENV_PREFIX: &str = "DNAZEN_";

/// Environment variables with the prefix that are not config keys.
const RESERVED_ENV: [&str; 2] = ["DNAZEN_CONFIG", "DNAZEN_LOG"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Raw sequences for tokenizer training, G-gram mining and pre-training.
    pub corpus: Option<PathBuf>,
    /// `fasta` or `lines`; inferred from the corpus extension when unset.
    pub format: Option<String>,
    /// Token vocabulary JSON.
    pub tokenizer: Option<PathBuf>,
    /// G-gram vocabulary JSON-lines.
    pub ggrams: Option<PathBuf>,
    /// Input checkpoint: a file, or a fine-tuning output directory for `eval`.
    pub checkpoint: Option<PathBuf>,
    /// Task directory holding train.csv, dev.csv and test.csv.
    pub task: Option<PathBuf>,
    /// Where pretrain and finetune write their outputs.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub vocab_size: usize,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        TokenizerSection { vocab_size: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Model initialization seed.
    pub seed: u64,
    /// Worker threads for training and evaluation; 0 uses every core.
    pub workers: usize,
    pub paths: Paths,
    pub tokenizer: TokenizerSection,
    pub extract: ExtractParams,
    /// Vocabulary sizes are taken from the vocab files and ignored here.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub finetune: FinetuneConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            workers: 0,
            paths: Paths::default(),
            tokenizer: TokenizerSection::default(),
            extract: ExtractParams::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            finetune: FinetuneConfig::default(),
        }
    }
}

const SECTIONS: [&str; 6] = ["paths", "tokenizer", "extract", "model", "train", "finetune"];

impl PipelineConfig {
    /// Reads `file` (if any) and applies environment overrides from `env`.
    pub fn resolve<I>(file: Option<&Path>, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Invalid(format!("cannot read config {}: {e}", path.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Invalid(format!("config {}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        let mut overrides: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && !RESERVED_ENV.contains(&k.as_str()))
            .collect();
        overrides.sort();
        for (key, raw) in overrides {
            apply_env(&mut table, &key, &raw)?;
        }
        let cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Invalid(format!("config: {}", e.message())))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("<unprintable config: {e}>"))
    }

    /// Sequence format for `path`: the configured one, else by extension.
    pub fn format_for(&self, path: &Path) -> Result<SeqFormat> {
        if let Some(f) = &self.paths.format {
            return Ok(f.parse()?);
        }
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        Ok(match ext.to_ascii_lowercase().as_str() {
            "fa" | "fasta" | "fna" => SeqFormat::Fasta,
            _ => SeqFormat::Lines,
        })
    }
}

/// `DNAZEN_TRAIN_MAX_STEPS=200` sets `train.max_steps`; `DNAZEN_SEED=3`
/// sets the top-level `seed`. Values are parsed as TOML literals and fall
/// back to plain strings, so `DNAZEN_FINETUNE_SEEDS="[1, 2]"` works.
fn apply_env(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let rest = key[ENV_PREFIX.len()..].to_ascii_lowercase();
    let (section, field) = match rest.split_once('_') {
        Some((s, f)) if SECTIONS.contains(&s) => (Some(s), f.to_string()),
        _ => (None, rest.clone()),
    };
    let value = parse_literal(raw);
    let target = match section {
        Some(s) => table
            .entry(s)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Invalid(format!("config key {s} is not a table")))?,
        None => table,
    };
    target.insert(field, value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// A required path: present in the config and existing on disk.
pub fn existing(path: &Option<PathBuf>, what: &str, flag: &str) -> Result<PathBuf> {
    let p = path
        .clone()
        .ok_or_else(|| Invalid(format!("no {what} given (use {flag} or the config file)")))?;
    if !p.exists() {
        return Err(Invalid(format!("{what} {} does not exist", p.display())).into());
    }
    Ok(p)
}

/// A required output path.
pub fn output(path: &Option<PathBuf>, what: &str, flag: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| Invalid(format!("no {what} given (use {flag} or the config file)")).into())
}

pub fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}
