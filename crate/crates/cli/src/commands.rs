use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use dnazen::corpus::{load_sequences, Sequence, Split, TaskData};
use dnazen::eval::{attention_report as build_attention_report, evaluate, report_json, report_tsv};
use dnazen::featurize::Featurizer;
use dnazen::ggram::{build_vocab, cap_matches, count_statistics, ggram_stats as stats_rows, stats_tsv, GGramVocab};
use dnazen::model::ModelState;
use dnazen::nn::AdamConfig;
use dnazen::tokenizer::{train_bpe, TokenId, TokenVocab};
use dnazen::training::{finetune as run_finetune, pretrain as run_pretrain, PretrainOptions};

use crate::config::{create_parent, existing, output, PipelineConfig};
use crate::Invalid;

fn read_corpus(cfg: &PipelineConfig) -> Result<Vec<Sequence>> {
    let path = existing(&cfg.paths.corpus, "corpus", "--input")?;
    let format = cfg.format_for(&path)?;
    let seqs = load_sequences(&path, format)?.collect::<dnazen::Result<Vec<_>>>()?;
    if seqs.is_empty() {
        return Err(Invalid(format!("corpus {} holds no sequences", path.display())).into());
    }
    log::info!("read {} sequences from {}", seqs.len(), path.display());
    Ok(seqs)
}

fn read_tokenizer(cfg: &PipelineConfig) -> Result<TokenVocab> {
    Ok(TokenVocab::load(existing(&cfg.paths.tokenizer, "tokenizer", "--tokenizer")?)?)
}

fn read_vocabs(cfg: &PipelineConfig) -> Result<(TokenVocab, GGramVocab)> {
    let tokens = read_tokenizer(cfg)?;
    let ggrams = GGramVocab::load(existing(&cfg.paths.ggrams, "G-gram vocabulary", "--ggrams")?)?;
    Ok((tokens, ggrams))
}

fn read_checkpoint(cfg: &PipelineConfig) -> Result<ModelState> {
    let path = existing(&cfg.paths.checkpoint, "checkpoint", "--checkpoint")?;
    load_state(&path)
}

fn load_state(path: &Path) -> Result<ModelState> {
    ModelState::load(path).with_context(|| format!("loading {}", path.display()))
}

fn read_task(cfg: &PipelineConfig, num_classes: Option<usize>) -> Result<TaskData> {
    let dir = existing(&cfg.paths.task, "task directory", "--task")?;
    Ok(TaskData::load(&dir, num_classes)?)
}

/// Featurizer sized for `state`, after checking the vocabularies fit it.
fn featurizer_for(state: &ModelState, tokens: TokenVocab, ggrams: GGramVocab) -> Result<Featurizer> {
    let c = &state.config;
    if c.token_vocab_size != tokens.len() {
        return Err(Invalid(format!(
            "checkpoint expects {} tokens, tokenizer has {}",
            c.token_vocab_size,
            tokens.len()
        ))
        .into());
    }
    if c.ggram_vocab_size < ggrams.len() {
        return Err(Invalid(format!(
            "checkpoint holds {} G-gram embeddings, vocabulary has {}",
            c.ggram_vocab_size,
            ggrams.len()
        ))
        .into());
    }
    Ok(Featurizer::new(tokens, ggrams, c.max_len, c.max_matches))
}

/// Writes to `path`, or stdout when absent.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            create_parent(p)?;
            Box::new(BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?))
        }
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    s.into()
}

/// TSV to stdout, or `<prefix>.tsv` plus `<prefix>.json`.
fn write_report(prefix: Option<&Path>, tsv: &str, json: &str) -> Result<()> {
    match prefix {
        Some(p) => {
            create_parent(p)?;
            for (ext, text) in [("tsv", tsv), ("json", json)] {
                let path = with_ext(p, ext);
                fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
                log::info!("wrote {}", path.display());
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(tsv.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

pub fn tokenizer_train(cfg: &PipelineConfig, import: Option<&Path>) -> Result<()> {
    let out = output(&cfg.paths.tokenizer, "tokenizer output", "--output")?;
    let vocab = match import {
        Some(src) => {
            if !src.exists() {
                return Err(Invalid(format!("vocabulary {} does not exist", src.display())).into());
            }
            log::info!("importing {}", src.display());
            TokenVocab::load(src)?
        }
        None => {
            let seqs = read_corpus(cfg)?;
            train_bpe(seqs.iter(), cfg.tokenizer.vocab_size)?
        }
    };
    create_parent(&out)?;
    vocab.save(&out)?;
    log::info!("wrote {} tokens ({} merges) to {}", vocab.len(), vocab.merges().len(), out.display());
    Ok(())
}

pub fn ggram_build(cfg: &PipelineConfig) -> Result<()> {
    cfg.extract.validate()?;
    let out = output(&cfg.paths.ggrams, "G-gram output", "--output")?;
    let tokens = read_tokenizer(cfg)?;
    let seqs = read_corpus(cfg)?;
    let ids: Vec<Vec<TokenId>> = seqs.iter().map(|s| tokens.encode(s, false).ids).collect();
    let stats = count_statistics(&ids)?;
    let mut vocab = build_vocab(&ids, &stats, &cfg.extract, &tokens.tokens_containing('N'))?;
    vocab.annotate(&tokens)?;
    if vocab.is_empty() {
        log::warn!("no G-gram passed theta {} and min_freq {}", cfg.extract.theta, cfg.extract.min_freq);
    }
    create_parent(&out)?;
    vocab.save(&out)?;
    log::info!("wrote {} G-grams to {}", vocab.len(), out.display());
    Ok(())
}

pub fn ggram_match(cfg: &PipelineConfig, max_matches: Option<usize>, out: Option<&Path>) -> Result<()> {
    let (tokens, ggrams) = read_vocabs(cfg)?;
    let path = existing(&cfg.paths.corpus, "corpus", "--input")?;
    let format = cfg.format_for(&path)?;
    let f = Featurizer::new(tokens, ggrams, usize::MAX, usize::MAX);
    let mut w = sink(out)?;
    let mut n = 0usize;
    for seq in load_sequences(&path, format)? {
        let seq = seq?;
        let ids = f.tokens.encode(&seq, false).ids;
        let mut found = f.find_matches(&ids);
        if let Some(cap) = max_matches {
            found = cap_matches(&found, cap);
        }
        let matches: Vec<_> = found
            .matches
            .iter()
            .map(|m| {
                serde_json::json!({
                    "ggram": m.ggram,
                    "text": f.ggrams.get(m.ggram).map(|e| e.text.as_str()).unwrap_or(""),
                    "start": m.start,
                    "end": m.end,
                })
            })
            .collect();
        let line = serde_json::json!({ "id": seq.id, "tokens": ids, "matches": matches });
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
        n += 1;
    }
    w.flush()?;
    log::info!("matched {n} sequences");
    Ok(())
}

pub fn ggram_stats(cfg: &PipelineConfig, species: &str, dataset: Option<&str>, out: Option<&Path>) -> Result<()> {
    let (tokens, ggrams) = read_vocabs(cfg)?;
    let task = read_task(cfg, None)?;
    let rows = stats_rows(&task.splits(), &ggrams, &tokens);
    let mut w = sink(out)?;
    w.write_all(stats_tsv(&rows, species, &task.name, dataset.unwrap_or(&task.name)).as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn pretrain(cfg: &PipelineConfig, init: Option<&Path>) -> Result<()> {
    let out_dir = output(&cfg.paths.out_dir, "output directory", "--output-dir")?;
    let (tokens, ggrams) = read_vocabs(cfg)?;
    let state = match init {
        Some(p) => {
            let s = load_state(p)?;
            log::info!("continuing from {} (its model config replaces [model])", p.display());
            s
        }
        None => {
            let mut mc = cfg.model;
            mc.token_vocab_size = tokens.len();
            mc.ggram_vocab_size = ggrams.len().max(1);
            ModelState::init(mc, cfg.seed)?
        }
    };
    let f = featurizer_for(&state, tokens, ggrams)?;
    let seqs = read_corpus(cfg)?;
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let opts = PretrainOptions {
        checkpoint_dir: (cfg.train.checkpoint_every > 0).then(|| out_dir.join("checkpoints")),
        metrics_log: Some(out_dir.join("metrics.jsonl")),
    };
    let result = run_pretrain(&seqs, &f, state, &cfg.train, &opts)?;
    if let (Some(first), Some(last)) = (result.log.first(), result.log.last()) {
        log::info!("{} steps, loss {:.4} -> {:.4}", result.log.len(), first.loss, last.loss);
    }
    if result.skipped_steps > 0 {
        log::warn!("{} steps skipped for non-finite gradients", result.skipped_steps);
    }
    let path = out_dir.join("model.ckpt");
    result.state.save(&path, &cfg.train.adam())?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn finetune(cfg: &PipelineConfig, num_classes: Option<usize>) -> Result<()> {
    let out_dir = output(&cfg.paths.out_dir, "output directory", "--output-dir")?;
    let (tokens, ggrams) = read_vocabs(cfg)?;
    let init = read_checkpoint(cfg)?;
    let f = featurizer_for(&init, tokens, ggrams)?;
    let task = read_task(cfg, num_classes)?;
    let result = run_finetune(&task, &f, &init, &cfg.finetune)?;
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let adam = AdamConfig {
        lr: cfg.finetune.lr,
        ..AdamConfig::default()
    };
    let mut runs = Vec::new();
    for run in &result.runs {
        let path = out_dir.join(format!("seed_{}.ckpt", run.seed));
        run.state.save(&path, &adam)?;
        log::info!(
            "seed {}: best epoch {}, dev MCC {:.4}, test MCC {:.4} -> {}",
            run.seed,
            run.best_epoch,
            run.dev_mcc,
            run.test_mcc,
            path.display()
        );
        runs.push(serde_json::json!({
            "seed": run.seed,
            "best_epoch": run.best_epoch,
            "dev_mcc": run.dev_mcc,
            "test_mcc": run.test_mcc,
            "checkpoint": path,
            "log": run.log,
        }));
    }
    let summary = serde_json::json!({
        "task": task.name,
        "config": cfg.finetune,
        "runs": runs,
        "mean_dev_mcc": result.mean_dev_mcc,
        "mean_test_mcc": result.mean_test_mcc,
    });
    let path = out_dir.join("finetune.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?).with_context(|| format!("writing {}", path.display()))?;
    log::info!("mean test MCC {:.4} over {} seeds", result.mean_test_mcc, result.runs.len());
    Ok(())
}

fn seed_from_name(path: &Path) -> Option<u64> {
    path.file_stem()?.to_str()?.strip_prefix("seed_")?.parse().ok()
}

/// Expands directories to their `seed_<n>.ckpt` files, ordered by seed.
fn expand_checkpoints(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.extension().is_some_and(|x| x == "ckpt") && seed_from_name(q).is_some())
                .collect();
            found.sort_by_key(|q| seed_from_name(q));
            if found.is_empty() {
                return Err(Invalid(format!("no seed_<n>.ckpt files in {}", p.display())).into());
            }
            out.extend(found);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(Invalid(format!("checkpoint {} does not exist", p.display())).into());
        }
    }
    Ok(out)
}

pub fn eval(
    cfg: &PipelineConfig,
    flags: &[PathBuf],
    num_classes: Option<usize>,
    seeds: Option<&[u64]>,
    dataset: Option<&str>,
    out: Option<&Path>,
) -> Result<()> {
    let given: Vec<PathBuf> = if flags.is_empty() {
        vec![existing(&cfg.paths.checkpoint, "checkpoint", "--checkpoint")?]
    } else {
        flags.to_vec()
    };
    let paths = expand_checkpoints(&given)?;
    let seeds: Vec<u64> = match seeds {
        Some(s) if s.len() != paths.len() => {
            return Err(Invalid(format!("{} seeds given for {} checkpoints", s.len(), paths.len())).into())
        }
        Some(s) => s.to_vec(),
        None => paths
            .iter()
            .enumerate()
            .map(|(i, p)| seed_from_name(p).unwrap_or(i as u64 + 1))
            .collect(),
    };
    let states = paths.iter().map(|p| load_state(p)).collect::<Result<Vec<_>>>()?;
    let (tokens, ggrams) = read_vocabs(cfg)?;
    let f = featurizer_for(&states[0], tokens, ggrams)?;
    if let Some(i) = states.iter().position(|s| s.config != states[0].config) {
        return Err(Invalid(format!("{} has a different model config from {}", paths[i].display(), paths[0].display())).into());
    }
    let task = read_task(cfg, num_classes)?;
    let pairs: Vec<(u64, &ModelState)> = seeds.iter().copied().zip(&states).collect();
    let rows = evaluate(&pairs, &task, &f, dataset.unwrap_or(&task.name), cfg.workers)?;
    for r in &rows {
        log::info!("{} MCC mean {:.4} over {} seeds", r.split, r.mean, r.seeds.len());
    }
    write_report(out, &report_tsv(&rows), &report_json(&rows)?)
}

pub struct AttentionOptions<'a> {
    pub split: &'a str,
    pub label: Option<usize>,
    pub motif: Option<&'a str>,
    pub top_k: usize,
    pub limit: Option<usize>,
    pub output: Option<&'a Path>,
}

pub fn attention_report(cfg: &PipelineConfig, opts: &AttentionOptions) -> Result<()> {
    if opts.top_k == 0 {
        return Err(Invalid("--top-k must be positive".into()).into());
    }
    let state = read_checkpoint(cfg)?;
    let (tokens, ggrams) = read_vocabs(cfg)?;
    let f = featurizer_for(&state, tokens, ggrams)?;
    let mut sample: Vec<Sequence> = if cfg.paths.task.is_some() {
        let split: Split = opts.split.parse()?;
        let task = read_task(cfg, None)?;
        let ds = match split {
            Split::Train => task.train,
            Split::Dev => task.dev,
            Split::Test => task.test,
        };
        ds.records
            .into_iter()
            .filter(|(_, l)| opts.label.is_none_or(|want| *l == want))
            .map(|(s, _)| s)
            .collect()
    } else {
        if opts.label.is_some() {
            return Err(Invalid("--label needs --task".into()).into());
        }
        read_corpus(cfg)?
    };
    if let Some(n) = opts.limit {
        sample.truncate(n);
    }
    if sample.is_empty() {
        return Err(Invalid("no sequences to report on".into()).into());
    }
    let motif = opts.motif.map(|m| m.to_ascii_uppercase());
    let report = build_attention_report(&state, &f, &sample, motif.as_deref(), opts.top_k)?;
    if let Some(m) = &motif {
        log::info!(
            "{m} in the top {} for {:.3} of {} sequences ({} without matches)",
            opts.top_k,
            report.motif_hit_rate(),
            sample.len(),
            report.skipped.len()
        );
    }
    write_report(opts.output, &report.to_tsv(), &serde_json::to_string_pretty(&report)?)
}
