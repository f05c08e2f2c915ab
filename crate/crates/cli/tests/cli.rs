use std::path::Path;
use std::process::{Command, Output};

use dnazen::corpus::write_labeled_dataset;
use dnazen::synthetic::{motif_task, MotifTaskConfig};

fn dnazen(args: &[&str], cwd: &Path) -> Output {
    dnazen_env(args, cwd, &[])
}

fn dnazen_env(args: &[&str], cwd: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dnazen"));
    cmd.args(args).current_dir(cwd);
    // Keep the caller's environment from leaking config into the tests.
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("DNAZEN_")) {
        cmd.env_remove(k);
    }
    cmd.envs(env.iter().copied());
    cmd.output().expect("spawn dnazen")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), stderr(&o));
    o
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = dnazen(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["tokenizer-train", "ggram-build", "ggram-match", "ggram-stats", "pretrain", "finetune", "eval", "attention-report"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    assert!(text.contains("DNAZEN_"));
    let o = dnazen(&["ggram-build", "--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("--theta"));
}

#[test]
fn unknown_flag_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let o = dnazen(&["pretrain", "--no-such-flag", "3"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--no-such-flag"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = dnazen(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("frobnicate"));
    assert_eq!(dnazen(&[], dir.path()).status.code(), Some(1));
}

#[test]
fn validation_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = dnazen(&["tokenizer-train", "--input", "missing.fa", "--output", "v.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.fa"));

    std::fs::write(dir.path().join("seqs.txt"), "ACGTACGT\nTTGACCA\n").unwrap();
    let o = dnazen(&["tokenizer-train", "--input", "seqs.txt", "--output", "v.json", "--vocab-size", "3"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    std::fs::write(dir.path().join("bad.toml"), "[train]\nlearning_rate = 1\n").unwrap();
    let o = dnazen(&["--config", "bad.toml", "tokenizer-train"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    // A truncated checkpoint is a runtime failure, not a usage error.
    ok(dnazen(&["tokenizer-train", "--input", "seqs.txt", "--output", "v.json", "--vocab-size", "12"], dir.path()));
    ok(dnazen(&["ggram-build", "--input", "seqs.txt", "--tokenizer", "v.json", "--output", "g.jsonl"], dir.path()));
    std::fs::write(dir.path().join("broken.ckpt"), b"DNZCKPT\0\x01").unwrap();
    let o = dnazen(
        &["attention-report", "--checkpoint", "broken.ckpt", "--tokenizer", "v.json", "--ggrams", "g.jsonl", "--input", "seqs.txt"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn flags_beat_env_beat_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("seqs.txt"), "ACGTACGTAC\nTTGACCAGGA\n").unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "[paths]\ncorpus = \"seqs.txt\"\ntokenizer = \"from_file.json\"\n[tokenizer]\nvocab_size = 10\n",
    )
    .unwrap();
    let o = ok(dnazen_env(
        &["--config", "c.toml", "tokenizer-train", "--output", "from_flag.json"],
        dir.path(),
        &[("DNAZEN_TOKENIZER_VOCAB_SIZE", "11"), ("DNAZEN_PATHS_TOKENIZER", "from_env.json")],
    ));
    assert!(dir.path().join("from_flag.json").exists());
    assert!(!dir.path().join("from_env.json").exists());
    let log = stderr(&o);
    assert!(log.contains("effective config"), "{log}");
    assert!(log.contains("vocab_size = 11"), "{log}");
    let v = dnazen::tokenizer::TokenVocab::load(dir.path().join("from_flag.json")).unwrap();
    assert_eq!(v.len(), 11);
}

#[test]
fn full_pipeline_on_synthetic_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let task = motif_task(&MotifTaskConfig {
        num_sequences: 240,
        length: 60,
        ..Default::default()
    })
    .unwrap();
    let task_dir = root.join("motif");
    std::fs::create_dir(&task_dir).unwrap();
    for ds in task.splits() {
        write_labeled_dataset(ds, task_dir.join(format!("{}.csv", ds.split))).unwrap();
    }
    let corpus: String = task
        .train
        .records
        .iter()
        .map(|(s, _)| format!(">{}\n{}\n", s.id, s.bases()))
        .collect();
    std::fs::write(root.join("corpus.fa"), corpus).unwrap();

    ok(dnazen(&["tokenizer-train", "--input", "corpus.fa", "--vocab-size", "40", "--output", "vocab/tokens.json"], root));
    ok(dnazen(
        &["ggram-build", "--input", "corpus.fa", "--tokenizer", "vocab/tokens.json", "--theta", "0.5", "--output", "vocab/ggrams.jsonl"],
        root,
    ));
    let lines = std::fs::read_to_string(root.join("vocab/ggrams.jsonl")).unwrap();
    assert!(lines.lines().count() > 0);
    for line in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["tokens"].is_array() && v["text"].is_string() && v["freq"].is_u64() && v["id"].is_u64());
    }

    let vocab = ["--tokenizer", "vocab/tokens.json", "--ggrams", "vocab/ggrams.jsonl"];
    let o = ok(dnazen(&[&["ggram-match", "--input", "corpus.fa"][..], &vocab].concat(), root));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), task.train.len());
    let o = ok(dnazen(&[&["ggram-stats", "--task", "motif", "--species", "synthetic"][..], &vocab].concat(), root));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 4);

    let pretrain = [
        "pretrain", "--input", "corpus.fa", "--output-dir", "run/pre", "--steps", "200", "--batch-size", "4",
        "--hidden", "16", "--heads", "2", "--token-layers", "2", "--ggram-layers", "1", "--max-len", "64",
        "--max-matches", "32", "--lr", "0.002", "--checkpoint-every", "100",
    ];
    ok(dnazen(&[&pretrain[..], &vocab].concat(), root));
    let metrics = std::fs::read_to_string(root.join("run/pre/metrics.jsonl")).unwrap();
    let steps: Vec<serde_json::Value> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(steps.len(), 200);
    for key in ["step", "loss", "lr", "masked_frac"] {
        assert!(steps[0].get(key).is_some(), "metrics line lacks {key}");
    }
    assert!(root.join("run/pre/checkpoints/step_000100.ckpt").exists());

    ok(dnazen(
        &[
            &["finetune", "--checkpoint", "run/pre/model.ckpt", "--task", "motif", "--seeds", "1,2", "--epochs", "2", "--lr", "0.001", "--output-dir", "run/ft"][..],
            &vocab,
        ]
        .concat(),
        root,
    ));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(root.join("run/ft/finetune.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 2);

    ok(dnazen(&[&["eval", "--checkpoint", "run/ft", "--task", "motif", "--output", "run/report"][..], &vocab].concat(), root));
    let tsv = std::fs::read_to_string(root.join("run/report.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 4);
    let first: Vec<&str> = tsv.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(&first[..3], &["motif", "motif", "train"], "{tsv}");
    assert_eq!(first[4], "1,2");
    let rows: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(root.join("run/report.json")).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);

    let o = ok(dnazen(
        &[
            &["attention-report", "--checkpoint", "run/pre/model.ckpt", "--task", "motif", "--label", "1", "--motif", "TATAAA", "--top-k", "3", "--limit", "10"][..],
            &vocab,
        ]
        .concat(),
        root,
    ));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("Example\tLayer\tRank\tG-gram"));
}
