use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::mcc::mcc_of;
use crate::corpus::{LabeledDataset, TaskData};
use crate::error::{Error, Result};
use crate::featurize::{Example, Featurizer};
use crate::ggram::ggram_stats;
use crate::model::ModelState;
use crate::training::predict;

pub const MCC_METRIC: &str = "MCC (R_K covariance)";

pub const REPORT_HEADER: [&str; 8] = [
    "Task",
    "Dataset",
    "Split",
    "Metric",
    "Seeds",
    "Values",
    "Mean",
    "Avg. G-gram per Case",
];

/// One split's score across checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub task: String,
    pub dataset: String,
    pub split: String,
    pub metric: String,
    pub seeds: Vec<u64>,
    /// Parallel to `seeds`.
    pub values: Vec<f64>,
    pub mean: f64,
    pub avg_ggrams_per_case: f64,
}

/// Scores every split of `task` with each checkpoint. Checkpoints are
/// paired with the seed that produced them; the row mean is over seeds.
pub fn evaluate(
    checkpoints: &[(u64, &ModelState)],
    task: &TaskData,
    featurizer: &Featurizer,
    dataset: &str,
    workers: usize,
) -> Result<Vec<ReportRow>> {
    if checkpoints.is_empty() {
        return Err(Error::Validation("no checkpoints to evaluate".into()));
    }
    let k = task.train.num_classes;
    for (seed, state) in checkpoints {
        if state.num_classes() != Some(k) {
            return Err(Error::Validation(format!(
                "checkpoint for seed {seed} has {} classes, task {:?} has {k}",
                state.num_classes().map_or("no".to_string(), |n| n.to_string()),
                task.name
            )));
        }
    }
    let splits = task.splits();
    let stats = ggram_stats(&splits, &featurizer.ggrams, &featurizer.tokens);
    let mut rows = Vec::with_capacity(splits.len());
    for (ds, st) in splits.iter().zip(&stats) {
        let values = split_scores(checkpoints, ds, featurizer, workers)?;
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        rows.push(ReportRow {
            task: task.name.clone(),
            dataset: dataset.to_string(),
            split: ds.split.to_string(),
            metric: MCC_METRIC.to_string(),
            seeds: checkpoints.iter().map(|(s, _)| *s).collect(),
            values,
            mean,
            avg_ggrams_per_case: st.avg,
        });
    }
    Ok(rows)
}

fn split_scores(
    checkpoints: &[(u64, &ModelState)],
    ds: &LabeledDataset,
    featurizer: &Featurizer,
    workers: usize,
) -> Result<Vec<f64>> {
    if ds.is_empty() {
        return Err(Error::Validation(format!("{} split is empty", ds.split)));
    }
    let examples: Vec<Example> = ds.records.iter().map(|(s, _)| featurizer.featurize(s)).collect();
    let gold: Vec<usize> = ds.labels().collect();
    checkpoints
        .iter()
        .map(|(_, state)| mcc_of(&gold, &predict(state, &examples, workers)?, ds.num_classes))
        .collect()
}

pub fn report_tsv(rows: &[ReportRow]) -> String {
    let mut out = REPORT_HEADER.join("\t");
    out.push('\n');
    let join = |xs: Vec<String>| xs.join(",");
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.1}",
            r.task,
            r.dataset,
            r.split,
            r.metric,
            join(r.seeds.iter().map(u64::to_string).collect()),
            join(r.values.iter().map(|v| format!("{v:.4}")).collect()),
            r.mean,
            r.avg_ggrams_per_case
        )
        .expect("write to string");
    }
    out
}

pub fn report_json(rows: &[ReportRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)?)
}
