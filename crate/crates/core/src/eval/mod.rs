//! Metrics, benchmark reports and G-gram attention summaries.

pub mod attention;
pub mod mcc;
pub mod report;

pub use attention::{attention_report, example_attention, AttentionEntry, AttentionReport, ExampleAttention};
pub use mcc::{mcc, mcc_of, ConfusionCounts};
pub use report::{evaluate, report_json, report_tsv, ReportRow, MCC_METRIC, REPORT_HEADER};
