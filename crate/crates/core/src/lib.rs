//! G-gram enhanced genomic representation learning.
//!
//! The pipeline runs in stages:
//!
//! 1. [`corpus`] loads FASTA / line / CSV data and normalizes bases.
//! 2. [`tokenizer`] trains and applies a nucleotide BPE vocabulary.
//! 3. [`ggram`] mines multi-token G-grams by adjacent-token PMI, and matches
//!    them in running sequences with a token-level Aho-Corasick automaton.
//! 4. [`model`] is the dual encoder: a position-free G-gram encoder whose
//!    per-layer outputs are added into the lower layers of the token encoder
//!    through the token/G-gram matching matrix.
//! 5. [`training`] implements whole G-gram masking, MLM pre-training and
//!    fine-tuning; [`eval`] computes MCC and attention reports.
//!
//! [`nn`] is the small reverse-mode autodiff engine everything trains on.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod ggram;
pub mod model;
pub mod nn;
pub mod synthetic;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
