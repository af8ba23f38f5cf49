//! Iterative knowledge distillation for compact neural translation models.
//!
//! A teacher translates monolingual text into a synthetic parallel corpus,
//! and students are fine-tuned on it either with sequence-level cross-entropy
//! (`Mode::Dd`) or by matching the teacher's per-position top-k softmax
//! distributions under a KL objective (`Mode::Sd`). The same-size student
//! becomes the next cycle's teacher.
//!
//! Everything runs at desk scale on oracle toy languages, so every stage can
//! be scored against an exact reference translator.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod diagnostics;
pub mod distill;
pub mod error;
mod fsio;
pub mod eval;
pub mod model;
pub mod rng;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
