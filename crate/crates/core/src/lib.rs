//! Measurement and mitigation of gender bias in abusive-language classifiers.
//!
//! The crate is organised around the pipeline it implements:
//!
//! * [`corpus`]: tokenization, label schemes, TSV datasets, splits and the
//!   synthetic corpus generator.
//! * [`embedding`]: word vectors, word2vec text I/O and hard debiasing.
//! * [`identity`]: identity-term templates for the unbiased test set and
//!   gender-swap augmentation.
//! * [`model`]: CNN, GRU and attention-GRU classifiers with exact gradients.
//! * [`train`]: loss, Adam, early stopping, fine-tuning and multi-seed runs.
//! * [`metrics`]: ROC AUC, equal-error-rate thresholds and FPED/FNED.
//! * [`experiment`]: experiment specs, the end-to-end runner and report files.

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod identity;
mod lexfile;
pub mod metrics;
pub mod model;
pub mod train;

pub use error::{Error, Result};
