//! Tooling around a frozen vision-language backbone for VizWiz-style VQA:
//!
//! - [`textkit`]: answer normalization and Levenshtein distance
//! - [`ensemble`]: majority-then-medoid answer selection across models
//! - [`metrics`]: leave-one-out VQA accuracy broken down by answer type
//! - [`imageops`]: segment-highlight / segment-contrast enhancement, PPM/PGM IO
//! - [`toynet`]: a small cross-attention + LoRA core with gradient checking

pub mod ensemble;
pub mod imageops;
pub mod metrics;
pub mod textkit;
pub mod toynet;

pub use textkit::{levenshtein, normalize_answer, NormalizationRules};
