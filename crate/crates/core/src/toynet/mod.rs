//! Desk-scale trainable core: a cross-attention block from text states to
//! visual features, LoRA adapters on a frozen two-layer language head,
//! optional mask-feature integration, parameter accounting, finite-difference
//! gradient checking and plain gradient-descent training.

use thiserror::Error;

pub mod attention;
pub mod gradcheck;
pub mod integrate;
pub mod lora;
pub mod model;
pub mod tensor;
pub mod train;

pub use attention::{cross_attention_forward, CrossAttentionBlock};
pub use gradcheck::{grad_check, GradCheckReport, Objective, ParamView};
pub use integrate::{integrate_features, pool_mask, IntegrationConfig};
pub use lora::{lora_forward, AdaptedLinear, LoraAdapter};
pub use model::{
    count_params, grad_check_fixture, seeded_fixture, Batch, GridConfig, LoraConfig, ParamGroup, ParamReport, ToyConfig,
    ToyModel, ToyProblem, DEFAULT_SEED,
};
pub use tensor::{softmax_rows, Tensor};
pub use train::{fit, fit_toy, FitReport, ParamDelta};

#[derive(Debug, Error, PartialEq)]
pub enum ToyError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),
}
