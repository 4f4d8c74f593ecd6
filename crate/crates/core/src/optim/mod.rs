//! Weighted regression loss and the Adam optimizer.

mod adam;
mod loss;

use thiserror::Error;

pub use adam::{AdamState, BETA1, BETA2, EPS};
pub use loss::{
    error_weights, mse_point, nearest_rank_quantile, value_weights, value_weights_with_mean, weighted_mse,
    weighted_mse_backward, weighted_mse_with, LossBatchReport, ERROR_BOOST, ERROR_QUANTILE, VALUE_EPS,
};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch lengths differ: {0} targets, {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("non-finite value at batch position {0}")]
    NonFiniteInput(usize),
    #[error("optimizer state does not match parameter shapes")]
    ShapeMismatch,
}
