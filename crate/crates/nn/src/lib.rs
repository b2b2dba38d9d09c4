//! Neural components: the motion VQ tokenizer, the text-motion encoder-decoder
//! language model with its three training stages, and the contrastive evaluator.

pub mod evaluator;
pub mod layers;
pub mod lm;
pub mod params;
pub mod shift;
pub mod shift_train;

use std::path::PathBuf;

use handlm_core::codec::CodecError;
use handlm_core::motion::MotionError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{stage} training diverged in epoch {epoch}; last good parameters restored")]
    Diverged { stage: String, epoch: usize, checkpoint: Option<PathBuf> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
