//! Evaluation metrics over feature embeddings, captions and joint positions.

mod kid;
mod language;
mod pose;
mod report;
mod retrieval;

pub use kid::{kid, KidMode};
pub use language::{bleu, corpus_bleu, lcs_len, rouge_l, tokenize};
pub use pose::{accel_error, joint_positions, mpjpe, pa_mpjpe, procrustes_align};
pub use report::{Interval, MetricReport};
pub use retrieval::{diversity, l2_normalize_rows, mm_dist, multimodality, r_precision};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("need at least {needed} samples, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Motion(#[from] crate::motion::MotionError),
}
