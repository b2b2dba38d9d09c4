//! Two-stage caption annotation against a pluggable text model, plus LOF outlier filtering.

pub mod client;
pub mod descriptor;
pub mod lof;
pub mod pipeline;
pub mod prompts;
pub mod vocab;

pub use client::{ClientError, HttpClient, MockClient, ModelClient, Request};
pub use descriptor::{describe_record, Descriptor};
pub use lof::{filter_annotations, lof_scores, CaptionEmbedder, HashingEmbedder};
pub use pipeline::{
    annotate_records, apply_annotations, stage1_annotate, stage2_refine, verify_annotation, AnnotationConfig,
    AnnotationOutcome, Refinement, Stage1Output, TranscriptEntry, Verification,
};
pub use prompts::PromptSet;
pub use vocab::ClosedVocabulary;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnotationError {
    #[error("prompt {key} failed: {error}")]
    Stage { key: String, error: ClientError, transcript: Vec<TranscriptEntry> },
    #[error("refinement selected no in-vocabulary pairs (rejected {rejected:?})")]
    RefinementEmpty { rejected: Vec<(String, String)> },
    #[error("malformed model output: {0}")]
    Malformed(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("prompt set: {0}")]
    Prompt(String),
    #[error("closed vocabulary: {0}")]
    Vocabulary(String),
    #[error("LOF: {0}")]
    Lof(String),
}

/// 64-bit FNV-1a over the concatenated parts; stable across platforms and releases.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
