//! Bimanual hand-motion data stack: parameterization, synthetic corpus, curation
//! filters, dataset I/O, annotation pipeline, token codec and evaluation metrics.

pub mod annotation;
pub mod codec;
pub mod curation;
pub mod datagen;
pub mod dataset;
pub mod family;
pub mod filters;
pub mod metrics;
pub mod motion;
pub mod record;
pub mod skeleton;
pub mod text;

pub use family::Family;
pub use motion::{HandTrack, MotionError, MotionSequence};
pub use record::{FilterEntry, SequenceRecord};
pub use skeleton::{forward_kinematics, HandSkeleton};
