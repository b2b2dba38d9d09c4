//! Text-to-motion and motion-to-text inference with a frozen tokenizer.

use handlm_core::codec::{deinterleave, interleave, repair, CodecError, MotionTokens};
use handlm_core::MotionSequence;

use super::data::render;
use super::{LanguageModel, Sampling};
use crate::shift::{ShiftModel, POSE, TRAJ};
use crate::NnError;

const CHUNK: usize = 32;

#[derive(Debug, Clone)]
pub struct GeneratedMotion {
    pub ids: Vec<u32>,
    pub repaired: Vec<u32>,
    pub truncated: bool,
    /// Set when the repaired stream still fails to decode; repair makes this unreachable.
    pub codec_error: Option<CodecError>,
    pub tokens: MotionTokens,
    /// `None` when the motion span is empty.
    pub motion: Option<MotionSequence>,
}

/// Generates one motion per caption. `frames` sets the length budget: the
/// decoder may emit up to `frames / r` steps plus a quarter for slack.
pub fn generate_motions(
    model: &LanguageModel,
    shift: &ShiftModel,
    captions: &[String],
    template: &str,
    sampling: &Sampling,
    frames: usize,
) -> Result<Vec<GeneratedMotion>, NnError> {
    let r = shift.config.downsample;
    let steps = shift.padded_len(frames.max(1)) / r;
    let budget = Sampling { max_len: 4 * (steps + steps.div_ceil(4)) + 2, ..sampling.clone() };
    let mut out = Vec::with_capacity(captions.len());
    for (ci, chunk) in captions.chunks(CHUNK).enumerate() {
        let sources: Vec<Vec<u32>> = chunk.iter().map(|c| render(template, c, &[], &model.vocab.text)).collect();
        let s = Sampling { seed: budget.seed.wrapping_add(ci as u64), ..budget.clone() };
        for g in model.generate(&sources, &s)? {
            let repaired = repair(&g.ids, &model.vocab);
            let (tokens, codec_error) = match deinterleave(&repaired, &model.vocab) {
                Ok(t) => (t, None),
                Err(e) => (MotionTokens::default(), Some(e)),
            };
            let motion = if tokens.is_empty() { None } else { Some(shift.decode(&tokens, tokens.len() * r)?) };
            out.push(GeneratedMotion { ids: g.ids, repaired, truncated: g.truncated, codec_error, tokens, motion });
        }
    }
    Ok(out)
}

/// Source ids for captioning `motion`; an empty motion yields an empty span.
pub fn caption_source(model: &LanguageModel, shift: &ShiftModel, motion: &MotionSequence, template: &str) -> Result<Vec<u32>, NnError> {
    let tokens = if motion.num_frames() == 0 { MotionTokens::default() } else { shift.encode(motion)? };
    Ok(render(template, "", &interleave(&tokens, &model.vocab)?, &model.vocab.text))
}

/// Captions for a batch of motions.
pub fn caption_motions(
    model: &LanguageModel,
    shift: &ShiftModel,
    motions: &[&MotionSequence],
    template: &str,
    sampling: &Sampling,
) -> Result<Vec<String>, NnError> {
    let mut out = Vec::with_capacity(motions.len());
    for chunk in motions.chunks(CHUNK) {
        let sources = chunk.iter().map(|m| caption_source(model, shift, m, template)).collect::<Result<Vec<_>, _>>()?;
        for g in model.generate(&sources, sampling)? {
            out.push(model.vocab.text.decode(&g.ids));
        }
    }
    Ok(out)
}

/// Encode, prompt with the first motion-to-text template, decode greedily.
pub fn caption(motion: &MotionSequence, model: &LanguageModel, shift: &ShiftModel, template: &str) -> Result<String, NnError> {
    Ok(caption_motions(model, shift, &[motion], template, &Sampling::greedy(48))?.remove(0))
}

/// Weighted normalized MSE between a generated motion and its ground truth.
/// The generated motion is truncated or extended by its last frame to the
/// ground-truth length; a missing motion counts as the rest pose.
pub fn motion_mse_to(shift: &ShiftModel, generated: Option<&MotionSequence>, truth: &MotionSequence) -> Result<f64, NnError> {
    let n = truth.num_frames();
    let g = match generated {
        Some(m) if m.num_frames() >= n => m.truncated(n),
        Some(m) => m.padded_to(n),
        None => MotionSequence::rest(n, truth.fps),
    };
    let w = handlm_core::motion::TRAJ_DIM as f64 / handlm_core::motion::HAND_DIM as f64;
    let mut total = 0.0;
    for (modality, weight) in [(TRAJ, w), (POSE, 1.0 - w)] {
        let a = shift.batch_tensor(&[&g], modality)?;
        let b = shift.batch_tensor(&[truth], modality)?;
        total += weight * crate::params::scalar(&(a - b)?.sqr()?.mean_all()?)?;
    }
    Ok(total)
}

/// Mean decoded-motion MSE of greedy text-to-motion over `(caption, motion)` pairs.
pub fn t2m_motion_mse(
    model: &LanguageModel,
    shift: &ShiftModel,
    pairs: &[(String, &MotionSequence)],
    template: &str,
) -> Result<f64, NnError> {
    if pairs.is_empty() {
        return Err(NnError::Empty("no held-out pairs".into()));
    }
    let frames = pairs.iter().map(|(_, m)| m.num_frames()).max().unwrap_or(1);
    let captions: Vec<String> = pairs.iter().map(|(c, _)| c.clone()).collect();
    let gens = generate_motions(model, shift, &captions, template, &Sampling::greedy(0), frames)?;
    let mut sum = 0.0;
    for (g, (_, truth)) in gens.iter().zip(pairs) {
        sum += motion_mse_to(shift, g.motion.as_ref(), truth)?;
    }
    Ok(sum / pairs.len() as f64)
}
