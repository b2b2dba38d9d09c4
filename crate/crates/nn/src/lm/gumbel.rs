//! Differentiable path from motion logits to continuous motion.

use candle_core::{DType, Device, Tensor, D};
use handlm_core::codec::{CodecError, Vocabulary};
use handlm_core::MotionSequence;
use rand::Rng;

use crate::shift::{ShiftModel, POSE, TRAJ};
use crate::NnError;

/// Columns `[|V_t|, |V_t| + 2K)` of the last axis: trajectory block, then pose block.
pub fn slice_motion_logits(logits: &Tensor, vocab: &Vocabulary) -> Result<Tensor, NnError> {
    let width = logits.dim(D::Minus1)?;
    if width != vocab.len() {
        return Err(NnError::Vocabulary(format!("logit width {width} but vocabulary has {}", vocab.len())));
    }
    Ok(logits.narrow(D::Minus1, vocab.motion_offset() as usize, vocab.motion_len())?)
}

/// Per-slot logits over the slot's own codebook, `[B, T, 4, K]`, for the motion
/// span of teacher-forced outputs whose targets are `<som>`, 4T ids, `<eom>`.
pub fn slot_logits(logits: &Tensor, vocab: &Vocabulary, steps: usize) -> Result<Tensor, NnError> {
    let (b, l, _) = logits.dims3()?;
    if l < 4 * steps + 1 {
        return Err(NnError::Codec(CodecError::MissingEom { start: 0 }));
    }
    let k = vocab.codebook_size;
    let m = slice_motion_logits(&logits.narrow(1, 1, 4 * steps)?, vocab)?.reshape((b, steps, 4, 2 * k))?;
    let slots = (0..4)
        .map(|s| m.narrow(2, s, 1)?.narrow(3, if s % 2 == 0 { 0 } else { k }, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Tensor::cat(&slots, 2)?)
}

/// Standard Gumbel noise `−ln(−ln u)` with `u` kept away from 0 and 1.
pub fn gumbel_noise(shape: &[usize], dtype: DType, rng: &mut impl Rng) -> Result<Tensor, NnError> {
    let n: usize = shape.iter().product();
    let g: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen_range(1e-10..1.0 - 1e-10);
            -(-u.ln()).ln()
        })
        .collect();
    Ok(Tensor::from_vec(g, shape, &Device::Cpu)?.to_dtype(dtype)?)
}

/// `softmax((logits + noise) / τ)` over the last axis. `noise = None` is the
/// deterministic zero-noise mode. `hard` returns the one-hot argmax in the
/// forward pass with the soft sample's gradient.
pub fn gumbel_softmax(logits: &Tensor, tau: f64, noise: Option<&Tensor>, hard: bool) -> Result<Tensor, NnError> {
    if !(tau > 0.0) {
        return Err(NnError::Config(format!("gumbel temperature must be positive, got {tau}")));
    }
    let perturbed = match noise {
        Some(g) => logits.add(g)?,
        None => logits.clone(),
    };
    let soft = candle_nn::ops::softmax(&(perturbed / tau)?, D::Minus1)?;
    if !hard {
        return Ok(soft);
    }
    let k = soft.dim(D::Minus1)?;
    let arg = soft.argmax_keepdim(D::Minus1)?;
    let range = Tensor::arange(0u32, k as u32, &Device::Cpu)?;
    let onehot = arg.broadcast_eq(&range)?.to_dtype(soft.dtype())?;
    Ok(((onehot - soft.detach())? + soft)?)
}

/// Differentiable decode of `[B, T, 4, K]` slot weights into normalized
/// `[2B, C, T·r]` trajectory and pose tensors (left hands first). The
/// tokenizer's codebooks are detached.
pub fn soft_decode_tensors(weights: &Tensor, shift: &ShiftModel) -> Result<(Tensor, Tensor), NnError> {
    let (_, _, slots, k) = weights.dims4()?;
    if slots != 4 || k != shift.config.codebook_size {
        return Err(NnError::Codec(CodecError::PartialGroup { position: 0, slots }));
    }
    let latents = |slot: usize, modality: usize| -> Result<Tensor, NnError> {
        let w = weights.narrow(2, slot, 1)?.squeeze(2)?;
        let cb = shift.codebook(modality)?.detach().to_dtype(w.dtype())?;
        Ok(w.broadcast_matmul(&cb)?.transpose(1, 2)?)
    };
    let mut out = Vec::with_capacity(2);
    for modality in [TRAJ, POSE] {
        let left = latents(modality, modality)?;
        let right = latents(2 + modality, modality)?;
        let z = Tensor::cat(&[left, right], 0)?.contiguous()?;
        out.push(shift.decode_latents(modality, &z.to_dtype(shift.store.dtype())?)?);
    }
    let pose = out.pop().expect("two modalities");
    let traj = out.pop().expect("two modalities");
    Ok((traj, pose))
}

/// Soft decode of `4T` simplex rows (slot order τL θL τR θR) into a motion.
pub fn soft_decode(rows: &Tensor, shift: &ShiftModel, original_n: usize) -> Result<MotionSequence, NnError> {
    let (n, k) = rows.dims2()?;
    if n == 0 || n % 4 != 0 {
        return Err(NnError::Codec(CodecError::PartialGroup { position: n, slots: n }));
    }
    if k != shift.config.codebook_size {
        return Err(NnError::Vocabulary(format!("rows have {k} weights but codebooks have {}", shift.config.codebook_size)));
    }
    let (traj, pose) = soft_decode_tensors(&rows.reshape((1, n / 4, 4, k))?, shift)?;
    shift.assemble(&traj, &pose, original_n)
}

/// Weighted MSE between normalized decoder outputs and targets, matching the
/// tokenizer's reconstruction term.
pub fn motion_mse(traj: &Tensor, pose: &Tensor, gt_traj: &Tensor, gt_pose: &Tensor) -> Result<Tensor, NnError> {
    use handlm_core::motion::{HAND_DIM, TRAJ_DIM};
    let w = TRAJ_DIM as f64 / HAND_DIM as f64;
    let t = (traj - gt_traj)?.sqr()?.mean_all()?;
    let p = (pose - gt_pose)?.sqr()?.mean_all()?;
    Ok(((t * w)? + (p * (1.0 - w))?)?)
}
