//! Hand-motion VQ tokenizer: one trajectory and one pose autoencoder, each
//! shared by both hands, with nearest-neighbour codebooks.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use handlm_core::codec::MotionTokens;
use handlm_core::motion::{HandTrack, MotionSequence, DEFAULT_FPS, POSE_DIM, POSE_JOINTS, TRAJ_DIM, IDENTITY_6D};
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::layers::{avg_pool2, repeat2, Conv1d};
use crate::params::ParamStore;
use crate::NnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftConfig {
    pub codebook_size: usize,
    pub code_dim: usize,
    /// Temporal downsampling factor; a power of two.
    pub downsample: usize,
    pub hidden: usize,
    /// Commitment weight.
    pub beta: f64,
    pub fps: f64,
    pub seed: u64,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self { codebook_size: 4096, code_dim: 64, downsample: 8, hidden: 128, beta: 0.25, fps: DEFAULT_FPS, seed: 0 }
    }
}

impl ShiftConfig {
    /// Small enough to train on a laptop CPU in minutes.
    pub fn desk() -> Self {
        Self { codebook_size: 256, code_dim: 32, hidden: 64, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.codebook_size < 2 {
            return Err(NnError::Config(format!("codebook_size must be >= 2, got {}", self.codebook_size)));
        }
        if self.code_dim == 0 || self.hidden == 0 {
            return Err(NnError::Config("code_dim and hidden must be positive".into()));
        }
        if self.downsample < 2 || !self.downsample.is_power_of_two() {
            return Err(NnError::Config(format!("downsample must be a power of two >= 2, got {}", self.downsample)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(NnError::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(NnError::Config(format!("fps must be positive, got {}", self.fps)));
        }
        Ok(())
    }
}

/// Nearest codebook row for every latent row, by exact squared distance.
/// Ties go to the lowest index; the quantized rows are copies of codebook rows.
pub fn quantize(latents: ArrayView2<f64>, codebook: ArrayView2<f64>) -> (Vec<u32>, Array2<f64>) {
    let mut idx = Vec::with_capacity(latents.nrows());
    let mut out = Array2::zeros((latents.nrows(), codebook.ncols()));
    for (i, z) in latents.rows().into_iter().enumerate() {
        let mut best = (f64::INFINITY, 0usize);
        for (k, c) in codebook.rows().into_iter().enumerate() {
            let d: f64 = z.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, k);
            }
        }
        idx.push(best.1 as u32);
        out.row_mut(i).assign(&codebook.row(best.1));
    }
    (idx, out)
}

/// Per-channel standardization shared by both hands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub traj_mean: Vec<f64>,
    pub traj_std: Vec<f64>,
    pub pose_mean: Vec<f64>,
    pub pose_std: Vec<f64>,
}

/// Channels that barely move are scaled as if they had this spread.
const STD_FLOOR: f64 = 1e-2;

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            traj_mean: vec![0.0; TRAJ_DIM],
            traj_std: vec![1.0; TRAJ_DIM],
            pose_mean: vec![0.0; POSE_DIM],
            pose_std: vec![1.0; POSE_DIM],
        }
    }

    pub fn fit(motions: &[MotionSequence]) -> Self {
        let stats = |arrays: Vec<&Array2<f64>>, width: usize| {
            // Non-finite samples are skipped so a corrupt frame cannot poison the statistics.
            let mut sum = vec![0.0; width];
            let mut sq = vec![0.0; width];
            let mut n = vec![0.0f64; width];
            for a in arrays {
                for row in a.rows() {
                    for (c, v) in row.iter().enumerate().filter(|(_, v)| v.is_finite()) {
                        sum[c] += v;
                        sq[c] += v * v;
                        n[c] += 1.0;
                    }
                }
            }
            let mean: Vec<f64> = sum.iter().zip(&n).map(|(s, n)| s / n.max(1.0)).collect();
            let std = sq
                .iter()
                .zip(&mean)
                .zip(&n)
                .map(|((q, m), n)| (q / n.max(1.0) - m * m).max(0.0).sqrt().max(STD_FLOOR))
                .collect();
            (mean, std)
        };
        let (traj_mean, traj_std) =
            stats(motions.iter().flat_map(|m| [&m.left.trajectory, &m.right.trajectory]).collect(), TRAJ_DIM);
        let (pose_mean, pose_std) = stats(motions.iter().flat_map(|m| [&m.left.pose, &m.right.pose]).collect(), POSE_DIM);
        Self { traj_mean, traj_std, pose_mean, pose_std }
    }

    fn stats(&self, modality: usize) -> (&[f64], &[f64]) {
        if modality == 0 {
            (&self.traj_mean, &self.traj_std)
        } else {
            (&self.pose_mean, &self.pose_std)
        }
    }
}

/// Encoder/decoder pair for one modality: `log2(r)` stride-2 blocks each way.
#[derive(Debug, Clone)]
pub struct ModalityAe {
    enc_in: Conv1d,
    enc_blocks: Vec<Conv1d>,
    enc_out: Conv1d,
    dec_in: Conv1d,
    dec_blocks: Vec<Conv1d>,
    dec_out: Conv1d,
}

impl ModalityAe {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        channels: usize,
        hidden: usize,
        code_dim: usize,
        downsample: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NnError> {
        let blocks = downsample.trailing_zeros() as usize;
        let enc_in = Conv1d::new(store, &format!("{prefix}.enc.in"), channels, hidden, 3, rng)?;
        let enc_blocks = (0..blocks)
            .map(|i| Conv1d::new(store, &format!("{prefix}.enc.down{i}"), hidden, hidden, 3, rng))
            .collect::<Result<_, _>>()?;
        let enc_out = Conv1d::new(store, &format!("{prefix}.enc.out"), hidden, code_dim, 1, rng)?;
        let dec_in = Conv1d::new(store, &format!("{prefix}.dec.in"), code_dim, hidden, 1, rng)?;
        let dec_blocks = (0..blocks)
            .map(|i| Conv1d::new(store, &format!("{prefix}.dec.up{i}"), hidden, hidden, 3, rng))
            .collect::<Result<_, _>>()?;
        let dec_out = Conv1d::new(store, &format!("{prefix}.dec.out"), hidden, channels, 3, rng)?;
        Ok(Self { enc_in, enc_blocks, enc_out, dec_in, dec_blocks, dec_out })
    }

    pub fn load(store: &ParamStore, prefix: &str, downsample: usize) -> Result<Self, NnError> {
        let blocks = downsample.trailing_zeros() as usize;
        Ok(Self {
            enc_in: Conv1d::load(store, &format!("{prefix}.enc.in"))?,
            enc_blocks: (0..blocks).map(|i| Conv1d::load(store, &format!("{prefix}.enc.down{i}"))).collect::<Result<_, _>>()?,
            enc_out: Conv1d::load(store, &format!("{prefix}.enc.out"))?,
            dec_in: Conv1d::load(store, &format!("{prefix}.dec.in"))?,
            dec_blocks: (0..blocks).map(|i| Conv1d::load(store, &format!("{prefix}.dec.up{i}"))).collect::<Result<_, _>>()?,
            dec_out: Conv1d::load(store, &format!("{prefix}.dec.out"))?,
        })
    }

    /// `[B, C, L]` → `[B, d, L/r]`.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut h = self.enc_in.forward(x)?.relu()?;
        for block in &self.enc_blocks {
            h = avg_pool2(&block.forward(&h)?.relu()?)?;
        }
        self.enc_out.forward(&h)
    }

    /// `[B, d, T]` → `[B, C, T·r]`.
    pub fn decode(&self, z: &Tensor) -> Result<Tensor, NnError> {
        let mut h = self.dec_in.forward(z)?.relu()?;
        for block in &self.dec_blocks {
            h = block.forward(&repeat2(&h)?)?.relu()?;
        }
        self.dec_out.forward(&h)
    }
}

/// Differentiable pieces of the VQ objective.
#[derive(Debug, Clone)]
pub struct VqTerms {
    pub rec: Tensor,
    pub codebook: Tensor,
    pub commit: Tensor,
    pub total: Tensor,
    pub indices: Vec<u32>,
    pub latents: Tensor,
}

/// Gathers codebook rows for `[B, d, T]` latents, returning `(indices, quantized [B, d, T])`.
pub fn lookup(latents: &Tensor, codebook: &Tensor) -> Result<(Vec<u32>, Tensor), NnError> {
    let (b, d, t) = latents.dims3()?;
    let flat = latents.transpose(1, 2)?.reshape((b * t, d))?;
    let z = to_array2(&flat)?;
    let cb = to_array2(codebook)?;
    let (idx, _) = quantize(z.view(), cb.view());
    let ids = Tensor::from_vec(idx.clone(), b * t, codebook.device())?;
    let q = codebook.index_select(&ids, 0)?.reshape((b, t, d))?.transpose(1, 2)?;
    Ok((idx, q))
}

/// Reconstruction MSE plus per-stream codebook and commitment terms, for
/// latents `z` (`[S·B, d, T]`, stream-major) against target `x` (`[S·B, C, L]`).
///
/// The decoder sees `z + sg(q − z)`, so the reconstruction gradient reaches `z` unchanged.
pub fn latent_objective(
    ae: &ModalityAe,
    codebook: &Tensor,
    z: &Tensor,
    x: &Tensor,
    streams: usize,
    beta: f64,
) -> Result<VqTerms, NnError> {
    let (indices, q) = lookup(z, codebook)?;
    let st = (z + (&q - z)?.detach())?;
    let rec = (ae.decode(&st)? - x)?.sqr()?.mean_all()?;
    let per_stream = |t: Tensor| -> Result<Tensor, NnError> { Ok(t.sqr()?.reshape((streams, ()))?.mean(1)?.sum_all()?) };
    let codebook_term = per_stream((z.detach() - &q)?)?;
    let commit = (per_stream((z - q.detach())?)? * beta)?;
    let total = ((&rec + &codebook_term)? + &commit)?;
    Ok(VqTerms { rec, codebook: codebook_term, commit, total, indices, latents: z.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VqLoss {
    pub total: f64,
    pub rec: f64,
    pub codebook: f64,
    pub commit: f64,
}

pub struct ShiftModel {
    pub config: ShiftConfig,
    pub norm: Normalizer,
    pub store: ParamStore,
    pub traj: ModalityAe,
    pub pose: ModalityAe,
    /// Per-code assignment counts from the last training epoch.
    pub usage: [Vec<u64>; 2],
    pub corpus_hash: String,
}

pub const TRAJ: usize = 0;
pub const POSE: usize = 1;

impl ShiftModel {
    pub fn new(config: ShiftConfig, norm: Normalizer, dtype: DType) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new(dtype);
        let (h, d, r, k) = (config.hidden, config.code_dim, config.downsample, config.codebook_size);
        let traj = ModalityAe::new(&mut store, "traj", TRAJ_DIM, h, d, r, &mut rng)?;
        let pose = ModalityAe::new(&mut store, "pose", POSE_DIM, h, d, r, &mut rng)?;
        store.uniform("traj.codebook", &[k, d], 1.0 / k as f64, &mut rng)?;
        store.uniform("pose.codebook", &[k, d], 1.0 / k as f64, &mut rng)?;
        Ok(Self { config, norm, store, traj, pose, usage: [vec![0; k], vec![0; k]], corpus_hash: String::new() })
    }

    pub fn ae(&self, modality: usize) -> &ModalityAe {
        if modality == TRAJ {
            &self.traj
        } else {
            &self.pose
        }
    }

    pub fn codebook(&self, modality: usize) -> Result<Tensor, NnError> {
        self.store.get(if modality == TRAJ { "traj.codebook" } else { "pose.codebook" })
    }

    pub fn codebook_array(&self, modality: usize) -> Result<Array2<f64>, NnError> {
        to_array2(&self.codebook(modality)?)
    }

    /// Frames after right-padding `n` to a multiple of the downsample factor.
    pub fn padded_len(&self, n: usize) -> usize {
        n.div_ceil(self.config.downsample) * self.config.downsample
    }

    /// Normalized `[2B, C, L]` input for one modality: left hands first, then right.
    pub fn batch_tensor(&self, motions: &[&MotionSequence], modality: usize) -> Result<Tensor, NnError> {
        let len = motions.first().map(|m| self.padded_len(m.num_frames())).unwrap_or(0);
        let (mean, std) = self.norm.stats(modality);
        let width = mean.len();
        let mut data = Vec::with_capacity(2 * motions.len() * len * width);
        for hand in 0..2 {
            for m in motions {
                if self.padded_len(m.num_frames()) != len {
                    return Err(NnError::Config("batch mixes sequence lengths".into()));
                }
                let track = if hand == 0 { &m.left } else { &m.right };
                let arr = if modality == TRAJ { &track.trajectory } else { &track.pose };
                let n = arr.nrows();
                for f in 0..len {
                    let row = arr.row(f.min(n - 1));
                    data.extend(row.iter().enumerate().map(|(c, v)| (v - mean[c]) / std[c]));
                }
            }
        }
        let t = Tensor::from_vec(data, (2 * motions.len(), len, width), &Device::Cpu)?;
        Ok(t.to_dtype(self.store.dtype())?.transpose(1, 2)?.contiguous()?)
    }

    /// Differentiable VQ terms for one modality over a batch of equal padded length.
    pub fn modality_terms(&self, motions: &[&MotionSequence], modality: usize) -> Result<VqTerms, NnError> {
        let x = self.batch_tensor(motions, modality)?;
        let ae = self.ae(modality);
        let z = ae.encode(&x)?;
        latent_objective(ae, &self.codebook(modality)?, &z, &x, 2, self.config.beta)
    }

    /// Reconstruction MSE is averaged over all 198 normalized channels of every frame.
    pub fn batch_loss(&self, motions: &[&MotionSequence]) -> Result<(Tensor, [VqTerms; 2]), NnError> {
        let t = self.modality_terms(motions, TRAJ)?;
        let p = self.modality_terms(motions, POSE)?;
        let (wt, wp) = (TRAJ_DIM as f64 / (TRAJ_DIM + POSE_DIM) as f64, POSE_DIM as f64 / (TRAJ_DIM + POSE_DIM) as f64);
        let rec = ((&t.rec * wt)? + (&p.rec * wp)?)?;
        let total = (((rec + &t.codebook)? + &t.commit)? + (&p.codebook + &p.commit)?)?;
        Ok((total, [t, p]))
    }

    pub fn vq_loss(&self, m: &MotionSequence) -> Result<VqLoss, NnError> {
        check_len(m)?;
        let (total, [t, p]) = self.batch_loss(&[m])?;
        let s = crate::params::scalar;
        let (wt, wp) = (TRAJ_DIM as f64 / (TRAJ_DIM + POSE_DIM) as f64, POSE_DIM as f64 / (TRAJ_DIM + POSE_DIM) as f64);
        Ok(VqLoss {
            total: s(&total)?,
            rec: wt * s(&t.rec)? + wp * s(&p.rec)?,
            codebook: s(&t.codebook)? + s(&p.codebook)?,
            commit: s(&t.commit)? + s(&p.commit)?,
        })
    }

    /// Four token streams; the motion is right-padded by repeating its last frame.
    pub fn encode(&self, m: &MotionSequence) -> Result<MotionTokens, NnError> {
        check_len(m)?;
        let mut streams: [Vec<u32>; 4] = Default::default();
        for modality in [TRAJ, POSE] {
            let z = self.ae(modality).encode(&self.batch_tensor(&[m], modality)?)?;
            let (idx, _) = lookup(&z, &self.codebook(modality)?)?;
            let t = idx.len() / 2;
            streams[modality] = idx[..t].to_vec();
            streams[2 + modality] = idx[t..].to_vec();
        }
        let [traj_l, pose_l, traj_r, pose_r] = streams;
        Ok(MotionTokens { traj_l, pose_l, traj_r, pose_r })
    }

    /// Normalized `[2, C, T·r]` decoder output for `[2, d, T]` latents of one modality.
    pub fn decode_latents(&self, modality: usize, latents: &Tensor) -> Result<Tensor, NnError> {
        self.ae(modality).decode(latents)
    }

    fn code_latents(&self, modality: usize, left: &[u32], right: &[u32]) -> Result<Tensor, NnError> {
        let k = self.config.codebook_size as u32;
        if let Some(&bad) = left.iter().chain(right).find(|&&i| i >= k) {
            return Err(NnError::Vocabulary(format!("code {bad} outside codebook of size {k}")));
        }
        let ids: Vec<u32> = left.iter().chain(right).copied().collect();
        let t = left.len();
        let ids = Tensor::from_vec(ids, 2 * t, &Device::Cpu)?;
        Ok(self.codebook(modality)?.index_select(&ids, 0)?.reshape((2, t, self.config.code_dim))?.transpose(1, 2)?)
    }

    /// Codebook lookup, decoders, truncation to `original_n` frames.
    pub fn decode(&self, tokens: &MotionTokens, original_n: usize) -> Result<MotionSequence, NnError> {
        let lens = [tokens.traj_l.len(), tokens.pose_l.len(), tokens.traj_r.len(), tokens.pose_r.len()];
        if lens.iter().any(|&l| l != lens[0]) {
            return Err(NnError::Codec(handlm_core::codec::CodecError::UnequalStreams(lens)));
        }
        if tokens.is_empty() {
            return Err(NnError::Empty("no tokens to decode".into()));
        }
        let traj = self.decode_latents(TRAJ, &self.code_latents(TRAJ, &tokens.traj_l, &tokens.traj_r)?)?;
        let pose = self.decode_latents(POSE, &self.code_latents(POSE, &tokens.pose_l, &tokens.pose_r)?)?;
        self.assemble(&traj, &pose, original_n)
    }

    /// Builds a motion from normalized `[2, C, L]` decoder outputs.
    pub fn assemble(&self, traj: &Tensor, pose: &Tensor, original_n: usize) -> Result<MotionSequence, NnError> {
        let to_tracks = |t: &Tensor, modality: usize| -> Result<[Array2<f64>; 2], NnError> {
            let (mean, std) = self.norm.stats(modality);
            let v = t.to_dtype(DType::F64)?.transpose(1, 2)?.to_vec3::<f64>()?;
            let mut out: [Array2<f64>; 2] = Default::default();
            for (h, rows) in v.into_iter().enumerate().take(2) {
                let n = rows.len().min(original_n.max(1));
                let mut a = Array2::zeros((n, mean.len()));
                for (f, row) in rows.into_iter().take(n).enumerate() {
                    for (c, x) in row.into_iter().enumerate() {
                        a[(f, c)] = x * std[c] + mean[c];
                    }
                }
                out[h] = a;
            }
            Ok(out)
        };
        let [tl, tr] = to_tracks(traj, TRAJ)?;
        let [pl, pr] = to_tracks(pose, POSE)?;
        let mut left = HandTrack { trajectory: tl, pose: pl };
        let mut right = HandTrack { trajectory: tr, pose: pr };
        sanitize(&mut left);
        sanitize(&mut right);
        Ok(MotionSequence { fps: self.config.fps, left, right })
    }

    fn metadata(&self) -> Result<BTreeMap<String, String>, NnError> {
        let mut meta = BTreeMap::new();
        meta.insert("kind".into(), "shift-tokenizer".into());
        meta.insert("config".into(), serde_json::to_string(&self.config)?);
        meta.insert("normalizer".into(), serde_json::to_string(&self.norm)?);
        meta.insert("usage".into(), serde_json::to_string(&self.usage)?);
        meta.insert("corpus_hash".into(), self.corpus_hash.clone());
        Ok(meta)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        self.store.save(path, &self.metadata()?)
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let (store, meta) = ParamStore::load(path, DType::F32)?;
        let field = |k: &str| meta.get(k).ok_or_else(|| NnError::Checkpoint(format!("{}: no {k} metadata", path.display())));
        if field("kind")? != "shift-tokenizer" {
            return Err(NnError::Checkpoint(format!("{} is not a tokenizer checkpoint", path.display())));
        }
        let config: ShiftConfig = serde_json::from_str(field("config")?)?;
        config.validate()?;
        let norm: Normalizer = serde_json::from_str(field("normalizer")?)?;
        let usage: [Vec<u64>; 2] = serde_json::from_str(field("usage")?)?;
        let traj = ModalityAe::load(&store, "traj", config.downsample)?;
        let pose = ModalityAe::load(&store, "pose", config.downsample)?;
        let corpus_hash = field("corpus_hash")?.clone();
        Ok(Self { config, norm, store, traj, pose, usage, corpus_hash })
    }
}

fn check_len(m: &MotionSequence) -> Result<(), NnError> {
    if m.num_frames() == 0 {
        return Err(NnError::Empty("motion has no frames".into()));
    }
    Ok(())
}

/// Projects every 6D block back onto a rotation; degenerate blocks become identity.
pub fn sanitize(track: &mut HandTrack) {
    let fix = |s: &mut [f64]| {
        if handlm_core::motion::orthonormalize_rot6d(s).is_err() || s.iter().any(|v| !v.is_finite()) {
            s.copy_from_slice(&IDENTITY_6D);
        }
    };
    for mut row in track.trajectory.rows_mut() {
        let s = row.as_slice_mut().expect("standard layout");
        fix(&mut s[..6]);
        for v in &mut s[6..] {
            if !v.is_finite() {
                *v = 0.0;
            }
        }
    }
    for mut row in track.pose.rows_mut() {
        let s = row.as_slice_mut().expect("standard layout");
        for j in 0..POSE_JOINTS {
            fix(&mut s[6 * j..6 * j + 6]);
        }
    }
}

pub fn to_array2(t: &Tensor) -> Result<Array2<f64>, NnError> {
    let (r, c) = t.dims2()?;
    let v = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    Ok(Array2::from_shape_vec((r, c), v).expect("shape matches"))
}

/// SHA-256 over the f32 frames of every motion, in order.
pub fn corpus_hash(motions: &[MotionSequence]) -> String {
    let mut h = Sha256::new();
    for m in motions {
        h.update((m.num_frames() as u64).to_le_bytes());
        for v in m.flatten().iter() {
            h.update((*v as f32).to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}
