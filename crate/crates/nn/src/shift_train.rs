use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use handlm_core::motion::MotionSequence;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::params::scalar;
use crate::shift::{corpus_hash, to_array2, Normalizer, ShiftConfig, ShiftModel, POSE, TRAJ};
use crate::NnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftTrainConfig {
    pub model: ShiftConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Replace codes unused during an epoch with random encoder outputs.
    pub reseed_dead: bool,
}

impl Default for ShiftTrainConfig {
    fn default() -> Self {
        Self { model: ShiftConfig::desk(), epochs: 30, batch_size: 16, lr: 2e-3, reseed_dead: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub rec: f64,
    pub perplexity_traj: f64,
    pub perplexity_pose: f64,
    pub reseeded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftTrainLog {
    /// Hard-quantized reconstruction MSE of the untrained model over the corpus.
    pub initial_rec: f64,
    pub final_rec: f64,
    pub epochs: Vec<EpochLog>,
}

impl ShiftTrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,rec,perplexity_traj,perplexity_pose,reseeded\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.loss, e.rec, e.perplexity_traj, e.perplexity_pose, e.reseeded
            ));
        }
        out
    }
}

/// exp(entropy) of a usage histogram; 1 when every assignment hits one code.
pub fn perplexity(usage: &[u64]) -> f64 {
    let total: u64 = usage.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let h: f64 = usage
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    h.exp()
}

/// Batches of indices sharing one padded length, order fixed by `rng`.
fn batches(model: &ShiftModel, data: &[MotionSequence], size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| model.padded_len(data[i].num_frames()));
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match out.last_mut() {
            Some(b) if b.len() < size && model.padded_len(data[b[0]].num_frames()) == model.padded_len(data[i].num_frames()) => {
                b.push(i)
            }
            _ => out.push(vec![i]),
        }
    }
    out.shuffle(rng);
    out
}

/// Hard-quantized reconstruction MSE over a corpus, in normalized units.
pub fn reconstruction_mse(model: &ShiftModel, data: &[MotionSequence]) -> Result<f64, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut sum = 0.0;
    let mut frames = 0.0;
    for b in batches(model, data, 32, &mut rng) {
        let refs: Vec<&MotionSequence> = b.iter().map(|&i| &data[i]).collect();
        let (_, [t, p]) = model.batch_loss(&refs)?;
        let n = refs.len() as f64;
        let w = handlm_core::motion::TRAJ_DIM as f64 / handlm_core::motion::HAND_DIM as f64;
        sum += n * (w * scalar(&t.rec)? + (1.0 - w) * scalar(&p.rec)?);
        frames += n;
    }
    Ok(sum / frames.max(1.0))
}

/// Trains a tokenizer from scratch. On a non-finite loss the parameters of the
/// last finished epoch are restored, written to `checkpoint` if given, and
/// [`NnError::Diverged`] is returned.
pub fn train_tokenizer(
    data: &[MotionSequence],
    config: &ShiftTrainConfig,
    checkpoint: Option<&Path>,
) -> Result<(ShiftModel, ShiftTrainLog), NnError> {
    if data.is_empty() {
        return Err(NnError::Empty("tokenizer training needs at least one motion".into()));
    }
    if let Some(m) = data.iter().find(|m| m.num_frames() == 0) {
        return Err(NnError::Empty(format!("motion with {} frames", m.num_frames())));
    }
    if config.batch_size == 0 || !(config.lr > 0.0) {
        return Err(NnError::Config("batch_size and lr must be positive".into()));
    }
    let mut model = ShiftModel::new(config.model.clone(), Normalizer::fit(data), DType::F32)?;
    model.corpus_hash = corpus_hash(data);
    let mut rng = ChaCha8Rng::seed_from_u64(config.model.seed ^ 0x5eed);
    let mut opt = AdamW::new(model.store.vars(), ParamsAdamW { lr: config.lr, weight_decay: 0.0, ..Default::default() })?;
    let initial_rec = reconstruction_mse(&model, data)?;
    let mut log = ShiftTrainLog { initial_rec, final_rec: f64::NAN, epochs: Vec::new() };
    let mut last_good = model.store.snapshot()?;
    let k = config.model.codebook_size;
    const POOL: usize = 4096;

    for epoch in 0..config.epochs {
        let mut usage = [vec![0u64; k], vec![0u64; k]];
        // Reservoir of encoder outputs per modality for dead-code reseeding.
        let mut pool: [Vec<Vec<f64>>; 2] = Default::default();
        let mut seen = [0usize; 2];
        let (mut loss_sum, mut rec_sum, mut count) = (0.0, 0.0, 0.0);
        for batch in batches(&model, data, config.batch_size, &mut rng) {
            let refs: Vec<&MotionSequence> = batch.iter().map(|&i| &data[i]).collect();
            let (loss, terms) = model.batch_loss(&refs)?;
            let lv = scalar(&loss)?;
            if !lv.is_finite() {
                model.store.restore(&last_good)?;
                let saved = save_last_good(&model, checkpoint)?;
                return Err(NnError::Diverged { stage: "tokenizer".into(), epoch, checkpoint: saved });
            }
            opt.backward_step(&loss)?;
            let w = handlm_core::motion::TRAJ_DIM as f64 / handlm_core::motion::HAND_DIM as f64;
            rec_sum += w * scalar(&terms[TRAJ].rec)? + (1.0 - w) * scalar(&terms[POSE].rec)?;
            loss_sum += lv;
            count += 1.0;
            for modality in [TRAJ, POSE] {
                for &i in &terms[modality].indices {
                    usage[modality][i as usize] += 1;
                }
                if config.reseed_dead {
                    let z = &terms[modality].latents;
                    let (b, d, t) = z.dims3()?;
                    let rows = to_array2(&z.detach().transpose(1, 2)?.reshape((b * t, d))?)?;
                    for row in rows.rows() {
                        seen[modality] += 1;
                        if pool[modality].len() < POOL {
                            pool[modality].push(row.to_vec());
                        } else {
                            let j = rng.gen_range(0..seen[modality]);
                            if j < POOL {
                                pool[modality][j] = row.to_vec();
                            }
                        }
                    }
                }
            }
        }
        let mut reseeded = 0;
        if config.reseed_dead && epoch + 1 < config.epochs {
            for modality in [TRAJ, POSE] {
                let dead: Vec<usize> = (0..k).filter(|&c| usage[modality][c] == 0).collect();
                if dead.is_empty() || pool[modality].is_empty() {
                    continue;
                }
                let mut cb = model.codebook_array(modality)?;
                for &c in &dead {
                    let src = &pool[modality][rng.gen_range(0..pool[modality].len())];
                    for (j, v) in src.iter().enumerate() {
                        cb[(c, j)] = *v;
                    }
                }
                reseeded += dead.len();
                let name = if modality == TRAJ { "traj.codebook" } else { "pose.codebook" };
                let t = Tensor::from_vec(cb.iter().copied().collect::<Vec<f64>>(), cb.dim(), &candle_core::Device::Cpu)?;
                model.store.set(name, &t)?;
            }
        }
        log.epochs.push(EpochLog {
            epoch,
            loss: loss_sum / count,
            rec: rec_sum / count,
            perplexity_traj: perplexity(&usage[TRAJ]),
            perplexity_pose: perplexity(&usage[POSE]),
            reseeded,
        });
        model.usage = usage;
        if !model.store.all_finite()? {
            model.store.restore(&last_good)?;
            let saved = save_last_good(&model, checkpoint)?;
            return Err(NnError::Diverged { stage: "tokenizer".into(), epoch, checkpoint: saved });
        }
        last_good = model.store.snapshot()?;
        log::debug!("tokenizer epoch {epoch}: loss {:.5} rec {:.5}", loss_sum / count, rec_sum / count);
    }
    log.final_rec = reconstruction_mse(&model, data)?;
    if let Some(p) = checkpoint {
        model.save(p)?;
    }
    Ok((model, log))
}

fn save_last_good(model: &ShiftModel, checkpoint: Option<&Path>) -> Result<Option<PathBuf>, NnError> {
    match checkpoint {
        Some(p) => {
            model.save(p)?;
            Ok(Some(p.to_path_buf()))
        }
        None => Ok(None),
    }
}

/// Codebook perplexity of a trained model over a corpus, per modality.
pub fn corpus_perplexity(model: &ShiftModel, data: &[MotionSequence]) -> Result<[f64; 2], NnError> {
    let k = model.config.codebook_size;
    let mut usage = [vec![0u64; k], vec![0u64; k]];
    for m in data {
        let t = model.encode(m)?;
        for &i in t.traj_l.iter().chain(&t.traj_r) {
            usage[TRAJ][i as usize] += 1;
        }
        for &i in t.pose_l.iter().chain(&t.pose_r) {
            usage[POSE][i as usize] += 1;
        }
    }
    Ok([perplexity(&usage[TRAJ]), perplexity(&usage[POSE])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use handlm_core::datagen::generate_corpus;

    fn tiny() -> ShiftTrainConfig {
        ShiftTrainConfig {
            model: ShiftConfig { codebook_size: 16, code_dim: 4, hidden: 8, seed: 3, ..ShiftConfig::default() },
            epochs: 2,
            batch_size: 4,
            lr: 1e-3,
            reseed_dead: true,
        }
    }

    #[test]
    fn perplexity_values() {
        assert_eq!(perplexity(&[5, 0, 0]), 1.0);
        assert!((perplexity(&[1, 1, 1, 1]) - 4.0).abs() < 1e-12);
        assert_eq!(perplexity(&[0, 0]), 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<MotionSequence> = generate_corpus(8, 2).into_iter().map(|r| r.motion).collect();
        let (a, la) = train_tokenizer(&data, &tiny(), None).unwrap();
        let (b, lb) = train_tokenizer(&data, &tiny(), None).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a.store.hash().unwrap(), b.store.hash().unwrap());
        assert_eq!(la.epochs.len(), 2);
    }

    #[test]
    fn non_finite_input_aborts_with_last_good_checkpoint() {
        let mut data: Vec<MotionSequence> = generate_corpus(4, 2).into_iter().map(|r| r.motion).collect();
        data[1].left.trajectory[(3, 7)] = f64::NAN;
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("last.safetensors");
        match train_tokenizer(&data, &tiny(), Some(&ck)) {
            Err(NnError::Diverged { epoch, checkpoint, .. }) => {
                assert_eq!(epoch, 0);
                let model = ShiftModel::load(checkpoint.as_deref().unwrap()).unwrap();
                assert!(model.store.all_finite().unwrap());
            }
            other => panic!("expected divergence, got {:?}", other.map(|(_, l)| l)),
        }
        assert!(train_tokenizer(&[], &tiny(), None).is_err());
    }
}
