//! Contrastive text-motion feature extractor for retrieval metrics, KID and
//! family classification.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, D};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use handlm_core::annotation::stable_hash;
use handlm_core::motion::FRAME_DIM;
use handlm_core::text::split_words;
use handlm_core::{Family, MotionSequence};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{gelu, Conv1d, Linear};
use crate::params::{scalar, ParamStore};
use crate::shift::to_array2;
use crate::NnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluatorConfig {
    pub feature_dim: usize,
    pub hidden: usize,
    /// Hashed word uni- and bigram buckets of the text encoder.
    pub text_buckets: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Softmax temperature of the contrastive objective.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        Self { feature_dim: 128, hidden: 128, text_buckets: 1024, epochs: 40, batch_size: 64, lr: 1e-3, temperature: 0.1, seed: 0 }
    }
}

/// One matched training pair.
#[derive(Debug, Clone)]
pub struct Pair<'a> {
    pub motion: &'a MotionSequence,
    pub caption: &'a str,
}

const STD_FLOOR: f64 = 1e-2;

pub struct ContrastiveEvaluator {
    pub config: EvaluatorConfig,
    pub store: ParamStore,
    mean: Vec<f64>,
    std: Vec<f64>,
    conv1: Conv1d,
    conv2: Conv1d,
    motion_head: Linear,
    text1: Linear,
    text2: Linear,
    /// Family → unit-norm mean motion embedding.
    pub centroids: BTreeMap<Family, Vec<f64>>,
}

/// L2-normalized counts of hashed word unigrams and bigrams.
pub fn text_features(caption: &str, buckets: usize) -> Vec<f64> {
    let words = split_words(caption);
    let mut v = vec![0.0; buckets];
    for w in &words {
        v[(stable_hash(&[w.as_bytes()]) % buckets as u64) as usize] += 1.0;
    }
    for p in words.windows(2) {
        v[(stable_hash(&[p[0].as_bytes(), b" ", p[1].as_bytes()]) % buckets as u64) as usize] += 1.0;
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn normalize(t: &Tensor) -> Result<Tensor, NnError> {
    let n = (t.sqr()?.sum_keepdim(D::Minus1)? + 1e-12)?.sqrt()?;
    Ok(t.broadcast_div(&n)?)
}

impl ContrastiveEvaluator {
    fn build(config: EvaluatorConfig, store: ParamStore, mean: Vec<f64>, std: Vec<f64>) -> Result<Self, NnError> {
        Ok(Self {
            conv1: Conv1d::load(&store, "motion.conv1")?,
            conv2: Conv1d::load(&store, "motion.conv2")?,
            motion_head: Linear::load(&store, "motion.head")?,
            text1: Linear::load(&store, "text.l1")?,
            text2: Linear::load(&store, "text.l2")?,
            config,
            store,
            mean,
            std,
            centroids: BTreeMap::new(),
        })
    }

    pub fn new(config: EvaluatorConfig, motions: &[&MotionSequence]) -> Result<Self, NnError> {
        if config.feature_dim == 0 || config.hidden == 0 || config.text_buckets == 0 {
            return Err(NnError::Config("evaluator sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new(DType::F32);
        let h = config.hidden;
        Conv1d::new(&mut store, "motion.conv1", FRAME_DIM, h, 5, &mut rng)?;
        Conv1d::new(&mut store, "motion.conv2", h, h, 5, &mut rng)?;
        Linear::new(&mut store, "motion.head", h, config.feature_dim, true, &mut rng)?;
        Linear::new(&mut store, "text.l1", config.text_buckets, h, true, &mut rng)?;
        Linear::new(&mut store, "text.l2", h, config.feature_dim, true, &mut rng)?;
        let (mean, std) = frame_stats(motions);
        Self::build(config, store, mean, std)
    }

    fn motion_tensor(&self, motions: &[&MotionSequence]) -> Result<Tensor, NnError> {
        let n = motions[0].num_frames();
        let mut data = Vec::with_capacity(motions.len() * n * FRAME_DIM);
        for m in motions {
            for row in m.flatten().rows() {
                data.extend(row.iter().enumerate().map(|(c, v)| ((v - self.mean[c]) / self.std[c]) as f32));
            }
        }
        Ok(Tensor::from_vec(data, (motions.len(), n, FRAME_DIM), &Device::Cpu)?.transpose(1, 2)?.contiguous()?)
    }

    /// Unit-norm `[B, F]` embeddings of equal-length motions.
    fn motion_forward(&self, motions: &[&MotionSequence]) -> Result<Tensor, NnError> {
        let x = self.motion_tensor(motions)?;
        let h = gelu(&self.conv1.forward(&x)?)?;
        let h = gelu(&self.conv2.forward(&h)?)?;
        normalize(&self.motion_head.forward(&h.mean(2)?)?)
    }

    fn text_forward(&self, captions: &[&str]) -> Result<Tensor, NnError> {
        let b = self.config.text_buckets;
        let data: Vec<f32> = captions.iter().flat_map(|c| text_features(c, b)).map(|x| x as f32).collect();
        let x = Tensor::from_vec(data, (captions.len(), b), &Device::Cpu)?;
        normalize(&self.text2.forward(&gelu(&self.text1.forward(&x)?)?)?)
    }

    /// Motion embeddings, one row per motion. Motions of different lengths are
    /// embedded in separate groups; empty motions are rejected.
    pub fn embed_motions(&self, motions: &[&MotionSequence]) -> Result<Array2<f64>, NnError> {
        if let Some(m) = motions.iter().find(|m| m.num_frames() == 0) {
            return Err(NnError::Empty(format!("motion with {} frames", m.num_frames())));
        }
        let mut out = Array2::zeros((motions.len(), self.config.feature_dim));
        let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, m) in motions.iter().enumerate() {
            by_len.entry(m.num_frames()).or_default().push(i);
        }
        for idx in by_len.values() {
            for chunk in idx.chunks(64) {
                let group: Vec<&MotionSequence> = chunk.iter().map(|&i| motions[i]).collect();
                let e = to_array2(&self.motion_forward(&group)?)?;
                for (r, &i) in chunk.iter().enumerate() {
                    out.row_mut(i).assign(&e.row(r));
                }
            }
        }
        Ok(out)
    }

    pub fn embed_texts(&self, captions: &[&str]) -> Result<Array2<f64>, NnError> {
        let mut out = Array2::zeros((captions.len(), self.config.feature_dim));
        for (ci, chunk) in captions.chunks(256).enumerate() {
            let e = to_array2(&self.text_forward(chunk)?)?;
            for r in 0..chunk.len() {
                out.row_mut(ci * 256 + r).assign(&e.row(r));
            }
        }
        Ok(out)
    }

    /// Sets each family's centroid to the normalized mean embedding of its motions.
    pub fn fit_centroids(&mut self, labelled: &[(&MotionSequence, Family)]) -> Result<(), NnError> {
        let motions: Vec<&MotionSequence> = labelled.iter().map(|(m, _)| *m).collect();
        let e = self.embed_motions(&motions)?;
        let mut sums: BTreeMap<Family, Vec<f64>> = BTreeMap::new();
        for (row, (_, fam)) in e.rows().into_iter().zip(labelled) {
            let s = sums.entry(*fam).or_insert_with(|| vec![0.0; row.len()]);
            s.iter_mut().zip(row.iter()).for_each(|(a, b)| *a += b);
        }
        for s in sums.values_mut() {
            let n = s.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            s.iter_mut().for_each(|x| *x /= n);
        }
        self.centroids = sums;
        Ok(())
    }

    /// Nearest centroid by cosine similarity; ties go to the earlier family.
    pub fn classify_embedding(&self, e: &[f64]) -> Result<Family, NnError> {
        let mut best: Option<(Family, f64)> = None;
        for (fam, c) in &self.centroids {
            let s: f64 = c.iter().zip(e).map(|(a, b)| a * b).sum();
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((*fam, s));
            }
        }
        best.map(|(f, _)| f).ok_or_else(|| NnError::Config("evaluator has no family centroids".into()))
    }

    pub fn classify_family(&self, motion: &MotionSequence) -> Result<Family, NnError> {
        let e = self.embed_motions(&[motion])?;
        self.classify_embedding(e.row(0).as_slice().expect("contiguous row"))
    }

    /// Hash of parameters, normalizer and centroids; stamped into metric reports.
    pub fn hash(&self) -> Result<String, NnError> {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.store.hash()?.as_bytes());
        h.update(serde_json::to_string(&(&self.mean, &self.std, &self.centroids, &self.config))?.as_bytes());
        Ok(hex::encode(h.finalize()))
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let meta = BTreeMap::from([
            ("kind".to_string(), "evaluator".to_string()),
            ("config".to_string(), serde_json::to_string(&self.config)?),
            ("stats".to_string(), serde_json::to_string(&(&self.mean, &self.std))?),
            ("centroids".to_string(), serde_json::to_string(&self.centroids)?),
        ]);
        self.store.save(path, &meta)
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let (store, meta) = ParamStore::load(path, DType::F32)?;
        let field = |k: &str| meta.get(k).ok_or_else(|| NnError::Checkpoint(format!("{}: no {k} metadata", path.display())));
        if field("kind")? != "evaluator" {
            return Err(NnError::Checkpoint(format!("{} is not an evaluator checkpoint", path.display())));
        }
        let config: EvaluatorConfig = serde_json::from_str(field("config")?)?;
        let (mean, std): (Vec<f64>, Vec<f64>) = serde_json::from_str(field("stats")?)?;
        if mean.len() != FRAME_DIM || std.len() != FRAME_DIM {
            return Err(NnError::Checkpoint("evaluator statistics have the wrong width".into()));
        }
        let mut ev = Self::build(config, store, mean, std)?;
        ev.centroids = serde_json::from_str(field("centroids")?)?;
        Ok(ev)
    }
}

fn frame_stats(motions: &[&MotionSequence]) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0.0; FRAME_DIM];
    let mut sq = vec![0.0; FRAME_DIM];
    let mut n = 0.0;
    for m in motions {
        for row in m.flatten().rows() {
            for (c, v) in row.iter().enumerate() {
                sum[c] += v;
                sq[c] += v * v;
            }
            n += 1.0;
        }
    }
    if n == 0.0 {
        return (vec![0.0; FRAME_DIM], vec![1.0; FRAME_DIM]);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sq.iter().zip(&mean).map(|(q, m)| (q / n - m * m).max(0.0).sqrt().max(STD_FLOOR)).collect();
    (mean, std)
}

/// Symmetric InfoNCE over a batch of matched embeddings.
fn info_nce(text: &Tensor, motion: &Tensor, temperature: f64) -> Result<Tensor, NnError> {
    let b = text.dim(0)?;
    let logits = (motion.matmul(&text.t()?)? / temperature)?;
    let labels = Tensor::arange(0u32, b as u32, &Device::Cpu)?.reshape((b, 1))?;
    let ce = |l: &Tensor| -> Result<Tensor, NnError> {
        let lp = candle_nn::ops::log_softmax(l, D::Minus1)?;
        Ok(lp.gather(&labels, 1)?.mean_all()?.neg()?)
    };
    Ok(((ce(&logits)? + ce(&logits.t()?.contiguous()?)?)? * 0.5)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorLog {
    pub epoch_loss: Vec<f64>,
}

/// Trains on matched pairs and fits family centroids on the labelled motions.
pub fn train_evaluator(
    pairs: &[Pair<'_>],
    labelled: &[(&MotionSequence, Family)],
    config: &EvaluatorConfig,
) -> Result<(ContrastiveEvaluator, EvaluatorLog), NnError> {
    let mut distinct: Vec<&str> = pairs.iter().map(|p| p.caption).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(NnError::Config(format!("evaluator training needs at least 2 distinct captions, got {}", distinct.len())));
    }
    if config.batch_size < 2 || !(config.lr > 0.0) || !(config.temperature > 0.0) {
        return Err(NnError::Config("batch_size ≥ 2, lr > 0 and temperature > 0 required".into()));
    }
    let motions: Vec<&MotionSequence> = pairs.iter().map(|p| p.motion).collect();
    let mut ev = ContrastiveEvaluator::new(config.clone(), &motions)?;
    let mut opt = AdamW::new(ev.store.vars(), ParamsAdamW { lr: config.lr, weight_decay: 0.0, ..Default::default() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xe7a1);
    let mut log = EvaluatorLog { epoch_loss: Vec::new() };
    for _ in 0..config.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut rng);
        // Batches share a sequence length so motions stack.
        order.sort_by_key(|&i| pairs[i].motion.num_frames());
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in order {
            match groups.last_mut() {
                Some(g) if g.len() < config.batch_size && pairs[g[0]].motion.num_frames() == pairs[i].motion.num_frames() => g.push(i),
                _ => groups.push(vec![i]),
            }
        }
        groups.shuffle(&mut rng);
        let (mut sum, mut n) = (0.0f64, 0.0f64);
        for g in groups.iter().filter(|g| g.len() >= 2) {
            let ms: Vec<&MotionSequence> = g.iter().map(|&i| pairs[i].motion).collect();
            let cs: Vec<&str> = g.iter().map(|&i| pairs[i].caption).collect();
            let loss = info_nce(&ev.text_forward(&cs)?, &ev.motion_forward(&ms)?, config.temperature)?;
            let v = scalar(&loss)?;
            if !v.is_finite() {
                return Err(NnError::Diverged { stage: "evaluator".into(), epoch: log.epoch_loss.len(), checkpoint: None });
            }
            opt.backward_step(&loss)?;
            sum += v;
            n += 1.0;
        }
        log.epoch_loss.push(sum / n.max(1.0));
    }
    ev.fit_centroids(labelled)?;
    Ok((ev, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use handlm_core::datagen::generate_corpus;

    #[test]
    fn text_features_are_unit_and_order_sensitive() {
        let a = text_features("someone waves the left hand", 64);
        let n: f64 = a.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert_ne!(a, text_features("hand left the waves someone", 64));
        assert!(text_features("", 64).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn info_nce_on_perfect_alignment_is_small() {
        let e = Tensor::new(&[[1f32, 0.0], [0.0, 1.0]], &Device::Cpu).unwrap();
        let perfect = scalar(&info_nce(&e, &e, 0.05).unwrap()).unwrap();
        let swapped = Tensor::new(&[[0f32, 1.0], [1.0, 0.0]], &Device::Cpu).unwrap();
        let wrong = scalar(&info_nce(&e, &swapped, 0.05).unwrap()).unwrap();
        assert!(perfect < 1e-6 && wrong > 10.0);
    }

    #[test]
    fn training_is_deterministic_and_checkpoints_round_trip() {
        let recs = generate_corpus(16, 3);
        let pairs: Vec<Pair> = recs.iter().map(|r| Pair { motion: &r.motion, caption: &r.caption_high }).collect();
        let labelled: Vec<(&MotionSequence, Family)> = recs.iter().map(|r| (&r.motion, r.family().unwrap())).collect();
        let cfg = EvaluatorConfig { epochs: 2, batch_size: 8, feature_dim: 16, hidden: 16, text_buckets: 64, ..Default::default() };
        let (a, _) = train_evaluator(&pairs, &labelled, &cfg).unwrap();
        let (b, _) = train_evaluator(&pairs, &labelled, &cfg).unwrap();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ev.safetensors");
        a.save(&p).unwrap();
        let back = ContrastiveEvaluator::load(&p).unwrap();
        assert_eq!(back.hash().unwrap(), a.hash().unwrap());
        let e = a.embed_motions(&[&recs[0].motion]).unwrap();
        let n: f64 = e.row(0).iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-5);
        a.classify_family(&recs[0].motion).unwrap();
        let same: Vec<Pair> = recs.iter().map(|r| Pair { motion: &r.motion, caption: "one caption" }).collect();
        assert!(train_evaluator(&same, &labelled, &cfg).is_err());
    }
}
