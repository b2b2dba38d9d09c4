//! Three-stage training: pretraining, geometric refinement, instruction tuning.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use handlm_core::codec::MotionTokens;
use handlm_core::{MotionSequence, SequenceRecord};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{batches, example, Example, InstructionTemplates, Task};
use super::gumbel::{gumbel_noise, gumbel_softmax, motion_mse, slot_logits, soft_decode_tensors};
use super::{nll, LanguageModel};
use crate::params::scalar;
use crate::shift::{ShiftModel, POSE, TRAJ};
use crate::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Refine,
    Instruct,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Pretrain, Stage::Refine, Stage::Instruct];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Refine => "refine",
            Stage::Instruct => "instruct",
        }
    }

    pub fn parse(s: &str) -> Result<Self, NnError> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| NnError::Config(format!("unknown stage {s:?} (pretrain, refine, instruct)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Weight of the language-modeling loss.
    pub alpha: f64,
    /// Weight of the motion reconstruction loss.
    pub lambda: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Straight-through one-hot samples instead of soft ones.
    pub hard: bool,
    /// Fraction of motion ids hidden in masked-completion sources.
    pub mask_ratio: f64,
    /// Share of refine-stage motion examples that are text-to-motion; the rest are masked completion.
    pub t2m_fraction: f64,
    pub seed: u64,
}

impl StageConfig {
    pub fn pretrain() -> Self {
        Self {
            stage: Stage::Pretrain,
            epochs: 25,
            lr: 1e-3,
            batch_size: 32,
            alpha: 1.0,
            lambda: 0.0,
            tau_start: 2.0,
            tau_end: 0.5,
            hard: false,
            mask_ratio: 0.3,
            t2m_fraction: 0.7,
            seed: 0,
        }
    }

    pub fn refine() -> Self {
        Self { stage: Stage::Refine, epochs: 10, lr: 2e-4, alpha: 0.5, lambda: 0.5, ..Self::pretrain() }
    }

    pub fn instruct() -> Self {
        Self { stage: Stage::Instruct, epochs: 15, lr: 2e-4, ..Self::pretrain() }
    }

    pub fn for_stage(stage: Stage) -> Self {
        match stage {
            Stage::Pretrain => Self::pretrain(),
            Stage::Refine => Self::refine(),
            Stage::Instruct => Self::instruct(),
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.alpha >= 0.0 && self.lambda >= 0.0) {
            return Err(NnError::Config(format!("loss weights must be non-negative (alpha {}, lambda {})", self.alpha, self.lambda)));
        }
        if !(self.tau_start > 0.0 && self.tau_end > 0.0) {
            return Err(NnError::Config("gumbel temperatures must be positive".into()));
        }
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return Err(NnError::Config("lr and batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) || !(0.0..=1.0).contains(&self.t2m_fraction) {
            return Err(NnError::Config("mask_ratio and t2m_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Exponential decay from `tau_start` at the first epoch to `tau_end` at the last.
    pub fn tau(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.tau_start;
        }
        let frac = epoch.min(self.epochs - 1) as f64 / (self.epochs - 1) as f64;
        self.tau_start * (self.tau_end / self.tau_start).powf(frac)
    }
}

/// Training records with their frozen-tokenizer codes.
#[derive(Debug, Clone)]
pub struct LmCorpus {
    pub records: Vec<SequenceRecord>,
    pub tokens: Vec<MotionTokens>,
}

impl LmCorpus {
    pub fn encode(records: Vec<SequenceRecord>, shift: &ShiftModel) -> Result<Self, NnError> {
        let tokens = records.iter().map(|r| shift.encode(&r.motion)).collect::<Result<_, _>>()?;
        Ok(Self { records, tokens })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Pretraining pairs: one text-to-motion and one motion-to-text per record.
    pub fn pretrain_examples(&self, model: &LanguageModel, templates: &InstructionTemplates) -> Result<Vec<Example>, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut out = Vec::with_capacity(2 * self.len());
        for (i, (r, t)) in self.records.iter().zip(&self.tokens).enumerate() {
            out.push(example(Task::TextToMotion, &templates.pretrain_t2m, &r.caption_high, t, i, &model.vocab, 0.0, &mut rng)?);
            out.push(example(Task::MotionToText, &templates.pretrain_m2t, &r.caption_high, t, i, &model.vocab, 0.0, &mut rng)?);
        }
        Ok(out)
    }

    fn refine_examples(
        &self,
        model: &LanguageModel,
        templates: &InstructionTemplates,
        cfg: &StageConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Example>, NnError> {
        let mut out = Vec::with_capacity(2 * self.len());
        for (i, (r, t)) in self.records.iter().zip(&self.tokens).enumerate() {
            let (task, tpl) = if rng.gen_bool(cfg.t2m_fraction) {
                (Task::TextToMotion, &templates.pretrain_t2m)
            } else {
                (Task::MaskedCompletion, &templates.masked[0])
            };
            out.push(example(task, tpl, &r.caption_high, t, i, &model.vocab, cfg.mask_ratio, rng)?);
            out.push(example(Task::MotionToText, &templates.pretrain_m2t, &r.caption_high, t, i, &model.vocab, 0.0, rng)?);
        }
        Ok(out)
    }

    fn instruct_examples(
        &self,
        model: &LanguageModel,
        templates: &InstructionTemplates,
        cfg: &StageConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Example>, NnError> {
        let mut out = Vec::with_capacity(3 * self.len());
        for (i, (r, t)) in self.records.iter().zip(&self.tokens).enumerate() {
            for task in Task::ALL {
                let tpl = templates.for_task(task).choose(rng).expect("validated templates");
                out.push(example(task, tpl, &r.caption_high, t, i, &model.vocab, cfg.mask_ratio, rng)?);
            }
        }
        Ok(out)
    }
}

/// Loss value and its parts, all before weighting.
#[derive(Debug, Clone)]
pub struct RefineLoss {
    pub total: Tensor,
    pub lm: Tensor,
    pub rec: Option<Tensor>,
}

/// `α·L_LM + λ·L_rec` from teacher-forced logits. Targets must be motion
/// streams of equal length; `motions[i]` is the ground truth of `targets[i]`.
#[allow(clippy::too_many_arguments)]
pub fn refine_objective(
    model: &LanguageModel,
    shift: &ShiftModel,
    logits: &Tensor,
    targets: &[Vec<u32>],
    motions: &[&MotionSequence],
    alpha: f64,
    lambda: f64,
    tau: f64,
    noise: Option<&Tensor>,
    hard: bool,
) -> Result<RefineLoss, NnError> {
    let lm = nll(logits, targets, model.vocab.pad())?;
    if lambda == 0.0 {
        return Ok(RefineLoss { total: (&lm * alpha)?, lm, rec: None });
    }
    if motions.len() != targets.len() {
        return Err(NnError::Config(format!("{} targets but {} ground-truth motions", targets.len(), motions.len())));
    }
    let len = targets[0].len();
    if targets.iter().any(|t| t.len() != len || t.first() != Some(&model.vocab.som())) || len < 6 || (len - 2) % 4 != 0 {
        return Err(NnError::Config("reconstruction needs equal-length motion-stream targets".into()));
    }
    let steps = (len - 2) / 4;
    if motions.iter().any(|m| shift.padded_len(m.num_frames()) != steps * shift.config.downsample) {
        return Err(NnError::Config("ground-truth motion length does not match its token stream".into()));
    }
    let sl = slot_logits(logits, &model.vocab, steps)?;
    let w = gumbel_softmax(&sl, tau, noise, hard)?;
    let (traj, pose) = soft_decode_tensors(&w, shift)?;
    let gt_t = shift.batch_tensor(motions, TRAJ)?;
    let gt_p = shift.batch_tensor(motions, POSE)?;
    let rec = motion_mse(&traj, &pose, &gt_t, &gt_p)?.to_dtype(lm.dtype())?;
    let total = ((&lm * alpha)? + (&rec * lambda)?)?;
    Ok(RefineLoss { total, lm, rec: Some(rec) })
}

/// One refinement loss evaluation on a batch. Masked-completion batches use
/// `α = 0`; motion-to-text batches fall back to plain cross-entropy.
pub fn refine_step(
    model: &LanguageModel,
    shift: &ShiftModel,
    batch: &[&Example],
    motions: &[&MotionSequence],
    cfg: &StageConfig,
    tau: f64,
    noise: Option<&Tensor>,
) -> Result<RefineLoss, NnError> {
    let first = batch.first().ok_or_else(|| NnError::Empty("empty batch".into()))?.task;
    if batch.iter().any(|e| e.task != first) {
        return Err(NnError::Config("refine batch mixes tasks".into()));
    }
    let sources: Vec<Vec<u32>> = batch.iter().map(|e| e.source.clone()).collect();
    let targets: Vec<Vec<u32>> = batch.iter().map(|e| e.target.clone()).collect();
    let logits = model.forward(&sources, &targets)?;
    match first {
        Task::MotionToText => refine_objective(model, shift, &logits, &targets, motions, 1.0, 0.0, tau, None, false),
        Task::TextToMotion => refine_objective(model, shift, &logits, &targets, motions, cfg.alpha, cfg.lambda, tau, noise, cfg.hard),
        Task::MaskedCompletion => refine_objective(model, shift, &logits, &targets, motions, 0.0, cfg.lambda, tau, noise, cfg.hard),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmEpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub lm: f64,
    pub rec: f64,
    pub tau: f64,
    pub val_ce: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: Stage,
    /// Validation cross-entropy before the first update.
    pub initial_val_ce: f64,
    pub epochs: Vec<LmEpochLog>,
}

impl StageLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("stage,epoch,split,loss,lm,rec,tau\n");
        let st = self.stage.name();
        s.push_str(&format!("{st},-1,val,{},{},,\n", self.initial_val_ce, self.initial_val_ce));
        for e in &self.epochs {
            s.push_str(&format!("{st},{},train,{},{},{},{}\n", e.epoch, e.loss, e.lm, e.rec, e.tau));
            s.push_str(&format!("{st},{},val,{},{},,\n", e.epoch, e.val_ce, e.val_ce));
        }
        s
    }
}

/// Mean cross-entropy over examples, batched.
pub fn mean_ce(model: &LanguageModel, examples: &[Example], batch_size: usize) -> Result<f64, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut sum, mut n) = (0.0, 0.0);
    for b in batches(examples, batch_size.max(1), &mut rng) {
        let src: Vec<Vec<u32>> = b.iter().map(|&i| examples[i].source.clone()).collect();
        let tgt: Vec<Vec<u32>> = b.iter().map(|&i| examples[i].target.clone()).collect();
        let positions: usize = tgt.iter().map(Vec::len).sum();
        sum += scalar(&model.lm_loss(&src, &tgt)?)? * positions as f64;
        n += positions as f64;
    }
    Ok(sum / n.max(1.0))
}

/// Trains `model` through one stage. The tokenizer is only read. On a
/// non-finite loss the last finished epoch is restored and saved to
/// `checkpoint` if given.
pub fn train_stage(
    model: &mut LanguageModel,
    shift: &ShiftModel,
    train: &LmCorpus,
    val: &LmCorpus,
    templates: &InstructionTemplates,
    cfg: &StageConfig,
    checkpoint: Option<&Path>,
) -> Result<StageLog, NnError> {
    cfg.validate()?;
    templates.validate()?;
    if train.is_empty() {
        return Err(NnError::Empty("language-model training needs records".into()));
    }
    if shift.config.codebook_size != model.vocab.codebook_size {
        return Err(NnError::Vocabulary(format!(
            "tokenizer has {} codes but the vocabulary expects {}",
            shift.config.codebook_size, model.vocab.codebook_size
        )));
    }
    let shift_hash = shift.store.hash()?;
    let val_examples = val.pretrain_examples(model, templates)?;
    let val_ce = |m: &LanguageModel| if val_examples.is_empty() { Ok(f64::NAN) } else { mean_ce(m, &val_examples, 64) };
    let mut log = StageLog { stage: cfg.stage, initial_val_ce: val_ce(model)?, epochs: Vec::new() };
    let mut opt = AdamW::new(model.store.vars(), ParamsAdamW { lr: cfg.lr, weight_decay: 0.0, ..Default::default() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ model.config.seed.rotate_left(17) ^ 0x1a2b);
    let pretrain = train.pretrain_examples(model, templates)?;
    let mut last_good = model.store.snapshot()?;

    for epoch in 0..cfg.epochs {
        let tau = cfg.tau(epoch);
        let examples = match cfg.stage {
            Stage::Pretrain => pretrain.clone(),
            Stage::Refine => train.refine_examples(model, templates, cfg, &mut rng)?,
            Stage::Instruct => train.instruct_examples(model, templates, cfg, &mut rng)?,
        };
        let (mut loss_sum, mut lm_sum, mut rec_sum, mut count, mut rec_count) = (0.0, 0.0, 0.0, 0.0f64, 0.0f64);
        for b in batches(&examples, cfg.batch_size, &mut rng) {
            let batch: Vec<&Example> = b.iter().map(|&i| &examples[i]).collect();
            let loss = if cfg.stage == Stage::Refine {
                let motions: Vec<&MotionSequence> = batch.iter().map(|e| &train.records[e.record].motion).collect();
                let noise = if batch[0].task == Task::MotionToText {
                    None
                } else {
                    let steps = (batch[0].target.len() - 2) / 4;
                    Some(gumbel_noise(&[batch.len(), steps, 4, model.vocab.codebook_size], model.dtype(), &mut rng)?)
                };
                refine_step(model, shift, &batch, &motions, cfg, tau, noise.as_ref())?
            } else {
                let src: Vec<Vec<u32>> = batch.iter().map(|e| e.source.clone()).collect();
                let tgt: Vec<Vec<u32>> = batch.iter().map(|e| e.target.clone()).collect();
                let lm = model.lm_loss(&src, &tgt)?;
                RefineLoss { total: lm.clone(), lm, rec: None }
            };
            let lv = scalar(&loss.total)?;
            if !lv.is_finite() {
                return Err(diverged(model, cfg, &shift_hash, &last_good, epoch, checkpoint)?);
            }
            opt.backward_step(&loss.total)?;
            loss_sum += lv;
            lm_sum += scalar(&loss.lm)?;
            if let Some(r) = &loss.rec {
                rec_sum += scalar(r)?;
                rec_count += 1.0;
            }
            count += 1.0;
        }
        if !model.store.all_finite()? {
            return Err(diverged(model, cfg, &shift_hash, &last_good, epoch, checkpoint)?);
        }
        last_good = model.store.snapshot()?;
        let entry = LmEpochLog {
            epoch,
            loss: loss_sum / count.max(1.0),
            lm: lm_sum / count.max(1.0),
            rec: if rec_count > 0.0 { rec_sum / rec_count } else { 0.0 },
            tau,
            val_ce: val_ce(model)?,
        };
        log::debug!("{} epoch {epoch}: loss {:.4} val {:.4}", cfg.stage.name(), entry.loss, entry.val_ce);
        log.epochs.push(entry);
    }
    if shift.store.hash()? != shift_hash {
        return Err(NnError::Checkpoint("tokenizer parameters changed during language-model training".into()));
    }
    if let Some(p) = checkpoint {
        model.save(p, &stage_metadata(cfg, &shift_hash)?)?;
    }
    Ok(log)
}

pub fn stage_metadata(cfg: &StageConfig, shift_hash: &str) -> Result<BTreeMap<String, String>, NnError> {
    Ok(BTreeMap::from([
        ("stage".to_string(), cfg.stage.name().to_string()),
        ("stage_config".to_string(), serde_json::to_string(cfg)?),
        ("tokenizer_hash".to_string(), shift_hash.to_string()),
    ]))
}

fn diverged(
    model: &LanguageModel,
    cfg: &StageConfig,
    shift_hash: &str,
    last_good: &BTreeMap<String, Tensor>,
    epoch: usize,
    checkpoint: Option<&Path>,
) -> Result<NnError, NnError> {
    model.store.restore(last_good)?;
    let saved: Option<PathBuf> = match checkpoint {
        Some(p) => {
            model.save(p, &stage_metadata(cfg, shift_hash)?)?;
            Some(p.to_path_buf())
        }
        None => None,
    };
    Ok(NnError::Diverged { stage: cfg.stage.name().into(), epoch, checkpoint: saved })
}

/// Convenience for tests and tools: a fresh model whose vocabulary covers the corpus.
pub fn new_model(
    train: &LmCorpus,
    templates: &InstructionTemplates,
    shift: &ShiftModel,
    config: super::LmConfig,
    dtype: DType,
) -> Result<LanguageModel, NnError> {
    let vocab = super::data::build_vocabulary(&train.records, templates, shift.config.codebook_size)?;
    LanguageModel::new(config, vocab, dtype)
}
