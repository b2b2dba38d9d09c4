//! `train-tokenizer`, `train-lm`.

use std::fs;
use std::path::{Path, PathBuf};

use candle_core::DType;
use handlm_core::dataset::read_dataset;
use handlm_core::{MotionSequence, SequenceRecord};
use handlm_nn::lm::train::{new_model, train_stage, LmCorpus, Stage};
use handlm_nn::lm::LmConfig;
use handlm_nn::shift_train::{corpus_perplexity, train_tokenizer as fit_tokenizer};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ensure_parent, lm_file, load_lm, load_tokenizer, tokenizer_path, TOKENIZER_FILE};
use crate::config::{derive_seed, RunConfig};
use crate::provenance::Provenance;
use crate::{CliError, TrainLmArgs, TrainTokenizerArgs};

/// `<stem>.log.csv` next to a checkpoint.
fn log_path(checkpoint: &Path) -> PathBuf {
    let stem = checkpoint.file_stem().unwrap_or_default().to_string_lossy();
    checkpoint.with_file_name(format!("{stem}.log.csv"))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn train_tokenizer(mut cfg: RunConfig, args: &TrainTokenizerArgs) -> Result<(), CliError> {
    if let Some(e) = args.epochs {
        cfg.tokenizer.epochs = e;
    }
    cfg.validate()?;
    let out = args.out.clone().unwrap_or_else(|| cfg.paths.checkpoints.join(TOKENIZER_FILE));
    ensure_parent(&out)?;
    let records = read_dataset(&args.data)?;
    let motions: Vec<MotionSequence> = records.into_iter().map(|r| r.motion).collect();
    let (model, log) = fit_tokenizer(&motions, &cfg.tokenizer, Some(&out))?;
    let [ppl_traj, ppl_pose] = corpus_perplexity(&model, &motions)?;
    write(&log_path(&out), &log.to_csv())?;
    let mut prov = Provenance::new("train-tokenizer", &cfg);
    prov.input(&args.data)?
        .note("initial_rec", log.initial_rec)
        .note("final_rec", log.final_rec)
        .note("perplexity_traj", ppl_traj)
        .note("perplexity_pose", ppl_pose)
        .note("tokenizer_hash", model.store.hash()?);
    prov.write_for(&out)?;
    println!(
        "reconstruction {:.4} -> {:.4}, perplexity {:.1}/{:.1}; saved {}",
        log.initial_rec,
        log.final_rec,
        ppl_traj,
        ppl_pose,
        out.display()
    );
    Ok(())
}

/// Deterministic train/validation split; validation gets `round(n·fraction)`
/// records, at least one when the fraction is positive and n ≥ 2.
pub fn split(mut records: Vec<SequenceRecord>, fraction: f64, seed: u64) -> (Vec<SequenceRecord>, Vec<SequenceRecord>) {
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = records.len();
    let mut k = (n as f64 * fraction).round() as usize;
    if fraction > 0.0 && n >= 2 {
        k = k.clamp(1, n - 1);
    }
    let val = records.split_off(n - k);
    (records, val)
}

fn previous(stage: Stage) -> Option<Stage> {
    match stage {
        Stage::Pretrain => None,
        Stage::Refine => Some(Stage::Pretrain),
        Stage::Instruct => Some(Stage::Refine),
    }
}

pub fn train_lm(mut cfg: RunConfig, args: &TrainLmArgs) -> Result<(), CliError> {
    let stage = args.stage.stage();
    if let Some(e) = args.epochs {
        cfg.lm.stage_mut(stage).epochs = e;
    }
    if let Some(p) = &args.preset {
        let seed = cfg.lm.model.seed;
        cfg.lm.model = LmConfig { seed, ..LmConfig::preset(p).map_err(|e| CliError::Usage(e.to_string()))? };
    }
    cfg.validate()?;
    let tok_path = tokenizer_path(&cfg, args.tokenizer.as_deref());
    let shift = load_tokenizer(&tok_path)?;
    let init = match (&args.init, previous(stage)) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(prev)) => Some(cfg.paths.checkpoints.join(lm_file(prev))),
        (None, None) => None,
    };
    if args.preset.is_some() && init.is_some() {
        return Err(CliError::Usage("--preset only applies to a fresh pretraining run".into()));
    }

    let records = read_dataset(&args.data)?;
    let (train, val) = split(records, cfg.lm.val_fraction, derive_seed(cfg.seed, "split"));
    let train = LmCorpus::encode(train, &shift)?;
    let val = LmCorpus::encode(val, &shift)?;
    let mut model = match &init {
        Some(p) => {
            if !p.is_file() {
                return Err(CliError::Domain(format!("initial checkpoint {} not found; train the previous stage first", p.display())));
            }
            load_lm(p, &shift)?
        }
        None => new_model(&train, &cfg.lm.templates, &shift, cfg.lm.model.clone(), DType::F32)?,
    };
    let out = args.out.clone().unwrap_or_else(|| cfg.paths.checkpoints.join(lm_file(stage)));
    ensure_parent(&out)?;
    let stage_cfg = cfg.lm.stage(stage).clone();
    let log = train_stage(&mut model, &shift, &train, &val, &cfg.lm.templates, &stage_cfg, Some(&out))?;
    write(&log_path(&out), &log.to_csv())?;

    let final_val = log.epochs.last().map(|e| e.val_ce).unwrap_or(log.initial_val_ce);
    let mut prov = Provenance::new(&format!("train-lm --stage {}", stage.name()), &cfg);
    prov.input(&args.data)?.input(&tok_path)?;
    if let Some(p) = &init {
        prov.input(p)?;
    }
    prov.note("train_records", train.len())
        .note("val_records", val.len())
        .note("initial_val_ce", log.initial_val_ce)
        .note("final_val_ce", final_val)
        .note("parameters", model.store.num_params());
    prov.write_for(&out)?;
    println!("{} validation CE {:.4} -> {:.4}; saved {}", stage.name(), log.initial_val_ce, final_val, out.display());
    Ok(())
}
