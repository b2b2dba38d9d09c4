//! Subcommand implementations and the checkpoint conventions they share.

pub mod data;
pub mod evaluate;
pub mod infer;
pub mod train;

use std::path::{Path, PathBuf};

use handlm_nn::lm::train::Stage;
use handlm_nn::lm::LanguageModel;
use handlm_nn::shift::ShiftModel;

use crate::config::RunConfig;
use crate::CliError;

pub const TOKENIZER_FILE: &str = "tokenizer.safetensors";
pub const EVALUATOR_FILE: &str = "evaluator.safetensors";

pub fn lm_file(stage: Stage) -> String {
    format!("lm-{}.safetensors", stage.name())
}

pub fn tokenizer_path(cfg: &RunConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf).unwrap_or_else(|| cfg.paths.checkpoints.join(TOKENIZER_FILE))
}

/// The explicit path, else the latest stage present in the checkpoint directory.
pub fn lm_path(cfg: &RunConfig, flag: Option<&Path>) -> Result<PathBuf, CliError> {
    if let Some(p) = flag {
        return Ok(p.to_path_buf());
    }
    Stage::ALL
        .iter()
        .rev()
        .map(|&s| cfg.paths.checkpoints.join(lm_file(s)))
        .find(|p| p.is_file())
        .ok_or_else(|| CliError::Domain(format!("no language-model checkpoint in {}; run train-lm first", cfg.paths.checkpoints.display())))
}

pub fn load_tokenizer(path: &Path) -> Result<ShiftModel, CliError> {
    if !path.is_file() {
        return Err(CliError::Domain(format!("tokenizer checkpoint {} not found; run train-tokenizer first", path.display())));
    }
    ShiftModel::load(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

/// Loads a language model and checks it was trained against `shift`.
pub fn load_lm(path: &Path, shift: &ShiftModel) -> Result<LanguageModel, CliError> {
    let (model, meta) = LanguageModel::load(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    let expected = shift.store.hash()?;
    match meta.get("tokenizer_hash") {
        Some(h) if *h == expected => Ok(model),
        Some(h) => Err(CliError::Domain(format!(
            "{} was trained with tokenizer {h}, but the loaded tokenizer is {expected}",
            path.display()
        ))),
        None => Err(CliError::Domain(format!("{} records no tokenizer hash", path.display()))),
    }
}

pub fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e)),
        _ => Ok(()),
    }
}
