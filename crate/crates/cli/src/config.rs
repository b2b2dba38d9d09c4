//! Run configuration: defaults, then a TOML file, then command-line flags,
//! then the environment (secrets only).

use std::path::{Path, PathBuf};

use handlm_core::annotation::AnnotationConfig;
use handlm_core::curation::CurationConfig;
use handlm_core::datagen::GeneratorConfig;
use handlm_nn::evaluator::EvaluatorConfig;
use handlm_nn::lm::data::InstructionTemplates;
use handlm_nn::lm::train::{Stage, StageConfig};
use handlm_nn::lm::{LmConfig, Sampling};
use handlm_nn::shift_train::ShiftTrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable holding the annotation endpoint key. Never serialized.
pub use handlm_core::annotation::client::API_KEY_ENV;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { checkpoints: "checkpoints".into(), reports: "reports".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationSettings {
    /// `mock` or `http`.
    pub client: String,
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    /// Directory of prompt templates replacing the built-in set.
    pub prompts: Option<PathBuf>,
    /// Closed verb-noun vocabulary (JSON) replacing the built-in one.
    pub vocabulary: Option<PathBuf>,
    pub pipeline: AnnotationConfig,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for AnnotationSettings {
    fn default() -> Self {
        Self {
            client: "mock".into(),
            endpoint: None,
            timeout_secs: 30,
            max_in_flight: 4,
            prompts: None,
            vocabulary: None,
            pipeline: AnnotationConfig::default(),
            api_key: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSettings {
    pub model: LmConfig,
    /// Share of the training directory held out for validation cross-entropy.
    pub val_fraction: f64,
    pub templates: InstructionTemplates,
    pub pretrain: StageConfig,
    pub refine: StageConfig,
    pub instruct: StageConfig,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            model: LmConfig::tiny(),
            val_fraction: 0.1,
            templates: InstructionTemplates::default(),
            pretrain: StageConfig::pretrain(),
            refine: StageConfig::refine(),
            instruct: StageConfig::instruct(),
        }
    }
}

impl LmSettings {
    pub fn stage(&self, stage: Stage) -> &StageConfig {
        match stage {
            Stage::Pretrain => &self.pretrain,
            Stage::Refine => &self.refine,
            Stage::Instruct => &self.instruct,
        }
    }

    pub fn stage_mut(&mut self, stage: Stage) -> &mut StageConfig {
        match stage {
            Stage::Pretrain => &mut self.pretrain,
            Stage::Refine => &mut self.refine,
            Stage::Instruct => &mut self.instruct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSettings {
    /// Target length of generated motions.
    pub frames: usize,
    /// Sampling for `generate`; greedy unless overridden.
    pub t2m: Sampling,
    /// Sampling for multimodality and repeated evaluation runs.
    pub t2m_sampled: Sampling,
    pub m2t: Sampling,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            frames: 64,
            t2m: Sampling::greedy(0),
            t2m_sampled: Sampling::sampled(1.0, 50, 0, 0),
            m2t: Sampling::greedy(48),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSettings {
    pub repeats: usize,
    pub pool: usize,
    pub top_k: usize,
    pub diversity_pairs: usize,
    /// Prompts and samples per prompt for multimodality.
    pub mm_prompts: usize,
    pub mm_samples: usize,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self { repeats: 20, pool: 32, top_k: 3, diversity_pairs: 300, mm_prompts: 10, mm_samples: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Every component seed below is derived from this one.
    pub seed: u64,
    pub paths: Paths,
    pub datagen: GeneratorConfig,
    pub curation: CurationConfig,
    pub annotation: AnnotationSettings,
    pub tokenizer: ShiftTrainConfig,
    pub lm: LmSettings,
    pub generation: GenerationSettings,
    pub evaluator: EvaluatorConfig,
    pub evaluation: EvaluationSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            datagen: GeneratorConfig::default(),
            curation: CurationConfig::default(),
            annotation: AnnotationSettings::default(),
            tokenizer: ShiftTrainConfig::default(),
            lm: LmSettings::default(),
            generation: GenerationSettings::default(),
            evaluator: EvaluatorConfig::default(),
            evaluation: EvaluationSettings::default(),
        }
    }
}

/// Seed fields owned by `RunConfig::seed`; setting them in a file is rejected.
const DERIVED_SEEDS: &[&[&str]] = &[
    &["tokenizer", "model", "seed"],
    &["lm", "model", "seed"],
    &["lm", "pretrain", "seed"],
    &["lm", "refine", "seed"],
    &["lm", "instruct", "seed"],
    &["generation", "t2m", "seed"],
    &["generation", "t2m_sampled", "seed"],
    &["generation", "m2t", "seed"],
    &["evaluator", "seed"],
];

/// splitmix64 of the global seed and a component tag, cut to 63 bits because
/// TOML integers are signed.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut z = seed ^ handlm_core::annotation::stable_hash(&[tag.as_bytes()]);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    (z ^ (z >> 31)) >> 1
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn lookup<'a>(v: &'a toml::Value, path: &[&str]) -> Option<&'a toml::Value> {
    path.iter().try_fold(v, |cur, k| cur.get(k))
}

impl RunConfig {
    /// Defaults overlaid with the TOML text. Tables merge key by key, so a
    /// file only lists what it changes.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let file: toml::Value = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        for path in DERIVED_SEEDS {
            if lookup(&file, path).is_some() {
                return Err(CliError::Usage(format!(
                    "config: {} is derived from the global seed; set `seed` instead",
                    path.join(".")
                )));
            }
        }
        let mut merged = toml::Value::try_from(Self::default()).map_err(|e| CliError::Domain(format!("config defaults: {e}")))?;
        merge(&mut merged, file);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    /// Applies the environment layer and writes derived seeds.
    pub fn finish(mut self) -> Result<Self, CliError> {
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                self.annotation.api_key = Some(key);
            }
        }
        let s = self.seed;
        self.tokenizer.model.seed = derive_seed(s, "tokenizer");
        self.lm.model.seed = derive_seed(s, "lm");
        for st in Stage::ALL {
            self.lm.stage_mut(st).seed = derive_seed(s, st.name());
        }
        self.generation.t2m.seed = derive_seed(s, "generate");
        self.generation.t2m_sampled.seed = derive_seed(s, "generate-sampled");
        self.generation.m2t.seed = derive_seed(s, "caption");
        self.evaluator.seed = derive_seed(s, "evaluator");
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: String| CliError::Usage(format!("config: {e}"));
        if self.seed > i64::MAX as u64 {
            return Err(usage(format!("seed must be at most {}", i64::MAX)));
        }
        self.tokenizer.model.validate().map_err(|e| usage(e.to_string()))?;
        self.lm.model.validate().map_err(|e| usage(e.to_string()))?;
        self.lm.templates.validate().map_err(|e| usage(e.to_string()))?;
        for st in Stage::ALL {
            let c = self.lm.stage(st);
            if c.stage != st {
                return Err(usage(format!("lm.{} has stage = {:?}", st.name(), c.stage.name())));
            }
            c.validate().map_err(|e| usage(e.to_string()))?;
        }
        if !(0.0..1.0).contains(&self.lm.val_fraction) {
            return Err(usage(format!("lm.val_fraction must lie in [0, 1), got {}", self.lm.val_fraction)));
        }
        if !matches!(self.annotation.client.as_str(), "mock" | "http") {
            return Err(usage(format!("annotation.client must be mock or http, got {:?}", self.annotation.client)));
        }
        if self.datagen.num_frames == 0 || self.generation.frames == 0 {
            return Err(usage("frame counts must be positive".into()));
        }
        let ev = &self.evaluation;
        if ev.repeats < 2 || ev.pool < 2 || ev.top_k == 0 || ev.top_k >= ev.pool || ev.mm_samples < 2 || ev.mm_prompts == 0 {
            return Err(usage("evaluation needs repeats ≥ 2, 0 < top_k < pool, mm_samples ≥ 2, mm_prompts ≥ 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }
}
