use std::collections::BTreeMap;
use std::path::Path;

use super::AnnotationError;

pub const PLACEHOLDER: &str = "{input}";

/// The four atomic aspects, in the order their answers are merged.
pub const ATOMIC_KEYS: [&str; 4] = ["hand_role", "action_object", "state_transition", "intent"];
pub const SUMMARIZE: &str = "summarize";
pub const REFINE: &str = "refine";
pub const VERIFY: &str = "verify";

const BUILTIN: [(&str, &str); 7] = [
    ("hand_role", include_str!("../../prompts/hand_role.txt")),
    ("action_object", include_str!("../../prompts/action_object.txt")),
    ("state_transition", include_str!("../../prompts/state_transition.txt")),
    ("intent", include_str!("../../prompts/intent.txt")),
    ("summarize", include_str!("../../prompts/summarize.txt")),
    ("refine", include_str!("../../prompts/refine.txt")),
    ("verify", include_str!("../../prompts/verify.txt")),
];

/// The seven prompt templates, each containing `{input}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<String, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::from_map(BUILTIN.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()).expect("builtin prompts are valid")
    }
}

impl PromptSet {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(k, _)| *k)
    }

    pub fn from_map(templates: BTreeMap<String, String>) -> Result<Self, AnnotationError> {
        let expected: Vec<&str> = {
            let mut k: Vec<&str> = Self::keys().collect();
            k.sort_unstable();
            k
        };
        let got: Vec<&str> = templates.keys().map(String::as_str).collect();
        if got != expected {
            return Err(AnnotationError::Prompt(format!("prompt keys {got:?}, expected {expected:?}")));
        }
        if let Some((k, _)) = templates.iter().find(|(_, t)| !t.contains(PLACEHOLDER)) {
            return Err(AnnotationError::Prompt(format!("template {k} lacks {PLACEHOLDER}")));
        }
        Ok(Self { templates })
    }

    /// Loads `<key>.txt` for every key from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, AnnotationError> {
        let mut map = BTreeMap::new();
        for key in Self::keys() {
            let path = dir.join(format!("{key}.txt"));
            let text = std::fs::read_to_string(&path).map_err(|e| AnnotationError::Prompt(format!("{}: {e}", path.display())))?;
            map.insert(key.to_string(), text);
        }
        Self::from_map(map)
    }

    pub fn render(&self, key: &str, input: &str) -> String {
        self.templates[key].replace(PLACEHOLDER, input)
    }
}
