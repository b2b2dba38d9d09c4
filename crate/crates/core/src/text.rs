//! Word-level text tokenizer for captions and instruction prompts.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub const UNK: &str = "<unk>";
pub const EOS: &str = "</s>";
pub const UNK_ID: u32 = 0;
pub const EOS_ID: u32 = 1;

/// Lowercased alphanumeric words; everything else separates words.
pub fn split_words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|w| w.trim_matches('\'').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TokenizerFile", into = "TokenizerFile")]
pub struct TextTokenizer {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct TokenizerFile {
    words: Vec<String>,
}

impl TryFrom<TokenizerFile> for TextTokenizer {
    type Error = String;
    fn try_from(f: TokenizerFile) -> Result<Self, String> {
        if f.words.len() < 2 || f.words[0] != UNK || f.words[1] != EOS {
            return Err(format!("word list must start with {UNK}, {EOS}"));
        }
        let mut index = HashMap::with_capacity(f.words.len());
        for (i, w) in f.words.iter().enumerate() {
            if w.is_empty() || w.starts_with("<motion_token") || w.chars().any(char::is_whitespace) {
                return Err(format!("invalid word {w:?}"));
            }
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(format!("duplicate word {w:?}"));
            }
        }
        Ok(Self { words: f.words, index })
    }
}

impl From<TextTokenizer> for TokenizerFile {
    fn from(t: TextTokenizer) -> Self {
        TokenizerFile { words: t.words }
    }
}

impl TextTokenizer {
    /// Vocabulary of every word in `texts`, sorted, after `<unk>` and `</s>`.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<String> = texts.into_iter().flat_map(split_words).collect();
        let words: Vec<String> = [UNK.to_string(), EOS.to_string()].into_iter().chain(set).collect();
        Self::try_from(TokenizerFile { words }).expect("split words are valid")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    /// Word ids of `text`; unknown words map to `<unk>`. No `</s>` is appended.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        split_words(text).iter().map(|w| self.id(w).unwrap_or(UNK_ID)).collect()
    }

    /// Space-joined words, stopping at `</s>` and skipping ids outside the text range.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out: Vec<&str> = Vec::new();
        for &id in ids {
            if id == EOS_ID {
                break;
            }
            if let Some(w) = self.word(id) {
                out.push(w);
            }
        }
        out.join(" ")
    }
}
