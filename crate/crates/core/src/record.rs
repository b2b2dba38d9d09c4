use serde::{Deserialize, Serialize};

use crate::family::Family;
use crate::motion::MotionSequence;

/// One curation decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterEntry {
    pub name: String,
    pub passed: bool,
    pub score: f64,
}

/// A dataset entry: motion payload, captions, visibility and curation history.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub id: String,
    pub motion: MotionSequence,
    pub caption_high: String,
    pub caption_fine: String,
    /// Per frame, `[left_visible, right_visible]`.
    pub visibility: Vec<[bool; 2]>,
    pub filter_log: Vec<FilterEntry>,
}

impl SequenceRecord {
    /// Family named by the fine caption, falling back to the high-level one.
    pub fn family(&self) -> Option<Family> {
        Family::from_text(&self.caption_fine).or_else(|| Family::from_text(&self.caption_high))
    }

    pub fn log_entry(&self, name: &str) -> Option<&FilterEntry> {
        self.filter_log.iter().find(|e| e.name == name)
    }

    /// Inserts or replaces the entry named `name`, keeping first-insertion order.
    pub fn set_log(&mut self, name: &str, passed: bool, score: f64) {
        let entry = FilterEntry { name: name.to_string(), passed, score };
        match self.filter_log.iter_mut().find(|e| e.name == name) {
            Some(e) => *e = entry,
            None => self.filter_log.push(entry),
        }
    }
}
