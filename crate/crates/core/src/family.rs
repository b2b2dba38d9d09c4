use serde::{Deserialize, Serialize};
use std::fmt;

/// Parameterized motion families of the synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Wave,
    CircleTrace,
    GraspClose,
    PourTilt,
    KeyPress,
    Wipe,
    KnitLoop,
    Clap,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Wave,
        Family::CircleTrace,
        Family::GraspClose,
        Family::PourTilt,
        Family::KeyPress,
        Family::Wipe,
        Family::KnitLoop,
        Family::Clap,
    ];

    /// The word every caption of this family contains.
    pub fn keyword(self) -> &'static str {
        match self {
            Family::Wave => "wave",
            Family::CircleTrace => "circle",
            Family::GraspClose => "grasp",
            Family::PourTilt => "pour",
            Family::KeyPress => "press",
            Family::Wipe => "wipe",
            Family::KnitLoop => "knit",
            Family::Clap => "clap",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&f| f == self).expect("listed")
    }

    /// Whether the family moves one leading hand (the other stays at rest).
    pub fn is_single_handed(self) -> bool {
        !matches!(self, Family::KeyPress | Family::KnitLoop | Family::Clap)
    }

    /// First family whose keyword occurs in `text` (case-insensitive).
    pub fn from_text(text: &str) -> Option<Family> {
        let lower = text.to_lowercase();
        Self::ALL
            .iter()
            .filter_map(|&f| lower.find(f.keyword()).map(|pos| (pos, f)))
            .min_by_key(|&(pos, _)| pos)
            .map(|(_, f)| f)
    }

    pub fn from_keyword(word: &str) -> Option<Family> {
        Self::ALL.iter().copied().find(|f| f.keyword() == word)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyword_lookup() {
        assert_eq!(Family::from_text("Someone WAVES the right hand"), Some(Family::Wave));
        assert_eq!(Family::from_text("the hand traces circles, then claps"), Some(Family::CircleTrace));
        assert_eq!(Family::from_text("nothing here"), None);
        for f in Family::ALL {
            assert_eq!(Family::from_keyword(f.keyword()), Some(f));
            assert_eq!(Family::ALL[f.index()], f);
        }
    }
}
