//! Unified text+motion vocabulary and the interleaved motion-token stream.
//!
//! Id layout: text words `[0, V_t)`, trajectory codes `[V_t, V_t+K)`, pose codes
//! `[V_t+K, V_t+2K)`, then `<som>`, `<eom>`, `<pad>`, `<mask>`. A motion span is
//! `<som>` followed by T groups of (τ_L, θ_L, τ_R, θ_R) and `<eom>`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::TextTokenizer;

pub const SOM: &str = "<som>";
pub const EOM: &str = "<eom>";
pub const PAD: &str = "<pad>";
pub const MASK: &str = "<mask>";
const MOTION_PREFIX: &str = "<motion_token";

/// The four per-hand index streams produced by the motion tokenizer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionTokens {
    pub traj_l: Vec<u32>,
    pub pose_l: Vec<u32>,
    pub traj_r: Vec<u32>,
    pub pose_r: Vec<u32>,
}

impl MotionTokens {
    pub fn len(&self) -> usize {
        self.traj_l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traj_l.is_empty()
    }

    pub fn swapped(&self) -> Self {
        Self {
            traj_l: self.traj_r.clone(),
            pose_l: self.pose_r.clone(),
            traj_r: self.traj_l.clone(),
            pose_r: self.pose_l.clone(),
        }
    }
}

/// Which codebook a slot draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    Trajectory,
    Pose,
}

/// Modality of slot `i` (0-based) inside a motion span.
pub fn slot_modality(slot: usize) -> Modality {
    if slot % 2 == 0 {
        Modality::Trajectory
    } else {
        Modality::Pose
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenKind {
    Text,
    Motion(Modality),
    Special,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("motion streams have unequal lengths {0:?}")]
    UnequalStreams([usize; 4]),
    #[error("code {code} out of range for codebook size {k}")]
    CodeOutOfRange { code: u32, k: usize },
    #[error("id {id} at position {position} outside vocabulary of size {size}")]
    IdOutOfRange { position: usize, id: u32, size: usize },
    #[error("no <som> in stream")]
    MissingSom,
    #[error("motion span opened at {start} is not closed by <eom>")]
    MissingEom { start: usize },
    #[error("position {position}: expected a {expected:?} token, found id {id}")]
    WrongModality { position: usize, expected: Modality, id: u32 },
    #[error("position {position}: <eom> after {slots} motion ids, not a multiple of 4")]
    PartialGroup { position: usize, slots: usize },
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("malformed token JSON: {0}")]
    Json(String),
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub text: TextTokenizer,
    /// Entries per codebook (K).
    pub codebook_size: usize,
}

impl Vocabulary {
    pub fn new(text: TextTokenizer, codebook_size: usize) -> Result<Self, CodecError> {
        let v = Self { text, codebook_size };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.codebook_size < 2 {
            return Err(CodecError::Vocabulary(format!("codebook size {} < 2", self.codebook_size)));
        }
        let total = self.text.len() as u64 + 2 * self.codebook_size as u64 + 4;
        if total > u32::MAX as u64 {
            return Err(CodecError::Vocabulary(format!("{total} ids do not fit in u32")));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self, CodecError> {
        let v: Self = serde_json::from_str(json).map_err(|e| CodecError::Json(e.to_string()))?;
        v.validate()?;
        Ok(v)
    }

    pub fn text_len(&self) -> usize {
        self.text.len()
    }

    /// First motion id (trajectory code 0).
    pub fn motion_offset(&self) -> u32 {
        self.text.len() as u32
    }

    pub fn motion_len(&self) -> usize {
        2 * self.codebook_size
    }

    pub fn som(&self) -> u32 {
        self.motion_offset() + self.motion_len() as u32
    }
    pub fn eom(&self) -> u32 {
        self.som() + 1
    }
    pub fn pad(&self) -> u32 {
        self.som() + 2
    }
    pub fn mask(&self) -> u32 {
        self.som() + 3
    }

    pub fn len(&self) -> usize {
        self.text.len() + self.motion_len() + 4
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn kind(&self, id: u32) -> Option<TokenKind> {
        let off = self.motion_offset();
        let k = self.codebook_size as u32;
        match id {
            _ if id < off => Some(TokenKind::Text),
            _ if id < off + k => Some(TokenKind::Motion(Modality::Trajectory)),
            _ if id < off + 2 * k => Some(TokenKind::Motion(Modality::Pose)),
            _ if (id as usize) < self.len() => Some(TokenKind::Special),
            _ => None,
        }
    }

    /// Vocabulary id of a code in the given codebook.
    pub fn motion_id(&self, modality: Modality, code: u32) -> Result<u32, CodecError> {
        if code as usize >= self.codebook_size {
            return Err(CodecError::CodeOutOfRange { code, k: self.codebook_size });
        }
        Ok(match modality {
            Modality::Trajectory => self.motion_offset() + code,
            Modality::Pose => self.motion_offset() + self.codebook_size as u32 + code,
        })
    }

    /// Codebook index of a motion id in the given modality, if it is one.
    pub fn code(&self, id: u32, modality: Modality) -> Option<u32> {
        match self.kind(id)? {
            TokenKind::Motion(m) if m == modality => {
                let base = self.motion_offset() + if m == Modality::Pose { self.codebook_size as u32 } else { 0 };
                Some(id - base)
            }
            _ => None,
        }
    }

    pub fn symbol(&self, id: u32) -> Option<String> {
        match self.kind(id)? {
            TokenKind::Text => self.text.word(id).map(str::to_string),
            TokenKind::Motion(_) => Some(format!("{MOTION_PREFIX}{}>", id - self.motion_offset())),
            TokenKind::Special => Some([SOM, EOM, PAD, MASK][(id - self.som()) as usize].to_string()),
        }
    }

    pub fn id_of(&self, symbol: &str) -> Option<u32> {
        if let Some(rest) = symbol.strip_prefix(MOTION_PREFIX) {
            let digits = rest.strip_suffix('>')?;
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || (digits.len() > 1 && digits.starts_with('0')) {
                return None;
            }
            let i: usize = digits.parse().ok()?;
            return (i < self.motion_len()).then(|| self.motion_offset() + i as u32);
        }
        match symbol {
            SOM => Some(self.som()),
            EOM => Some(self.eom()),
            PAD => Some(self.pad()),
            MASK => Some(self.mask()),
            _ => self.text.id(symbol),
        }
    }

    /// SHA-256 over the word list and codebook size; pins id assignments in checkpoints.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for w in self.text.words() {
            h.update(w.as_bytes());
            h.update([0u8]);
        }
        h.update((self.codebook_size as u64).to_le_bytes());
        hex::encode(h.finalize())
    }

    /// Debug form: JSON array of symbol strings.
    pub fn to_json(&self, ids: &[u32]) -> Result<String, CodecError> {
        let symbols = ids
            .iter()
            .enumerate()
            .map(|(position, &id)| {
                self.symbol(id).ok_or(CodecError::IdOutOfRange { position, id, size: self.len() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(serde_json::to_string(&symbols).expect("strings serialize"))
    }

    pub fn from_json_symbols(&self, json: &str) -> Result<Vec<u32>, CodecError> {
        let symbols: Vec<String> = serde_json::from_str(json).map_err(|e| CodecError::Json(e.to_string()))?;
        symbols.iter().map(|s| self.id_of(s).ok_or_else(|| CodecError::UnknownSymbol(s.clone()))).collect()
    }
}

/// `<som>` + per-step (τ_L, θ_L, τ_R, θ_R) + `<eom>`; length 4T+2.
pub fn interleave(tokens: &MotionTokens, vocab: &Vocabulary) -> Result<Vec<u32>, CodecError> {
    let lens = [tokens.traj_l.len(), tokens.pose_l.len(), tokens.traj_r.len(), tokens.pose_r.len()];
    if lens.iter().any(|&l| l != lens[0]) {
        return Err(CodecError::UnequalStreams(lens));
    }
    let mut out = Vec::with_capacity(4 * lens[0] + 2);
    out.push(vocab.som());
    for t in 0..lens[0] {
        out.push(vocab.motion_id(Modality::Trajectory, tokens.traj_l[t])?);
        out.push(vocab.motion_id(Modality::Pose, tokens.pose_l[t])?);
        out.push(vocab.motion_id(Modality::Trajectory, tokens.traj_r[t])?);
        out.push(vocab.motion_id(Modality::Pose, tokens.pose_r[t])?);
    }
    out.push(vocab.eom());
    Ok(out)
}

/// Decodes the first motion span of `ids`. Tokens outside the span are ignored.
pub fn deinterleave(ids: &[u32], vocab: &Vocabulary) -> Result<MotionTokens, CodecError> {
    for (position, &id) in ids.iter().enumerate() {
        if vocab.kind(id).is_none() {
            return Err(CodecError::IdOutOfRange { position, id, size: vocab.len() });
        }
    }
    let start = ids.iter().position(|&id| id == vocab.som()).ok_or(CodecError::MissingSom)?;
    let mut out = MotionTokens::default();
    let mut slot = 0usize;
    for (position, &id) in ids.iter().enumerate().skip(start + 1) {
        if id == vocab.eom() {
            if slot % 4 != 0 {
                return Err(CodecError::PartialGroup { position, slots: slot });
            }
            return Ok(out);
        }
        let expected = slot_modality(slot);
        let code = vocab.code(id, expected).ok_or(CodecError::WrongModality { position, expected, id })?;
        match slot % 4 {
            0 => out.traj_l.push(code),
            1 => out.pose_l.push(code),
            2 => out.traj_r.push(code),
            _ => out.pose_r.push(code),
        }
        slot += 1;
    }
    Err(CodecError::MissingEom { start })
}

/// Normalizes any id sequence to `text* <som> group* <eom>`.
///
/// Leading text ids are kept. The span starts at the first `<som>`, or at the
/// first motion id if the text prefix runs straight into motion. Motion ids are
/// taken while they fit the slot pattern; the first violation (wrong modality,
/// special, text or out-of-range id) or `<eom>` ends the span, a trailing partial
/// group is dropped and `<eom>` is appended. Everything after is discarded.
pub fn repair(ids: &[u32], vocab: &Vocabulary) -> Vec<u32> {
    let text_end = ids.iter().position(|&id| vocab.kind(id) != Some(TokenKind::Text)).unwrap_or(ids.len());
    let mut out: Vec<u32> = ids[..text_end].to_vec();
    out.push(vocab.som());
    let rest = &ids[text_end..];
    let body = match rest.first() {
        Some(&id) if id == vocab.som() => &rest[1..],
        Some(&id) if matches!(vocab.kind(id), Some(TokenKind::Motion(_))) => rest,
        _ => &[],
    };
    let mut taken = 0usize;
    for (slot, &id) in body.iter().enumerate() {
        if vocab.code(id, slot_modality(slot)).is_none() {
            break;
        }
        taken += 1;
    }
    let whole = taken - taken % 4;
    out.extend_from_slice(&body[..whole]);
    out.push(vocab.eom());
    out
}
