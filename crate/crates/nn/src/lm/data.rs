//! Instruction templates and training pairs.

use handlm_core::codec::{interleave, MotionTokens, Vocabulary};
use handlm_core::text::{TextTokenizer, EOS_ID};
use handlm_core::SequenceRecord;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    TextToMotion,
    MotionToText,
    MaskedCompletion,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::TextToMotion, Task::MotionToText, Task::MaskedCompletion];
}

/// Prompt phrasings per task. `{caption}` and `{motion}` are placeholders; the
/// motion placeholder expands to a full `<som>…<eom>` stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplates {
    pub pretrain_t2m: String,
    pub pretrain_m2t: String,
    pub t2m: Vec<String>,
    pub m2t: Vec<String>,
    pub masked: Vec<String>,
}

impl Default for InstructionTemplates {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            pretrain_t2m: "generate motion {caption}".into(),
            pretrain_m2t: "describe motion {motion}".into(),
            t2m: v(&[
                "generate motion {caption}",
                "show the hands performing this {caption}",
                "create a hand motion that matches the description {caption}",
                "animate both hands {caption}",
            ]),
            m2t: v(&[
                "describe motion {motion}",
                "what are the hands doing {motion}",
                "write a caption for this hand motion {motion}",
            ]),
            masked: v(&[
                "complete motion {caption} {motion}",
                "fill in the missing part of the motion {caption} {motion}",
            ]),
        }
    }
}

impl InstructionTemplates {
    pub fn validate(&self) -> Result<(), NnError> {
        let check = |name: &str, list: &[String], need: &[&str]| -> Result<(), NnError> {
            if list.is_empty() {
                return Err(NnError::Config(format!("no {name} templates")));
            }
            for t in list {
                for p in need {
                    if t.matches(p).count() != 1 {
                        return Err(NnError::Config(format!("{name} template {t:?} must contain {p} exactly once")));
                    }
                }
            }
            Ok(())
        };
        check("pretrain t2m", std::slice::from_ref(&self.pretrain_t2m), &["{caption}"])?;
        check("pretrain m2t", std::slice::from_ref(&self.pretrain_m2t), &["{motion}"])?;
        check("t2m", &self.t2m, &["{caption}"])?;
        check("m2t", &self.m2t, &["{motion}"])?;
        check("masked", &self.masked, &["{caption}", "{motion}"])
    }

    /// Every literal word, for building the text vocabulary.
    pub fn words(&self) -> String {
        let mut all = vec![self.pretrain_t2m.clone(), self.pretrain_m2t.clone()];
        all.extend(self.t2m.iter().chain(&self.m2t).chain(&self.masked).cloned());
        all.join(" ").replace("{caption}", " ").replace("{motion}", " ")
    }

    pub fn for_task(&self, task: Task) -> &[String] {
        match task {
            Task::TextToMotion => &self.t2m,
            Task::MotionToText => &self.m2t,
            Task::MaskedCompletion => &self.masked,
        }
    }
}

/// Expands a template into ids.
pub fn render(template: &str, caption: &str, motion: &[u32], text: &TextTokenizer) -> Vec<u32> {
    let mut out = Vec::new();
    let mut rest = template;
    while !rest.is_empty() {
        let next = [("{caption}", 0), ("{motion}", 1)]
            .iter()
            .filter_map(|&(p, k)| rest.find(p).map(|i| (i, p, k)))
            .min_by_key(|&(i, _, _)| i);
        match next {
            Some((i, p, k)) => {
                out.extend(text.encode(&rest[..i]));
                if k == 0 {
                    out.extend(text.encode(caption));
                } else {
                    out.extend_from_slice(motion);
                }
                rest = &rest[i + p.len()..];
            }
            None => {
                out.extend(text.encode(rest));
                rest = "";
            }
        }
    }
    out
}

/// Text vocabulary over captions and template words.
pub fn build_vocabulary(records: &[SequenceRecord], templates: &InstructionTemplates, codebook_size: usize) -> Result<Vocabulary, NnError> {
    let words = templates.words();
    let texts = records
        .iter()
        .flat_map(|r| [r.caption_high.as_str(), r.caption_fine.as_str()])
        .chain(std::iter::once(words.as_str()));
    Ok(Vocabulary::new(TextTokenizer::build(texts), codebook_size)?)
}

/// One source/target pair with the motion it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub task: Task,
    pub source: Vec<u32>,
    pub target: Vec<u32>,
    /// Index of the record in the training set.
    pub record: usize,
}

/// Motion stream with a contiguous run of about `ratio` of its motion ids replaced by `<mask>`.
pub fn mask_span(stream: &[u32], ratio: f64, vocab: &Vocabulary, rng: &mut impl Rng) -> Vec<u32> {
    let body = stream.len().saturating_sub(2);
    let span = ((body as f64 * ratio).round() as usize).clamp(1.min(body), body);
    let start = if body > span { rng.gen_range(0..=body - span) } else { 0 };
    let mut out = stream.to_vec();
    for id in out.iter_mut().skip(1 + start).take(span) {
        *id = vocab.mask();
    }
    out
}

/// Training pair for `task` using `template`.
pub fn example(
    task: Task,
    template: &str,
    caption: &str,
    tokens: &MotionTokens,
    record: usize,
    vocab: &Vocabulary,
    mask_ratio: f64,
    rng: &mut impl Rng,
) -> Result<Example, NnError> {
    let stream = interleave(tokens, vocab)?;
    let (source, target) = match task {
        Task::TextToMotion => (render(template, caption, &[], &vocab.text), stream),
        Task::MotionToText => {
            let mut t = vocab.text.encode(caption);
            t.push(EOS_ID);
            (render(template, "", &stream, &vocab.text), t)
        }
        Task::MaskedCompletion => {
            let masked = mask_span(&stream, mask_ratio, vocab, rng);
            (render(template, caption, &masked, &vocab.text), stream)
        }
    };
    Ok(Example { task, source, target, record })
}

/// Groups examples into batches that share a task, in an order fixed by `rng`.
pub fn batches(examples: &[Example], size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for task in Task::ALL {
        let mut idx: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].task == task).collect();
        idx.shuffle(rng);
        // Equal target lengths keep soft-decoded batches rectangular.
        idx.sort_by_key(|&i| examples[i].target.len());
        let mut cur: Vec<usize> = Vec::new();
        for i in idx {
            if cur.len() == size || cur.first().is_some_and(|&f| examples[f].target.len() != examples[i].target.len() && task != Task::MotionToText) {
                out.push(std::mem::take(&mut cur));
            }
            cur.push(i);
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out.shuffle(rng);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab() -> Vocabulary {
        let t = InstructionTemplates::default();
        let text = TextTokenizer::build(["wave both hands", t.words().as_str()]);
        Vocabulary::new(text, 4).unwrap()
    }

    fn tokens() -> MotionTokens {
        MotionTokens { traj_l: vec![0, 1], pose_l: vec![2, 3], traj_r: vec![1, 1], pose_r: vec![0, 0] }
    }

    #[test]
    fn render_splices_caption_and_motion() {
        let v = vocab();
        let ids = render("describe {caption} now {motion}", "wave", &[900, 901], &v.text);
        let words: Vec<u32> = ["describe", "wave", "now"].iter().map(|w| v.text.id(w).unwrap_or(0)).collect();
        assert_eq!(ids, [words[0], words[1], words[2], 900, 901]);
    }

    #[test]
    fn pairs_per_task() {
        let v = vocab();
        let t = InstructionTemplates::default();
        t.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stream = interleave(&tokens(), &v).unwrap();
        let g = example(Task::TextToMotion, &t.t2m[0], "wave both hands", &tokens(), 0, &v, 0.5, &mut rng).unwrap();
        assert_eq!(g.target, stream);
        assert!(!g.source.contains(&v.som()));
        let c = example(Task::MotionToText, &t.m2t[0], "wave both hands", &tokens(), 0, &v, 0.5, &mut rng).unwrap();
        assert_eq!(*c.target.last().unwrap(), EOS_ID);
        assert!(c.source.ends_with(&stream));
        let m = example(Task::MaskedCompletion, &t.masked[0], "wave both hands", &tokens(), 0, &v, 0.5, &mut rng).unwrap();
        assert_eq!(m.target, stream);
        assert_eq!(m.source.iter().filter(|&&i| i == v.mask()).count(), 4);
    }

    #[test]
    fn mask_span_is_contiguous_and_inside_the_body() {
        let v = vocab();
        let stream = interleave(&tokens(), &v).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for ratio in [0.1, 0.4, 1.0] {
            let m = mask_span(&stream, ratio, &v, &mut rng);
            let pos: Vec<usize> = (0..m.len()).filter(|&i| m[i] == v.mask()).collect();
            assert!(!pos.is_empty());
            assert!(pos.windows(2).all(|w| w[1] == w[0] + 1));
            assert_eq!(m[0], v.som());
            assert_eq!(*m.last().unwrap(), v.eom());
        }
    }

    #[test]
    fn bad_templates_rejected() {
        let mut t = InstructionTemplates::default();
        t.masked = vec!["complete {motion}".into()];
        assert!(t.validate().is_err());
        let mut t = InstructionTemplates::default();
        t.t2m.clear();
        assert!(t.validate().is_err());
    }
}
