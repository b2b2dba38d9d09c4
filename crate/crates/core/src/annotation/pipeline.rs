use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

use super::client::{ClientError, ModelClient, Request};
use super::descriptor::describe_record;
use super::lof::{filter_annotations, HashingEmbedder};
use super::prompts::{PromptSet, ATOMIC_KEYS, REFINE, SUMMARIZE, VERIFY};
use super::vocab::ClosedVocabulary;
use super::AnnotationError;
use crate::record::SequenceRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationConfig {
    pub max_tokens: usize,
    /// Extra attempts after a timeout or rate limit.
    pub retries: usize,
    pub verify_threshold: f64,
    pub lof_k: usize,
    pub lof_threshold: f64,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        Self { max_tokens: 256, retries: 2, verify_threshold: 0.5, lof_k: 5, lof_threshold: 1.5 }
    }
}

/// One model exchange, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key: String,
    pub prompt: String,
    pub response: Option<String>,
    pub attempts: usize,
    pub error: Option<String>,
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut free = self.free.lock().expect("unpoisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("unpoisoned");
        }
        *free -= 1;
        drop(free);
        let out = f();
        *self.free.lock().expect("unpoisoned") += 1;
        self.cv.notify_one();
        out
    }
}

fn call(client: &dyn ModelClient, key: &str, prompt: String, descriptor: &str, cfg: &AnnotationConfig) -> (TranscriptEntry, Result<String, ClientError>) {
    let req = Request { task: key.to_string(), prompt, input_descriptor: descriptor.to_string(), max_tokens: cfg.max_tokens };
    let mut attempts = 0;
    let result = loop {
        attempts += 1;
        match client.complete(&req) {
            Err(e) if e.is_transient() && attempts <= cfg.retries => continue,
            other => break other,
        }
    };
    let entry = TranscriptEntry {
        key: key.to_string(),
        prompt: req.prompt,
        response: result.as_ref().ok().cloned(),
        attempts,
        error: result.as_ref().err().map(ToString::to_string),
    };
    (entry, result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Output {
    pub summary: String,
    pub transcript: Vec<TranscriptEntry>,
}

/// Four concurrent atomic prompts, joined by key, then one summarization call.
pub fn stage1_annotate(
    descriptor: &str,
    prompts: &PromptSet,
    client: &dyn ModelClient,
    cfg: &AnnotationConfig,
) -> Result<Stage1Output, AnnotationError> {
    let sem = Semaphore::new(client.max_in_flight());
    let results: Vec<(TranscriptEntry, Result<String, ClientError>)> = std::thread::scope(|s| {
        let handles: Vec<_> = ATOMIC_KEYS
            .iter()
            .map(|&key| {
                let sem = &sem;
                s.spawn(move || sem.run(|| call(client, key, prompts.render(key, descriptor), descriptor, cfg)))
            })
            .collect();
        // Joined in key order; arrival order never reaches the output.
        handles.into_iter().map(|h| h.join().expect("annotation worker panicked")).collect()
    });
    let mut transcript = Vec::with_capacity(5);
    let mut answers = Vec::with_capacity(4);
    let mut failure = None;
    for ((entry, result), key) in results.into_iter().zip(ATOMIC_KEYS) {
        match result {
            Ok(text) => answers.push(format!("{key}: {}", text.trim())),
            Err(e) if failure.is_none() => failure = Some((key, e)),
            Err(_) => {}
        }
        transcript.push(entry);
    }
    if let Some((key, error)) = failure {
        return Err(AnnotationError::Stage { key: key.to_string(), error, transcript });
    }
    let (entry, result) = call(client, SUMMARIZE, prompts.render(SUMMARIZE, &answers.join("\n")), descriptor, cfg);
    transcript.push(entry);
    match result {
        Ok(summary) => Ok(Stage1Output { summary: summary.trim().to_string(), transcript }),
        Err(error) => Err(AnnotationError::Stage { key: SUMMARIZE.to_string(), error, transcript }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub caption: String,
    pub pairs: Vec<(String, String)>,
    /// Out-of-vocabulary selections that were dropped.
    pub rejected: Vec<(String, String)>,
    pub transcript: Vec<TranscriptEntry>,
}

#[derive(Deserialize)]
struct RefineResponse {
    #[allow(dead_code)]
    #[serde(default)]
    caption: String,
    pairs: Vec<(String, String)>,
}

/// Caption built only from validated pairs.
pub fn compose_fine_caption(high: &str, pairs: &[(String, String)]) -> String {
    let acts: Vec<String> = pairs.iter().map(|(v, n)| format!("{v} {n}")).collect();
    format!("{}. Actions: {}.", high.trim().trim_end_matches('.'), acts.join(", "))
}

/// Closed-vocabulary refinement: out-of-vocabulary pairs trigger one re-query, then are dropped.
pub fn stage2_refine(
    high_caption: &str,
    descriptor: &str,
    vocab: &ClosedVocabulary,
    prompts: &PromptSet,
    client: &dyn ModelClient,
    cfg: &AnnotationConfig,
) -> Result<Refinement, AnnotationError> {
    let base_input = format!("Caption: {}\nVocabulary:\n{}", high_caption.trim(), vocab.listing());
    let mut transcript = Vec::new();
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut rejected: Vec<(String, String)> = Vec::new();
    for round in 0..2 {
        let input = if round == 0 {
            base_input.clone()
        } else {
            let bad: Vec<String> = rejected.iter().map(|(v, n)| format!("{v} {n}")).collect();
            format!("{base_input}\nThese pairs are not in the vocabulary and were rejected: {}", bad.join(", "))
        };
        let (entry, result) = call(client, REFINE, prompts.render(REFINE, &input), descriptor, cfg);
        transcript.push(entry);
        let text = result.map_err(AnnotationError::Client)?;
        let parsed: Option<RefineResponse> = serde_json::from_str(text.trim()).ok();
        let mut fresh_rejects = 0;
        match parsed {
            Some(resp) => {
                for (v, n) in resp.pairs {
                    let p = (v.trim().to_lowercase(), n.trim().to_lowercase());
                    if vocab.contains(&p.0, &p.1) {
                        if !pairs.contains(&p) {
                            pairs.push(p);
                        }
                    } else {
                        fresh_rejects += 1;
                        if !rejected.contains(&p) {
                            rejected.push(p);
                        }
                    }
                }
            }
            None if round == 1 => return Err(AnnotationError::Malformed(format!("refinement response {text:?}"))),
            None => {
                fresh_rejects += 1;
            }
        }
        if fresh_rejects == 0 {
            break;
        }
    }
    if pairs.is_empty() {
        return Err(AnnotationError::RefinementEmpty { rejected });
    }
    Ok(Refinement { caption: compose_fine_caption(high_caption, &pairs), pairs, rejected, transcript })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub score: Option<f64>,
    pub accepted: bool,
    /// Verification could not run; the record is kept unverified.
    pub flagged: bool,
    pub transcript: Vec<TranscriptEntry>,
}

#[derive(Deserialize)]
struct VerifyResponse {
    score: f64,
}

pub fn verify_annotation(
    caption: &str,
    descriptor: &str,
    prompts: &PromptSet,
    client: &dyn ModelClient,
    cfg: &AnnotationConfig,
) -> Verification {
    let (entry, result) = call(client, VERIFY, prompts.render(VERIFY, &format!("Caption: {}", caption.trim())), descriptor, cfg);
    let score = result
        .ok()
        .and_then(|t| serde_json::from_str::<VerifyResponse>(t.trim()).ok())
        .map(|r| r.score)
        .filter(|s| (0.0..=1.0).contains(s));
    match score {
        Some(s) => Verification { score: Some(s), accepted: s >= cfg.verify_threshold, flagged: false, transcript: vec![entry] },
        None => Verification { score: None, accepted: true, flagged: true, transcript: vec![entry] },
    }
}

/// Result of annotating one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationOutcome {
    pub id: String,
    pub descriptor: String,
    pub caption_high: Option<String>,
    pub caption_fine: Option<String>,
    pub pairs: Vec<(String, String)>,
    pub verification: Option<Verification>,
    pub lof_score: Option<f64>,
    pub kept: bool,
    pub error: Option<String>,
    pub transcript: Vec<TranscriptEntry>,
}

/// Stage 1 → stage 2 → verification for each record, then the LOF filter over fine captions.
pub fn annotate_records(
    records: &[SequenceRecord],
    vocab: &ClosedVocabulary,
    prompts: &PromptSet,
    client: &dyn ModelClient,
    cfg: &AnnotationConfig,
) -> Vec<AnnotationOutcome> {
    let mut outcomes: Vec<AnnotationOutcome> = records
        .iter()
        .map(|rec| {
            let descriptor = describe_record(rec).to_string();
            let mut out = AnnotationOutcome {
                id: rec.id.clone(),
                descriptor: descriptor.clone(),
                caption_high: None,
                caption_fine: None,
                pairs: Vec::new(),
                verification: None,
                lof_score: None,
                kept: false,
                error: None,
                transcript: Vec::new(),
            };
            let s1 = match stage1_annotate(&descriptor, prompts, client, cfg) {
                Ok(s) => s,
                Err(e) => {
                    if let AnnotationError::Stage { transcript, .. } = &e {
                        out.transcript = transcript.clone();
                    }
                    out.error = Some(e.to_string());
                    return out;
                }
            };
            out.transcript = s1.transcript;
            out.caption_high = Some(s1.summary.clone());
            match stage2_refine(&s1.summary, &descriptor, vocab, prompts, client, cfg) {
                Ok(r) => {
                    out.transcript.extend(r.transcript);
                    out.pairs = r.pairs;
                    out.caption_fine = Some(r.caption);
                }
                Err(e) => {
                    out.error = Some(e.to_string());
                    return out;
                }
            }
            let v = verify_annotation(out.caption_fine.as_deref().unwrap_or_default(), &descriptor, prompts, client, cfg);
            out.transcript.extend(v.transcript.iter().cloned());
            out.kept = v.accepted;
            out.verification = Some(v);
            out
        })
        .collect();

    let candidates: Vec<usize> = (0..outcomes.len()).filter(|&i| outcomes[i].kept).collect();
    let captions: Vec<&str> = candidates.iter().map(|&i| outcomes[i].caption_fine.as_deref().unwrap_or_default()).collect();
    let (kept, scores) = filter_annotations(&captions, &HashingEmbedder::default(), cfg.lof_k, cfg.lof_threshold);
    let captions_len = captions.len();
    if !scores.is_empty() {
        for (pos, &i) in candidates.iter().enumerate() {
            outcomes[i].lof_score = Some(scores[pos]);
        }
    }
    if kept.len() < captions_len {
        let kept: std::collections::BTreeSet<usize> = kept.into_iter().collect();
        for (pos, &i) in candidates.iter().enumerate() {
            outcomes[i].kept = kept.contains(&pos);
        }
    }
    outcomes
}

/// Replaces the captions of records whose annotation was kept; other records are dropped.
pub fn apply_annotations(records: Vec<SequenceRecord>, outcomes: &[AnnotationOutcome]) -> Vec<SequenceRecord> {
    records
        .into_iter()
        .zip(outcomes)
        .filter(|(_, o)| o.kept)
        .map(|(mut rec, o)| {
            rec.caption_high = o.caption_high.clone().unwrap_or(rec.caption_high);
            rec.caption_fine = o.caption_fine.clone().unwrap_or(rec.caption_fine);
            rec
        })
        .collect()
}
