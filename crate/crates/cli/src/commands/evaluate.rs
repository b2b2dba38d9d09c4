//! `evaluate --task {t2m,m2t}`: metric report over a held-out dataset.
//!
//! Retrieval metrics rank the fine captions: the high-level ones repeat
//! across records, and a repeated caption inside a pool is an unbreakable tie.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use handlm_core::dataset::read_dataset;
use handlm_core::metrics::{corpus_bleu, diversity, kid, mm_dist, multimodality, r_precision, rouge_l, KidMode, MetricReport};
use handlm_core::{Family, MotionSequence, SequenceRecord};
use handlm_nn::evaluator::{train_evaluator, ContrastiveEvaluator, Pair};
use handlm_nn::lm::infer::{caption_motions, generate_motions};
use handlm_nn::lm::{LanguageModel, Sampling};
use handlm_nn::shift::ShiftModel;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{ensure_parent, load_lm, load_tokenizer, lm_path, tokenizer_path, EVALUATOR_FILE};
use crate::config::{derive_seed, RunConfig};
use crate::provenance::Provenance;
use crate::{CliError, EvaluateArgs, TaskArg};

pub const T2M_COLUMNS: [&str; 5] = ["RP3", "MMD", "KID", "Div", "MM"];
pub const M2T_COLUMNS: [&str; 4] = ["RP3", "B4", "B1", "RG"];

/// Trains a contrastive evaluator on both captions of every record.
pub fn fit_evaluator(records: &[SequenceRecord], cfg: &RunConfig) -> Result<ContrastiveEvaluator, CliError> {
    let pairs: Vec<Pair> = records
        .iter()
        .flat_map(|r| [Pair { motion: &r.motion, caption: &r.caption_high }, Pair { motion: &r.motion, caption: &r.caption_fine }])
        .collect();
    let labelled: Vec<(&MotionSequence, Family)> = records.iter().filter_map(|r| r.family().map(|f| (&r.motion, f))).collect();
    Ok(train_evaluator(&pairs, &labelled, &cfg.evaluator)?.0)
}

fn evaluator(cfg: &RunConfig, args: &EvaluateArgs, prov: &mut Provenance) -> Result<(ContrastiveEvaluator, PathBuf), CliError> {
    let path = args.evaluator.clone().unwrap_or_else(|| cfg.paths.checkpoints.join(EVALUATOR_FILE));
    if path.is_file() {
        return Ok((ContrastiveEvaluator::load(&path)?, path));
    }
    let train_dir = args
        .train_data
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("no evaluator at {}; pass --train-data to train one", path.display())))?;
    let records = read_dataset(train_dir)?;
    prov.input(train_dir)?;
    let ev = fit_evaluator(&records, cfg)?;
    ensure_parent(&path)?;
    ev.save(&path)?;
    Provenance::new("evaluate (evaluator training)", cfg).input(train_dir)?.write_for(&path)?;
    Ok((ev, path))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn evaluate(mut cfg: RunConfig, args: &EvaluateArgs) -> Result<(), CliError> {
    if let Some(r) = args.repeats {
        cfg.evaluation.repeats = r;
    }
    cfg.validate()?;
    let out = args.out.clone().unwrap_or_else(|| cfg.paths.reports.clone());
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let mut prov = Provenance::new(&format!("evaluate --task {}", task_name(args.task)), &cfg);
    let held = read_dataset(&args.data)?;
    prov.input(&args.data)?;
    if held.len() < cfg.evaluation.pool {
        return Err(CliError::Domain(format!(
            "{} held-out records, fewer than the retrieval pool of {}",
            held.len(),
            cfg.evaluation.pool
        )));
    }
    let tok_path = tokenizer_path(&cfg, args.model.tokenizer.as_deref());
    let lm = lm_path(&cfg, args.model.lm.as_deref())?;
    let shift = load_tokenizer(&tok_path)?;
    let model = load_lm(&lm, &shift)?;
    prov.input(&tok_path)?.input(&lm)?;
    let (ev, ev_path) = evaluator(&cfg, args, &mut prov)?;
    prov.input(&ev_path)?;

    let (report, samples) = match args.task {
        TaskArg::T2m => t2m_report(&cfg, &held, &model, &shift, &ev, &mut prov)?,
        TaskArg::M2t => m2t_report(&cfg, &held, &model, &shift, &ev)?,
    };
    let name = task_name(args.task);
    let columns: &[&str] = match args.task {
        TaskArg::T2m => &T2M_COLUMNS,
        TaskArg::M2t => &M2T_COLUMNS,
    };
    let json_path = out.join(format!("{name}_report.json"));
    write(&json_path, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    write(&out.join(format!("{name}_report.csv")), &report.to_csv(columns))?;
    let mut lines = String::new();
    for s in &samples {
        lines.push_str(&(serde_json::to_string(s).expect("sample serializes") + "\n"));
    }
    write(&out.join(format!("{name}_samples.jsonl")), &lines)?;
    prov.write_for(&json_path)?;
    let mut stdout = std::io::stdout();
    let _ = stdout.write_all(report.to_csv(columns).as_bytes());
    Ok(())
}

fn task_name(t: TaskArg) -> &'static str {
    match t {
        TaskArg::T2m => "t2m",
        TaskArg::M2t => "m2t",
    }
}

/// Generated motion for embedding; an empty span stands as the rest pose.
fn or_rest(m: Option<MotionSequence>, frames: usize, fps: f64) -> MotionSequence {
    m.unwrap_or_else(|| MotionSequence::rest(frames, fps))
}

fn t2m_report(
    cfg: &RunConfig,
    held: &[SequenceRecord],
    model: &LanguageModel,
    shift: &ShiftModel,
    ev: &ContrastiveEvaluator,
    prov: &mut Provenance,
) -> Result<(MetricReport, Vec<serde_json::Value>), CliError> {
    let e = &cfg.evaluation;
    let template = &cfg.lm.templates.t2m[0];
    let prompts: Vec<String> = held.iter().map(|r| r.caption_high.clone()).collect();
    let fine: Vec<&str> = held.iter().map(|r| r.caption_fine.as_str()).collect();
    let truth: Vec<&MotionSequence> = held.iter().map(|r| &r.motion).collect();
    let frames = truth.iter().map(|m| m.num_frames()).max().unwrap_or(cfg.generation.frames);
    let text_emb = ev.embed_texts(&fine)?;
    let truth_emb = ev.embed_motions(&truth)?;
    let mm_prompts: Vec<String> = prompts.iter().take(e.mm_prompts).flat_map(|p| std::iter::repeat(p.clone()).take(e.mm_samples)).collect();

    let mut cols: [Vec<f64>; 5] = Default::default();
    let mut gt_rp3 = Vec::new();
    let (mut empty, mut codec_errors) = (0usize, 0usize);
    let mut samples = Vec::new();
    for r in 0..e.repeats {
        let seed = derive_seed(cfg.seed, &format!("t2m-repeat-{r}"));
        let sampling = Sampling { seed, ..cfg.generation.t2m_sampled.clone() };
        let gens = generate_motions(model, shift, &prompts, template, &sampling, frames)?;
        empty += gens.iter().filter(|g| g.motion.is_none()).count();
        codec_errors += gens.iter().filter(|g| g.codec_error.is_some()).count();
        if r == 0 {
            for (g, rec) in gens.iter().zip(held) {
                samples.push(json!({ "id": rec.id, "prompt": rec.caption_high, "steps": g.tokens.len(), "truncated": g.truncated }));
            }
        }
        let motions: Vec<MotionSequence> = gens.into_iter().map(|g| or_rest(g.motion, frames, shift.config.fps)).collect();
        let gen_emb = ev.embed_motions(&motions.iter().collect::<Vec<_>>())?;
        cols[0].push(r_precision(text_emb.view(), gen_emb.view(), e.pool, e.top_k, seed)?);
        cols[1].push(mm_dist(text_emb.view(), gen_emb.view())?);
        cols[2].push(kid(gen_emb.view(), truth_emb.view(), KidMode::UnbiasedBlocks)?);
        cols[3].push(diversity(gen_emb.view(), e.diversity_pairs, seed)?);
        gt_rp3.push(r_precision(text_emb.view(), truth_emb.view(), e.pool, e.top_k, seed)?);

        let mm_sampling = Sampling { seed: seed ^ 0x5eed, ..sampling };
        let mm = generate_motions(model, shift, &mm_prompts, template, &mm_sampling, frames)?;
        let mm_motions: Vec<MotionSequence> = mm.into_iter().map(|g| or_rest(g.motion, frames, shift.config.fps)).collect();
        let mm_emb = ev.embed_motions(&mm_motions.iter().collect::<Vec<_>>())?;
        let groups: Vec<Array2<f64>> = mm_emb
            .outer_iter()
            .collect::<Vec<_>>()
            .chunks(e.mm_samples)
            .map(|c| ndarray::stack(ndarray::Axis(0), c).expect("equal widths"))
            .collect();
        cols[4].push(multimodality(&groups.iter().map(|g| g.view()).collect::<Vec<_>>())?);
    }
    let mut report = MetricReport::new("t2m", &ev.hash()?);
    for (name, values) in T2M_COLUMNS.iter().zip(&cols) {
        report.insert(name, values)?;
    }
    prov.note("ground_truth_rp3", gt_rp3.iter().sum::<f64>() / gt_rp3.len() as f64)
        .note("empty_spans", empty)
        .note("codec_errors", codec_errors)
        .note("generations", e.repeats * held.len());
    Ok((report, samples))
}

fn m2t_report(
    cfg: &RunConfig,
    held: &[SequenceRecord],
    model: &LanguageModel,
    shift: &ShiftModel,
    ev: &ContrastiveEvaluator,
) -> Result<(MetricReport, Vec<serde_json::Value>), CliError> {
    let e = &cfg.evaluation;
    let motions: Vec<&MotionSequence> = held.iter().map(|r| &r.motion).collect();
    let captions = caption_motions(model, shift, &motions, &cfg.lm.templates.m2t[0], &cfg.generation.m2t)?;
    let motion_emb = ev.embed_motions(&motions)?;
    let caption_emb = ev.embed_texts(&captions.iter().map(String::as_str).collect::<Vec<_>>())?;
    let n = held.len();
    let mut cols: [Vec<f64>; 4] = Default::default();
    for r in 0..e.repeats {
        let seed = derive_seed(cfg.seed, &format!("m2t-repeat-{r}"));
        cols[0].push(r_precision(caption_emb.view(), motion_emb.view(), e.pool, e.top_k, seed)?);
        // Language metrics over a bootstrap resample of the records.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let cands: Vec<&str> = idx.iter().map(|&i| captions[i].as_str()).collect();
        let refs: Vec<Vec<&str>> = idx.iter().map(|&i| vec![held[i].caption_high.as_str(), held[i].caption_fine.as_str()]).collect();
        cols[1].push(corpus_bleu(&cands, &refs, 4));
        cols[2].push(corpus_bleu(&cands, &refs, 1));
        let rg: f64 = idx
            .iter()
            .map(|&i| rouge_l(&captions[i], &held[i].caption_high).max(rouge_l(&captions[i], &held[i].caption_fine)))
            .sum();
        cols[3].push(rg / n as f64);
    }
    let mut report = MetricReport::new("m2t", &ev.hash()?);
    for (name, values) in M2T_COLUMNS.iter().zip(&cols) {
        report.insert(name, values)?;
    }
    let samples = held
        .iter()
        .zip(&captions)
        .map(|(r, c)| json!({ "id": r.id, "caption": c, "reference": r.caption_high }))
        .collect();
    Ok((report, samples))
}
