//! `generate`, `caption`, `export`.

use std::fs;
use std::io::Write;

use handlm_core::dataset::{read_hmw, write_hmw};
use handlm_core::metrics::joint_positions;
use handlm_core::{HandSkeleton, MotionSequence};
use handlm_nn::lm::infer::{caption_motions, generate_motions};
use ndarray::{s, Array2};
use serde_json::json;

use super::{ensure_parent, load_lm, load_tokenizer, lm_path, tokenizer_path};
use crate::config::RunConfig;
use crate::provenance::Provenance;
use crate::{CaptionArgs, CliError, ExportArgs, ExportFormat, GenerateArgs};

pub fn generate(mut cfg: RunConfig, args: &GenerateArgs) -> Result<(), CliError> {
    if let Some(f) = args.frames {
        cfg.generation.frames = f;
    }
    if args.temperature.is_some() || args.top_k.is_some() {
        let t = &mut cfg.generation.t2m;
        t.temperature = args.temperature.unwrap_or(cfg.generation.t2m_sampled.temperature);
        t.top_k = args.top_k.unwrap_or(cfg.generation.t2m_sampled.top_k);
    }
    cfg.validate()?;
    let tok_path = tokenizer_path(&cfg, args.model.tokenizer.as_deref());
    let lm = lm_path(&cfg, args.model.lm.as_deref())?;
    let shift = load_tokenizer(&tok_path)?;
    let model = load_lm(&lm, &shift)?;
    let template = &cfg.lm.templates.t2m[0];
    let g = generate_motions(&model, &shift, &[args.text.clone()], template, &cfg.generation.t2m, cfg.generation.frames)?.remove(0);
    // An empty motion span cannot be stored; the rest pose stands in and the provenance says so.
    let empty = g.motion.is_none();
    let motion = g.motion.unwrap_or_else(|| MotionSequence::rest(cfg.generation.frames, shift.config.fps));
    if empty {
        log::warn!("the model produced an empty motion span; writing the rest pose");
    }
    ensure_parent(&args.out)?;
    write_hmw(&args.out, &motion)?;
    let mut prov = Provenance::new("generate", &cfg);
    prov.input(&tok_path)?.input(&lm)?;
    prov.note("text", &args.text)
        .note("frames", motion.num_frames())
        .note("steps", g.tokens.len())
        .note("truncated", g.truncated)
        .note("repaired", g.repaired != g.ids)
        .note("empty_span", empty);
    prov.write_for(&args.out)?;
    println!("wrote {} frames to {}", motion.num_frames(), args.out.display());
    Ok(())
}

pub fn caption(cfg: RunConfig, args: &CaptionArgs) -> Result<(), CliError> {
    let tok_path = tokenizer_path(&cfg, args.model.tokenizer.as_deref());
    let lm = lm_path(&cfg, args.model.lm.as_deref())?;
    let shift = load_tokenizer(&tok_path)?;
    let model = load_lm(&lm, &shift)?;
    let motion = read_hmw(&args.motion)?;
    let text = caption_motions(&model, &shift, &[&motion], &cfg.lm.templates.m2t[0], &cfg.generation.m2t)?.remove(0);
    println!("{text}");
    if let Some(out) = &args.out {
        ensure_parent(out)?;
        fs::write(out, serde_json::to_string_pretty(&json!({ "caption": text })).expect("json") + "\n").map_err(|e| CliError::io(out, e))?;
        let mut prov = Provenance::new("caption", &cfg);
        prov.input(&args.motion)?.input(&tok_path)?.input(&lm)?;
        prov.write_for(out)?;
    }
    Ok(())
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

/// Motion as JSON: per hand, N×9 trajectory and N×90 pose rows.
pub fn motion_json(m: &MotionSequence) -> serde_json::Value {
    let hand = |h: &handlm_core::HandTrack| json!({ "trajectory": rows(&h.trajectory), "pose": rows(&h.pose) });
    json!({ "fps": m.fps, "num_frames": m.num_frames(), "left": hand(&m.left), "right": hand(&m.right) })
}

/// One header row, then one row of 198 channels per frame.
pub fn motion_csv(m: &MotionSequence) -> String {
    let flat = m.flatten();
    let mut header = vec!["frame".to_string()];
    for side in ["l", "r"] {
        header.extend((0..9).map(|i| format!("{side}_traj_{i}")));
        header.extend((0..90).map(|i| format!("{side}_pose_{i}")));
    }
    let mut out = header.join(",") + "\n";
    for (t, row) in flat.outer_iter().enumerate() {
        out.push_str(&t.to_string());
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

/// Forward-kinematics joints, N×16×3 per hand, in meters.
pub fn keypoints_json(m: &MotionSequence) -> Result<serde_json::Value, CliError> {
    let skeleton = HandSkeleton::default();
    let joints = joint_positions(m, &skeleton)?;
    let per_hand = joints.dim().1 / 2;
    let hand = |off: usize| -> Vec<Vec<Vec<f64>>> {
        (0..joints.dim().0)
            .map(|t| (0..per_hand).map(|j| joints.slice(s![t, off + j, ..]).to_vec()).collect())
            .collect()
    };
    Ok(json!({ "fps": m.fps, "num_frames": m.num_frames(), "joints_per_hand": per_hand, "left": hand(0), "right": hand(per_hand) }))
}

pub fn export(_cfg: RunConfig, args: &ExportArgs) -> Result<(), CliError> {
    let m = read_hmw(&args.motion)?;
    let text = match args.format {
        ExportFormat::Json => serde_json::to_string(&motion_json(&m)).expect("json") + "\n",
        ExportFormat::Csv => motion_csv(&m),
        ExportFormat::Keypoints => serde_json::to_string(&keypoints_json(&m)?).expect("json") + "\n",
    };
    match &args.out {
        Some(p) => {
            ensure_parent(p)?;
            fs::write(p, text).map_err(|e| CliError::io(p, e))
        }
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Domain(format!("stdout: {e}"))),
    }
}
