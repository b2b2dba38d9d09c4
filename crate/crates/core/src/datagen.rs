//! Synthetic captioned bimanual-motion corpus.
//!
//! Every sample comes from one of eight parameterized [`Family`] generators
//! with randomized amplitude, speed, phase and leading hand. Captions are
//! templated from the same parameters, so text and motion agree exactly.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::family::Family;
use crate::motion::{axis_angle, rot6d_from_matrix, HandTrack, MotionSequence, DEFAULT_FPS, POSE_JOINTS};
use crate::record::SequenceRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_frames: usize,
    pub fps: f64,
    /// Frames per hand that may be marked invisible.
    pub max_dropout_frames: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { num_frames: 64, fps: DEFAULT_FPS, max_dropout_frames: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speed {
    Slow,
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Amplitude {
    Small,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn word(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
    fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Everything needed to render one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleParams {
    pub family: Family,
    pub speed: Speed,
    pub amplitude: Amplitude,
    pub lead: Side,
    /// Oscillation frequency in Hz.
    pub freq: f64,
    /// Multiplier on the family's nominal amplitude.
    pub scale: f64,
    pub phase: f64,
}

impl SampleParams {
    pub fn sample(family: Family, rng: &mut impl Rng) -> Self {
        let speed = if rng.gen_bool(0.5) { Speed::Slow } else { Speed::Fast };
        let amplitude = if rng.gen_bool(0.5) { Amplitude::Small } else { Amplitude::Large };
        let lead = if rng.gen_bool(0.5) { Side::Left } else { Side::Right };
        let freq = match speed {
            Speed::Slow => rng.gen_range(0.5..0.8),
            Speed::Fast => rng.gen_range(1.0..1.4),
        };
        let scale = match amplitude {
            Amplitude::Small => rng.gen_range(0.6..0.8),
            Amplitude::Large => rng.gen_range(1.1..1.4),
        };
        let phase = rng.gen_range(0.0..TAU);
        Self { family, speed, amplitude, lead, freq, scale, phase }
    }

    pub fn caption_high(&self) -> String {
        let lead = self.lead.word();
        match self.family {
            Family::Wave => format!("someone waves the {lead} hand {}", self.adverb()),
            Family::CircleTrace => format!("someone traces a circle in the air with the {lead} hand"),
            Family::GraspClose => format!("someone repeatedly grasps with the {lead} hand"),
            Family::PourTilt => format!("someone pours from a container held in the {lead} hand"),
            Family::KeyPress => "someone presses keys with both hands".to_string(),
            Family::Wipe => format!("someone wipes a surface with the {lead} hand"),
            Family::KnitLoop => "someone knits with both hands".to_string(),
            Family::Clap => "someone claps both hands together".to_string(),
        }
    }

    pub fn caption_fine(&self) -> String {
        let (lead, other) = (self.lead.word(), self.lead.other().word());
        let (adv, amp) = (self.adverb(), self.size_word());
        match self.family {
            Family::Wave => format!(
                "the {lead} hand is raised and makes a {amp} wave side to side {adv} while the {other} hand stays relaxed"
            ),
            Family::CircleTrace => format!(
                "the {lead} index finger points out and the hand traces a {amp} circle {adv} while the {other} hand stays relaxed"
            ),
            Family::GraspClose => format!(
                "the {lead} hand opens and closes its fingers in a {amp} grasp {adv} while the {other} hand stays relaxed"
            ),
            Family::PourTilt => format!(
                "the {lead} hand holds a container and tilts it to pour with a {amp} tilt {adv} while the {other} hand stays relaxed"
            ),
            Family::KeyPress => {
                format!("both hands rest over a keyboard and the fingers press keys in alternation with {amp} strokes {adv}")
            }
            Family::Wipe => format!(
                "the {lead} hand lies flat and moves back and forth to wipe with {amp} strokes {adv} while the {other} hand stays relaxed"
            ),
            Family::KnitLoop => format!("both hands hold needles close together and make {amp} knit loops in opposite phase {adv}"),
            Family::Clap => format!("both hands face each other and come together to clap with {amp} swings {adv}"),
        }
    }

    fn adverb(&self) -> &'static str {
        match self.speed {
            Speed::Slow => "slowly",
            Speed::Fast => "quickly",
        }
    }

    fn size_word(&self) -> &'static str {
        match self.amplitude {
            Amplitude::Small => "small",
            Amplitude::Large => "wide",
        }
    }
}

/// Per-frame articulation of one hand before conversion to 6D.
struct HandFrame {
    offset: Vector3<f64>,
    rotation: Matrix3<f64>,
    /// Flexion per finger (thumb..pinky), radians at the base joint.
    flex: [f64; 5],
}

impl HandFrame {
    fn relaxed() -> Self {
        Self { offset: Vector3::zeros(), rotation: Matrix3::identity(), flex: [0.3; 5] }
    }
}

/// Renders the motion for `params`.
pub fn render_motion(params: &SampleParams, config: &GeneratorConfig) -> MotionSequence {
    let n = config.num_frames;
    let mut left = HandTrack::rest(n);
    let mut right = HandTrack::rest(n);
    let w = TAU * params.freq;
    let s = params.scale;
    let phi = params.phase;
    let lead_sign = match params.lead {
        Side::Left => -1.0,
        Side::Right => 1.0,
    };
    for i in 0..n {
        let t = i as f64 / config.fps;
        let a = w * t + phi;
        let mut lead = HandFrame::relaxed();
        let mut other = HandFrame::relaxed();
        match params.family {
            Family::Wave => {
                lead.offset = Vector3::new(0.0, 0.05, 0.15);
                lead.rotation = axis_angle(Vector3::z(), 0.5 * s * a.sin());
                lead.flex = [0.05; 5];
            }
            Family::CircleTrace => {
                lead.offset = Vector3::new(0.06 * s * a.cos(), 0.06 * s * a.sin(), 0.05);
                lead.flex = [0.9, 0.05, 1.2, 1.2, 1.2];
            }
            Family::GraspClose => {
                let f = (0.7 + 0.6 * s * a.sin()).clamp(0.0, 1.6);
                lead.flex = [0.6 * f, f, f, f, f];
                lead.offset = Vector3::new(0.02 * s * a.sin(), 0.0, 0.0);
            }
            Family::PourTilt => {
                lead.flex = [0.8, 1.0, 1.0, 1.0, 1.0];
                lead.rotation = axis_angle(Vector3::x(), lead_sign * 0.6 * s * (0.5 - 0.5 * a.cos()));
                lead.offset = Vector3::new(0.0, 0.0, 0.1 + 0.03 * s * a.sin());
            }
            Family::KeyPress => {
                for (hand, shift) in [(&mut lead, 0.0), (&mut other, PI)] {
                    for f in 0..5 {
                        let c = (1.0 + (a + shift + f as f64 * TAU / 5.0).sin()) / 2.0;
                        hand.flex[f] = 0.2 + 0.5 * s * c * c;
                    }
                    hand.offset = Vector3::new(0.0, 0.0, 0.01 * s * (a + shift).sin());
                }
            }
            Family::Wipe => {
                lead.flex = [0.0; 5];
                lead.offset = Vector3::new(0.08 * s * a.sin(), 0.02 * s * a.cos(), 0.0);
            }
            Family::KnitLoop => {
                for (hand, shift, inward) in [(&mut lead, 0.0, -lead_sign), (&mut other, PI, lead_sign)] {
                    hand.offset = Vector3::new(
                        inward * 0.12,
                        0.03 * s * (a + shift).sin(),
                        0.03 * s * (a + shift).cos(),
                    );
                    hand.flex = [0.5, 0.6 + 0.2 * (a + shift).sin(), 0.8, 0.8, 0.8];
                }
            }
            Family::Clap => {
                let close = 0.1 * s * (0.5 - 0.5 * a.cos());
                for (hand, sign) in [(&mut lead, lead_sign), (&mut other, -lead_sign)] {
                    hand.offset = Vector3::new(-sign * close, 0.0, 0.1);
                    hand.rotation = axis_angle(Vector3::x(), sign * 1.4);
                    hand.flex = [0.1; 5];
                }
            }
        }
        let (lf, rf) = match params.lead {
            Side::Left => (lead, other),
            Side::Right => (other, lead),
        };
        write_frame(&mut left, i, &lf, Vector3::new(-0.2, 0.0, 0.0));
        write_frame(&mut right, i, &rf, Vector3::new(0.2, 0.0, 0.0));
    }
    let mut m = MotionSequence { fps: config.fps, left, right };
    m.recenter();
    m.round_to_f32();
    m
}

fn write_frame(track: &mut HandTrack, i: usize, frame: &HandFrame, base: Vector3<f64>) {
    let r6 = rot6d_from_matrix(&frame.rotation).expect("generator rotations are orthonormal");
    let p = base + frame.offset;
    for c in 0..6 {
        track.trajectory[(i, c)] = r6[c];
    }
    for a in 0..3 {
        track.trajectory[(i, 6 + a)] = p[a];
    }
    const JOINT_SHARE: [f64; 3] = [1.0, 0.8, 0.6];
    for j in 0..POSE_JOINTS {
        let (finger, k) = (j / 3, j % 3);
        // Flexion curls toward the palm (about +y); the thumb also opposes slightly.
        let mut r = axis_angle(Vector3::y(), frame.flex[finger] * JOINT_SHARE[k]);
        if finger == 0 {
            r = axis_angle(Vector3::z(), -0.3 * frame.flex[0]) * r;
        }
        let r6 = rot6d_from_matrix(&r).expect("generator rotations are orthonormal");
        for c in 0..6 {
            track.pose[(i, 6 * j + c)] = r6[c];
        }
    }
}

fn render_visibility(n: usize, max_dropout: usize, rng: &mut impl Rng) -> Vec<[bool; 2]> {
    let mut vis = vec![[true; 2]; n];
    for hand in 0..2 {
        let drops = rng.gen_range(0..=max_dropout.min(n / 10));
        for _ in 0..drops {
            let t = rng.gen_range(0..n);
            vis[t][hand] = false;
        }
    }
    vis
}

/// Deterministic corpus of `num` records; families cycle so classes stay balanced.
pub fn generate_corpus(num: usize, seed: u64) -> Vec<SequenceRecord> {
    generate_corpus_with(&GeneratorConfig::default(), num, seed)
}

pub fn generate_corpus_with(config: &GeneratorConfig, num: usize, seed: u64) -> Vec<SequenceRecord> {
    generate_samples(config, num, seed).into_iter().map(|(record, _)| record).collect()
}

/// Like [`generate_corpus_with`], also returning the generating parameters.
pub fn generate_samples(config: &GeneratorConfig, num: usize, seed: u64) -> Vec<(SequenceRecord, SampleParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num)
        .map(|i| {
            let family = Family::ALL[i % Family::ALL.len()];
            let params = SampleParams::sample(family, &mut rng);
            let motion = render_motion(&params, config);
            let visibility = render_visibility(config.num_frames, config.max_dropout_frames, &mut rng);
            let record = SequenceRecord {
                id: format!("s{seed}-{i:05}"),
                motion,
                caption_high: params.caption_high(),
                caption_fine: params.caption_fine(),
                visibility,
                filter_log: Vec::new(),
            };
            (record, params)
        })
        .collect()
}

/// Displaces the left wrist by `offset` meters at a single frame.
pub fn inject_frame_jump(motion: &mut MotionSequence, frame: usize, offset: Vector3<f64>) {
    for a in 0..3 {
        motion.left.trajectory[(frame, 6 + a)] += offset[a];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = generate_corpus(3, 7);
        let b = generate_corpus(3, 7);
        assert_eq!(a, b);
        assert_ne!(a, generate_corpus(3, 8));
    }

    #[test]
    fn captions_name_their_family() {
        for (rec, params) in generate_samples(&GeneratorConfig::default(), 40, 2) {
            assert_eq!(Family::from_text(&rec.caption_fine), Some(params.family), "{}", rec.caption_fine);
            assert_eq!(Family::from_text(&rec.caption_high), Some(params.family), "{}", rec.caption_high);
            assert_eq!(rec.family(), Some(params.family));
        }
    }

    #[test]
    fn motions_are_valid_and_centered() {
        for rec in generate_corpus(16, 5) {
            rec.motion.validate().unwrap();
            let mid = (rec.motion.left.translation(0) + rec.motion.right.translation(0)) / 2.0;
            assert!(mid.norm() < 1e-6);
            assert_eq!(rec.visibility.len(), rec.motion.num_frames());
        }
    }
}
