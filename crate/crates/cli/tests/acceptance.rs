//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Run a subset with `cargo test -p handlm-cli --test acceptance -- 3 7 13`.
//! Criteria 10 to 12 share one tokenizer and one language model, trained once.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use candle_core::{DType, Device, Tensor, Var};
use handlm_core::annotation::{annotate_records, apply_annotations, lof_scores, AnnotationConfig, ClosedVocabulary, MockClient, PromptSet};
use handlm_core::codec::{deinterleave, interleave, repair, MotionTokens, Vocabulary};
use handlm_core::curation::{curate, CurationConfig};
use handlm_core::datagen::{generate_corpus, inject_frame_jump};
use handlm_core::dataset::read_hmw;
use handlm_core::filters::{accel_score, savitzky_golay, savitzky_golay_coefficients, translation_accels};
use handlm_core::metrics::{bleu, kid, mm_dist, mpjpe, pa_mpjpe, procrustes_align, r_precision, rouge_l, KidMode};
use handlm_core::motion::{axis_angle, matrix_from_rot6d, rot6d_from_matrix};
use handlm_core::text::TextTokenizer;
use handlm_core::{Family, HandSkeleton, HandTrack, MotionSequence, SequenceRecord};
use handlm_nn::evaluator::{train_evaluator, EvaluatorConfig, Pair};
use handlm_nn::lm::data::{example, Example, InstructionTemplates, Task};
use handlm_nn::lm::gumbel::{gumbel_noise, gumbel_softmax, soft_decode, soft_decode_tensors};
use handlm_nn::lm::infer::{caption_motions, generate_motions, t2m_motion_mse, GeneratedMotion};
use handlm_nn::lm::train::{new_model, refine_step, train_stage, LmCorpus, StageConfig};
use handlm_nn::lm::{LanguageModel, LmConfig, Sampling};
use handlm_nn::params::{scalar, ParamStore};
use handlm_nn::shift::{latent_objective, lookup, quantize, ModalityAe, Normalizer, ShiftConfig, ShiftModel};
use handlm_nn::shift_train::{corpus_perplexity, train_tokenizer, ShiftTrainConfig};
use nalgebra::{DMatrix, Matrix3, Quaternion, UnitQuaternion, Vector3};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn vec1(t: &Tensor) -> Vec<f64> {
    t.flatten_all().unwrap().to_dtype(DType::F64).unwrap().to_vec1::<f64>().unwrap()
}

/// Component-wise `|a − b| ≤ tol · max(|b|, floor)`; returns the worst ratio.
fn relative_check(analytic: &[f64], numeric: &[f64], tol: f64, floor: f64) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let ratio = (a - n).abs() / (tol * n.abs().max(floor));
        if ratio > 1.0 {
            return Err(format!("component {i}: analytic {a:e}, finite difference {n:e}"));
        }
        worst = worst.max(ratio * tol);
    }
    Ok(worst)
}

// 1 ---------------------------------------------------------------------------

/// Uniform rotation from a normalized Gaussian quaternion.
fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let q = Quaternion::new(gaussian(rng), gaussian(rng), gaussian(rng), gaussian(rng));
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

fn c01_rotations() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let r = random_rotation(&mut rng);
        let back = ok(matrix_from_rot6d(&ok(rot6d_from_matrix(&r))?))?;
        worst = worst.max((back - r).norm());
    }
    ensure!(worst < 1e-6, "worst Frobenius error {worst:e}");
    let degenerate: [[f64; 6]; 4] = [
        [1.0, 0.0, 0.0, 1.0 + 1e-12, 0.0, 0.0],
        [0.0; 6],
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [f64::NAN, 0.0, 0.0, 0.0, 1.0, 0.0],
    ];
    for d in degenerate {
        ensure!(matrix_from_rot6d(&d).is_err(), "accepted degenerate input {d:?}");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("worst error {worst:.1e}, 4 degenerate inputs rejected, {elapsed:.2?}"))
}

// 2 ---------------------------------------------------------------------------

/// Center row of the least-squares smoothing matrix `(AᵀA)⁻¹Aᵀ` for a Vandermonde `A`.
fn sg_oracle(window: usize, order: usize) -> Vec<f64> {
    let half = (window / 2) as f64;
    let a = DMatrix::from_fn(window, order + 1, |i, j| (i as f64 - half).powi(j as i32));
    let ata = a.transpose() * &a;
    let pinv = ata.try_inverse().expect("full rank") * a.transpose();
    pinv.row(0).iter().copied().collect()
}

fn c02_savitzky_golay() -> Outcome {
    let mut worst = 0.0f64;
    for (w, o) in [(5, 2), (7, 3), (9, 2), (11, 4)] {
        let got = ok(savitzky_golay_coefficients(w, o))?;
        for (a, b) in got.iter().zip(sg_oracle(w, o)) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure!(worst < 1e-12, "coefficients off by {worst:e}");
    let got = ok(savitzky_golay_coefficients(5, 2))?;
    let literal = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v: f64| v / 35.0);
    ensure!(got.iter().zip(literal).all(|(a, b)| (a - b).abs() < 1e-12), "window 5 order 2 gave {got:?}");

    let n = 40;
    let signal = Array2::from_shape_fn((n, 2), |(t, c)| {
        let t = t as f64;
        if c == 0 {
            t * t
        } else {
            0.3 - 1.2 * t + 0.05 * t * t
        }
    });
    let mut poly = 0.0f64;
    for (w, o) in [(5, 2), (7, 3), (7, 2)] {
        let out = ok(savitzky_golay(signal.view(), w, o))?;
        let h = w / 2;
        let dev = (&out.slice(s![h..n - h, ..]) - &signal.slice(s![h..n - h, ..])).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        poly = poly.max(dev);
    }
    ensure!(poly < 1e-9, "polynomial reproduction off by {poly:e}");
    Ok(format!("coefficients within {worst:.1e}, polynomial reproduction within {poly:.1e}"))
}

// 3 ---------------------------------------------------------------------------

fn set_translation(track: &mut HandTrack, t: usize, p: Vector3<f64>) {
    for a in 0..3 {
        track.trajectory[(t, 6 + a)] = p[a];
    }
}

/// Second differences of wrist positions, scaled by fps².
fn accel_oracle(track: &HandTrack, fps: f64) -> Vec<f64> {
    let p: Vec<Vector3<f64>> = (0..track.num_frames()).map(|t| track.translation(t)).collect();
    (1..p.len() - 1).map(|t| ((p[t + 1] - p[t] * 2.0 + p[t - 1]) * fps * fps).norm()).collect()
}

fn c03_accel_filter() -> Outcome {
    // Dyadic velocities keep every difference exact.
    let mut track = HandTrack::rest(30);
    for t in 0..30 {
        set_translation(&mut track, t, Vector3::new(0.0625, -0.125, 0.25) * t as f64);
    }
    let (trans, rot) = ok(accel_score(&track, 30.0, 3))?;
    ensure!(trans == 0.0 && rot == 0.0, "constant velocity scored ({trans}, {rot})");

    let mut track = HandTrack::rest(10);
    set_translation(&mut track, 9, Vector3::new(0.1, 0.0, 0.0));
    let top = translation_accels(&track, 30.0).into_iter().fold(0.0, f64::max);
    let oracle = accel_oracle(&track, 30.0).into_iter().fold(0.0, f64::max);
    ensure!(top == oracle && top == 90.0, "top-1 accel {top}, oracle {oracle}");
    let (score, _) = ok(accel_score(&track, 30.0, 3))?;
    ensure!(score == 30.0, "top-3 score {score}");

    let mut corpus = generate_corpus(100, 31);
    let mut planted = Vec::new();
    for (i, rec) in corpus.iter_mut().enumerate().filter(|(i, _)| i % 10 == 3) {
        let frame = (i * 7) % rec.motion.num_frames();
        inject_frame_jump(&mut rec.motion, frame, Vector3::new(0.0, 0.5, 0.0));
        planted.push(rec.id.clone());
    }
    let (_, report) = curate(corpus, &CurationConfig::default());
    let rejected: Vec<&str> = report.rejected_ids();
    let hits = rejected.iter().filter(|id| planted.iter().any(|p| p == *id)).count();
    let precision = hits as f64 / rejected.len().max(1) as f64;
    let recall = hits as f64 / planted.len() as f64;
    ensure!(precision == 1.0 && recall == 1.0, "precision {precision}, recall {recall}");
    Ok(format!("constant velocity 0, jump top-1 {top} m/s², planted jumps precision {precision} recall {recall}"))
}

// 4 ---------------------------------------------------------------------------

/// Textbook LOF from the full distance matrix.
fn lof_oracle(points: &Array2<f64>, k: usize) -> Vec<f64> {
    let m = points.nrows();
    let d = |i: usize, j: usize| -> f64 { points.row(i).iter().zip(points.row(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() };
    let knn: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            let mut order: Vec<(f64, usize)> = (0..m).filter(|&j| j != i).map(|j| (d(i, j), j)).collect();
            order.sort_by(|a, b| a.partial_cmp(b).unwrap());
            order.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();
    let kdist: Vec<f64> = (0..m).map(|i| d(i, knn[i][k - 1])).collect();
    let lrd: Vec<f64> = (0..m)
        .map(|i| {
            let mean = knn[i].iter().map(|&o| kdist[o].max(d(i, o))).sum::<f64>() / k as f64;
            1.0 / mean.max(1e-12)
        })
        .collect();
    (0..m).map(|i| knn[i].iter().map(|&o| lrd[o]).sum::<f64>() / (k as f64 * lrd[i])).collect()
}

fn c04_lof() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for (m, k) in [(12, 3), (60, 5), (200, 10), (200, 20)] {
        let pts = Array2::from_shape_fn((m, 3), |_| gaussian(&mut rng));
        let got = ok(lof_scores(pts.view(), k))?;
        for (a, b) in got.iter().zip(lof_oracle(&pts, k)) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure!(worst < 1e-9, "LOF off by {worst:e}");
    let mut pts = Array2::from_shape_fn((11, 2), |_| rng.gen_range(-0.1..0.1));
    pts.row_mut(10).assign(&ndarray::arr1(&[10.0, 10.0]));
    let scores = ok(lof_scores(pts.view(), 3))?;
    let max = scores.iter().cloned().fold(f64::MIN, f64::max);
    let argmax: Vec<usize> = (0..11).filter(|&i| scores[i] == max).collect();
    ensure!(argmax == [10] && max > 1.5, "planted point scores {max}, maxima at {argmax:?}");
    Ok(format!("oracle agreement {worst:.1e} up to M=200, planted outlier LOF {max:.1}"))
}

// 5 ---------------------------------------------------------------------------

fn c05_quantize() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ties = 0usize;
    for trial in 0..300 {
        let k = rng.gen_range(1..=64);
        let d = rng.gen_range(1..=6);
        let lattice = trial % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| if lattice { rng.gen_range(-2..=2) as f64 } else { gaussian(rng) };
        let mut cb = Array2::from_shape_fn((k, d), |_| draw(&mut rng));
        if k > 1 {
            let src = rng.gen_range(0..k);
            let dst = rng.gen_range(0..k);
            let row = cb.row(src).to_owned();
            cb.row_mut(dst).assign(&row);
        }
        let z = Array2::from_shape_fn((40, d), |_| draw(&mut rng));
        let (idx, q) = quantize(z.view(), cb.view());
        for (i, row) in z.rows().into_iter().enumerate() {
            let dists: Vec<f64> = cb.rows().into_iter().map(|c| row.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum()).collect();
            let best = dists.iter().cloned().fold(f64::INFINITY, f64::min);
            let first = dists.iter().position(|&v| v == best).unwrap();
            ties += (dists.iter().filter(|&&v| v == best).count() > 1) as usize;
            ensure!(idx[i] as usize == first, "trial {trial} row {i}: index {} but exhaustive search gives {first}", idx[i]);
            ensure!(q.row(i) == cb.row(first), "trial {trial} row {i}: quantized row is not the codebook row");
        }
        let (idx2, q2) = quantize(q.view(), cb.view());
        ensure!(idx2 == idx && q2 == q, "trial {trial}: quantization not idempotent");
        let zt = ok(Tensor::from_vec(z.iter().cloned().collect::<Vec<_>>(), (1, 40, d), &Device::Cpu))?;
        let zt = ok(zt.transpose(1, 2))?;
        let cbt = ok(Tensor::from_vec(cb.iter().cloned().collect::<Vec<_>>(), (k, d), &Device::Cpu))?;
        let (tidx, _) = ok(lookup(&zt, &cbt))?;
        ensure!(tidx == idx, "trial {trial}: tensor lookup disagrees");
    }
    ensure!(ties > 0, "no ties exercised");
    Ok(format!("300 random codebooks (K ≤ 64) match exhaustive search, {ties} tied rows resolved to the lowest index"))
}

// 6 ---------------------------------------------------------------------------

fn c06_straight_through() -> Outcome {
    let dev = Device::Cpu;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = ParamStore::new(DType::F64);
    let ae = ok(ModalityAe::new(&mut store, "m", 3, 4, 2, 2, &mut rng))?;
    let codebook = ok(Tensor::from_vec((0..8).map(|_| gaussian(&mut rng)).collect::<Vec<_>>(), (4, 2), &dev))?;
    let params = store.num_params() + 8;
    ensure!(params < 1000, "{params} parameters");
    let x = ok(Tensor::from_vec((0..12).map(|_| gaussian(&mut rng)).collect::<Vec<_>>(), (1, 3, 4), &dev))?;
    let beta = 0.25;

    let z0 = ok(ae.encode(&x))?;
    let terms = ok(latent_objective(&ae, &codebook, &z0, &x, 1, beta))?;
    let grads = ok(terms.total.backward())?;
    let (_, q0) = ok(lookup(&z0, &codebook))?;
    let offset = ok(&q0 - &z0)?.detach();
    let q0 = q0.detach();
    // Quantization held fixed: rec(dec(z + c0)) + β‖z − q0‖².
    // Returns (rec, ‖z − q0‖² mean); the differentiated surrogate is rec + β·commit.
    let surrogate = || -> (f64, f64) {
        let z = ae.encode(&x).unwrap();
        let rec = (ae.decode(&(&z + &offset).unwrap()).unwrap() - &x).unwrap().sqr().unwrap().mean_all().unwrap();
        let commit = (&z - &q0).unwrap().sqr().unwrap().mean_all().unwrap();
        (scalar(&rec).unwrap(), scalar(&commit).unwrap())
    };
    let assignments = || latent_objective(&ae, &codebook, &ae.encode(&x).unwrap(), &x, 1, beta).unwrap().indices;

    let names: Vec<String> = store.names().filter(|n| n.starts_with("m.enc")).map(String::from).collect();
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    let h = 1e-6;
    for name in &names {
        let var: &Var = store.var(name).unwrap();
        let base = vec1(var.as_tensor());
        let shape = var.shape().clone();
        analytic.extend(vec1(grads.get(var.as_tensor()).ok_or(format!("{name} received no gradient"))?));
        for i in 0..base.len() {
            let eval = |delta: f64| -> Result<f64, String> {
                let mut v = base.clone();
                v[i] += delta;
                ok(store.set(name, &Tensor::from_vec(v, shape.clone(), &dev).unwrap()))?;
                let (rec, commit) = surrogate();
                // The surrogate stands for the objective only while no code assignment flips.
                if assignments() != terms.indices {
                    return Err(format!("{name}[{i}]: code assignment changed under perturbation"));
                }
                Ok(rec + beta * commit)
            };
            let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
            numeric.push(fd);
            ok(store.set(name, &Tensor::from_vec(base.clone(), shape.clone(), &dev).unwrap()))?;
        }
    }
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = relative_check(&analytic, &numeric, 1e-4, 1e-3 * scale)?;
    Ok(format!("{} encoder gradients of a {params}-parameter model within {worst:.1e} relative", analytic.len()))
}

// 7 ---------------------------------------------------------------------------

fn c07_codec() -> Outcome {
    let vocab = ok(Vocabulary::new(TextTokenizer::build(["pour the kettle", "wave left hand"]), 16))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1000 {
        let t = rng.gen_range(0..24);
        let mut code = || (0..t).map(|_| rng.gen_range(0..16u32)).collect::<Vec<_>>();
        let tokens = MotionTokens { traj_l: code(), pose_l: code(), traj_r: code(), pose_r: code() };
        let ids = ok(interleave(&tokens, &vocab))?;
        ensure!(ids.len() == 4 * t + 2, "stream {i}: length {} for T={t}", ids.len());
        ensure!(ok(deinterleave(&ids, &vocab))? == tokens, "stream {i}: round trip failed");
        ensure!(repair(&ids, &vocab) == ids, "stream {i}: repair changed a valid stream");
    }
    let size = vocab.len() as u32;
    for i in 0..1000 {
        let len = rng.gen_range(0..60);
        let noisy: Vec<u32> = (0..len).map(|_| rng.gen_range(0..size + 4)).collect();
        let fixed = repair(&noisy, &vocab);
        ensure!(repair(&fixed, &vocab) == fixed, "random stream {i}: repair not idempotent");
        ensure!(deinterleave(&fixed, &vocab).is_ok(), "random stream {i}: repaired stream does not decode");
    }
    Ok("1000 valid streams round trip with length 4T+2; repair idempotent and decodable on 1000 random streams".into())
}

// 8 ---------------------------------------------------------------------------

fn tiny_shift() -> ShiftModel {
    let cfg = ShiftConfig { codebook_size: 4, code_dim: 4, downsample: 2, hidden: 8, beta: 0.25, fps: 30.0, seed: 3 };
    ShiftModel::new(cfg, Normalizer::identity(), DType::F64).unwrap()
}

fn c08_gumbel() -> Outcome {
    let dev = Device::Cpu;
    let flat = Tensor::new(&[0.7f64, 0.7, 0.7, 0.7], &dev).unwrap();
    for tau in [0.01, 1.0, 100.0] {
        ensure!(vec1(&ok(gumbel_softmax(&flat, tau, None, false))?) == [0.25; 4], "equal logits not uniform at τ={tau}");
    }
    let l = Tensor::new(&[1.0f64, 0.0, -0.5], &dev).unwrap();
    ensure!(vec1(&ok(gumbel_softmax(&l, 1e-3, None, false))?) == [1.0, 0.0, 0.0], "τ→0 is not one-hot");
    let hot = vec1(&ok(gumbel_softmax(&l, 1.0, None, true))?);
    ensure!(hot == [1.0, 0.0, 0.0], "hard sample {hot:?}");
    let wide = vec1(&ok(gumbel_softmax(&l, 1e9, None, false))?);
    ensure!(wide.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-9), "τ→∞ gives {wide:?}");
    let swapped = vec1(&ok(gumbel_softmax(&Tensor::new(&[0.0f64, 1.0, -0.5], &dev).unwrap(), 0.8, None, false))?);
    let straight = vec1(&ok(gumbel_softmax(&l, 0.8, None, false))?);
    ensure!(swapped[0] == straight[1] && swapped[1] == straight[0], "softmax not permutation-symmetric");

    // Soft path: logits → relaxed sample → codebook mix → decoder.
    let shift = tiny_shift();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let shape = (1, 2, 4, 4);
    let raw: Vec<f64> = (0..32).map(|_| gaussian(&mut rng)).collect();
    let noise = ok(gumbel_noise(&[1, 2, 4, 4], DType::F64, &mut rng))?;
    let tau = 0.9;
    let (ct, cp) = {
        let (t, p) = ok(soft_decode_tensors(&ok(Tensor::zeros(shape, DType::F64, &dev))?, &shift))?;
        let coef = |n: usize, rng: &mut ChaCha8Rng| (0..n).map(|_| gaussian(rng)).collect::<Vec<f64>>();
        (
            Tensor::from_vec(coef(t.elem_count(), &mut rng), t.shape(), &dev).unwrap(),
            Tensor::from_vec(coef(p.elem_count(), &mut rng), p.shape(), &dev).unwrap(),
        )
    };
    let objective = |logits: &Tensor| -> Tensor {
        let w = gumbel_softmax(logits, tau, Some(&noise), false).unwrap();
        let (t, p) = soft_decode_tensors(&w, &shift).unwrap();
        (t.mul(&ct).unwrap().sum_all().unwrap() + p.mul(&cp).unwrap().sum_all().unwrap()).unwrap()
    };
    let var = ok(Var::from_tensor(&Tensor::from_vec(raw.clone(), shape, &dev).unwrap()))?;
    let grads = ok(objective(var.as_tensor()).backward())?;
    let analytic = vec1(grads.get(var.as_tensor()).ok_or("no gradient reached the logits")?);
    let h = 1e-6;
    let numeric: Vec<f64> = (0..raw.len())
        .map(|i| {
            let at = |d: f64| {
                let mut v = raw.clone();
                v[i] += d;
                scalar(&objective(&Tensor::from_vec(v, shape, &dev).unwrap())).unwrap()
            };
            (at(h) - at(-h)) / (2.0 * h)
        })
        .collect();
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = relative_check(&analytic, &numeric, 1e-4, 1e-3 * scale)?;

    let tokens = MotionTokens { traj_l: vec![0, 3, 1], pose_l: vec![1, 2, 2], traj_r: vec![2, 2, 0], pose_r: vec![3, 0, 1] };
    let hard = ok(shift.decode(&tokens, 6))?;
    let mut rows = vec![0f64; 12 * 4];
    for t in 0..3 {
        for (slot, code) in [tokens.traj_l[t], tokens.pose_l[t], tokens.traj_r[t], tokens.pose_r[t]].into_iter().enumerate() {
            rows[(4 * t + slot) * 4 + code as usize] = 1.0;
        }
    }
    let soft = ok(soft_decode(&Tensor::from_vec(rows, (12, 4), &dev).unwrap(), &shift, 6))?;
    let dev_max = (soft.flatten() - hard.flatten()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure!(dev_max < 1e-6, "one-hot soft decode differs from hard decode by {dev_max:e}");
    Ok(format!("limits exact, soft-path gradient within {worst:.1e} relative, one-hot decode within {dev_max:.1e}"))
}

// 9 ---------------------------------------------------------------------------

fn c09_loss_linearity() -> Outcome {
    let records: Vec<SequenceRecord> = generate_corpus(4, 9)
        .into_iter()
        .map(|mut r| {
            r.motion = r.motion.truncated(8);
            r
        })
        .collect();
    let motions: Vec<MotionSequence> = records.iter().map(|r| r.motion.clone()).collect();
    let cfg = ShiftConfig { codebook_size: 4, code_dim: 4, downsample: 4, hidden: 8, beta: 0.25, fps: 30.0, seed: 2 };
    let shift = ok(ShiftModel::new(cfg, Normalizer::fit(&motions), DType::F64))?;
    let corpus = ok(LmCorpus::encode(records, &shift))?;
    let lm_cfg = LmConfig { d_model: 8, heads: 2, enc_layers: 1, dec_layers: 1, d_ff: 16, max_len: 64, seed: 4 };
    let templates = InstructionTemplates::default();
    let model = ok(new_model(&corpus, &templates, &shift, lm_cfg, DType::F64))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let examples: Vec<Example> = (0..corpus.len())
        .map(|i| {
            let r = &corpus.records[i];
            example(Task::TextToMotion, &templates.t2m[0], &r.caption_high, &corpus.tokens[i], i, &model.vocab, 0.3, &mut rng).unwrap()
        })
        .collect();
    let batch: Vec<&Example> = examples.iter().collect();
    let gt: Vec<&MotionSequence> = corpus.records.iter().map(|r| &r.motion).collect();
    let steps = (examples[0].target.len() - 2) / 4;
    let noise = ok(gumbel_noise(&[examples.len(), steps, 4, 4], DType::F64, &mut ChaCha8Rng::seed_from_u64(1)))?;
    let at = |alpha: f64, lambda: f64| {
        let cfg = StageConfig { alpha, lambda, ..StageConfig::refine() };
        refine_step(&model, &shift, &batch, &gt, &cfg, 1.3, Some(&noise)).unwrap()
    };
    let lm = scalar(&at(1.0, 0.0).total).unwrap();
    let rec = scalar(&at(0.0, 1.0).total).unwrap();
    let src: Vec<Vec<u32>> = examples.iter().map(|e| e.source.clone()).collect();
    let tgt: Vec<Vec<u32>> = examples.iter().map(|e| e.target.clone()).collect();
    let ce = scalar(&ok(model.lm_loss(&src, &tgt))?).unwrap();
    ensure!((lm - ce).abs() < 1e-12, "α=1, λ=0 gives {lm}, teacher-forced CE {ce}");
    ensure!(rec > 0.0, "reconstruction term is {rec}");
    let mut worst = 0.0f64;
    for (a, l) in [(0.5, 0.5), (0.2, 1.7), (2.0, 0.0), (0.0, 0.3), (1.3, 0.9)] {
        let parts = at(a, l);
        let total = scalar(&parts.total).unwrap();
        let split = a * scalar(&parts.lm).unwrap() + l * parts.rec.as_ref().map_or(0.0, |r| scalar(r).unwrap());
        worst = worst.max((total - (a * lm + l * rec)).abs()).max((total - split).abs());
    }
    ensure!(worst < 1e-6, "decomposition off by {worst:e}");
    Ok(format!("α·L_LM + λ·L_rec within {worst:.1e} over 5 weightings"))
}

// 10 to 12 ----------------------------------------------------------------------

struct Desk {
    shift: ShiftModel,
    train: Vec<SequenceRecord>,
    held: Vec<SequenceRecord>,
    model: Option<LanguageModel>,
    generated: Vec<GeneratedMotion>,
    captions: Vec<String>,
}

const STUDY_EPOCHS: usize = 10;

fn c10_tokenizer(desk: &mut Option<Desk>) -> Outcome {
    let all = generate_corpus(300, 7);
    let (train, held) = all.split_at(200);
    let data: Vec<MotionSequence> = train.iter().map(|r| r.motion.clone()).collect();
    let cfg = ShiftTrainConfig::default();
    let clock = Instant::now();
    let (shift, log) = ok(train_tokenizer(&data, &cfg, None))?;
    let elapsed = clock.elapsed();
    let [ppl_t, ppl_p] = ok(corpus_perplexity(&shift, &data))?;
    *desk = Some(Desk { shift, train: train.to_vec(), held: held.to_vec(), model: None, generated: Vec::new(), captions: Vec::new() });
    let ratio = log.final_rec / log.initial_rec;
    ensure!(elapsed <= Duration::from_secs(600), "training took {elapsed:?}");
    ensure!(ratio <= 0.1, "final/initial reconstruction {ratio:.3}");
    ensure!(ppl_t > 1.0 && ppl_p > 1.0, "perplexities {ppl_t:.2}/{ppl_p:.2}");

    let mut study = Vec::new();
    for r in [2, 4, 8, 16] {
        let cfg = ShiftTrainConfig { epochs: STUDY_EPOCHS, model: ShiftConfig { downsample: r, ..cfg.model.clone() }, ..cfg.clone() };
        study.push(ok(train_tokenizer(&data, &cfg, None))?.1.final_rec);
    }
    let text: Vec<String> = study.iter().map(|v| format!("{v:.4}")).collect();
    ensure!(study.windows(2).all(|w| w[1] >= w[0]), "compression study not monotone: {text:?}");
    Ok(format!(
        "{elapsed:.0?}, reconstruction ratio {ratio:.3}, perplexity {ppl_t:.1}/{ppl_p:.1}, error over r=2,4,8,16: {}",
        text.join(" ")
    ))
}

fn c11_lm_stages(desk: &mut Option<Desk>) -> Outcome {
    let desk = desk.as_mut().ok_or("no tokenizer from criterion 10")?;
    let shift = &desk.shift;
    let templates = InstructionTemplates::default();
    let train = ok(LmCorpus::encode(desk.train.clone(), shift))?;
    let val = ok(LmCorpus::encode(desk.held.clone(), shift))?;
    let mut model = ok(new_model(&train, &templates, shift, LmConfig::tiny(), DType::F32))?;
    let pairs: Vec<(String, &MotionSequence)> = desk.held.iter().map(|r| (r.caption_high.clone(), &r.motion)).collect();

    let clock = Instant::now();
    let log = ok(train_stage(&mut model, shift, &train, &val, &templates, &StageConfig::pretrain(), None))?;
    let last = log.epochs.last().map(|e| e.val_ce).unwrap_or(log.initial_val_ce);
    let drop = 1.0 - last / log.initial_val_ce;
    let mse_pre = ok(t2m_motion_mse(&model, shift, &pairs, &templates.pretrain_t2m))?;
    ok(train_stage(&mut model, shift, &train, &val, &templates, &StageConfig::refine(), None))?;
    let mse_refine = ok(t2m_motion_mse(&model, shift, &pairs, &templates.pretrain_t2m))?;
    ok(train_stage(&mut model, shift, &train, &val, &templates, &StageConfig::instruct(), None))?;
    let elapsed = clock.elapsed();

    let prompts: Vec<String> = desk.held.iter().map(|r| r.caption_high.clone()).collect();
    let frames = desk.held[0].motion.num_frames();
    let generated = ok(generate_motions(&model, shift, &prompts, &templates.t2m[0], &Sampling::greedy(0), frames))?;
    let codec_errors = generated.iter().filter(|g| g.codec_error.is_some()).count();
    let empty = generated.iter().filter(|g| g.motion.is_none()).count();
    let motions: Vec<&MotionSequence> = desk.held.iter().map(|r| &r.motion).collect();
    let captions = ok(caption_motions(&model, shift, &motions, &templates.m2t[0], &Sampling::greedy(48)))?;
    let blank = captions.iter().filter(|c| c.trim().is_empty()).count();
    desk.model = Some(model);
    desk.generated = generated;
    desk.captions = captions;

    ensure!(elapsed <= Duration::from_secs(900), "three stages took {elapsed:?}");
    ensure!(drop >= 0.3, "pretrain validation CE {:.3} -> {last:.3} ({:.0}%)", log.initial_val_ce, 100.0 * drop);
    ensure!(mse_refine < mse_pre, "refine MSE {mse_refine:.4} vs pretrain {mse_pre:.4}");
    ensure!(codec_errors == 0 && empty == 0 && blank == 0, "{codec_errors} codec errors, {empty} empty motions, {blank} blank captions");
    Ok(format!(
        "{elapsed:.0?}, validation CE {:.3} -> {last:.3} (-{:.0}%), held-out MSE pretrain {mse_pre:.4} > refine {mse_refine:.4}, 100 t2m + 100 m2t without codec errors",
        log.initial_val_ce,
        100.0 * drop
    ))
}

/// Mean RP3 of independent random embeddings.
fn random_rp3(n: usize, dim: usize, trials: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    (0..trials)
        .map(|seed| {
            let t = Array2::from_shape_fn((n, dim), |_| gaussian(&mut rng));
            let m = Array2::from_shape_fn((n, dim), |_| gaussian(&mut rng));
            r_precision(t.view(), m.view(), 32, 3, seed).unwrap()
        })
        .sum::<f64>()
        / trials as f64
}

fn c12_task_quality(desk: &Option<Desk>) -> Outcome {
    let desk = desk.as_ref().ok_or("no tokenizer from criterion 10")?;
    ensure!(desk.model.is_some(), "no language model from criterion 11");
    let pairs: Vec<Pair> = desk
        .train
        .iter()
        .flat_map(|r| [Pair { motion: &r.motion, caption: &r.caption_high }, Pair { motion: &r.motion, caption: &r.caption_fine }])
        .collect();
    let labelled: Vec<(&MotionSequence, Family)> = desk.train.iter().filter_map(|r| r.family().map(|f| (&r.motion, f))).collect();
    let (ev, _) = ok(train_evaluator(&pairs, &labelled, &EvaluatorConfig::default()))?;

    let n = desk.held.len() as f64;
    let mut family_hits = 0usize;
    for (rec, g) in desk.held.iter().zip(&desk.generated) {
        if let (Some(m), Some(f)) = (&g.motion, rec.family()) {
            family_hits += (ok(ev.classify_family(m))? == f) as usize;
        }
    }
    let keyword_hits = desk
        .held
        .iter()
        .zip(&desk.captions)
        .filter(|(r, c)| r.family().is_some_and(|f| c.contains(f.keyword())))
        .count();
    let texts = ok(ev.embed_texts(&desk.held.iter().map(|r| r.caption_fine.as_str()).collect::<Vec<_>>()))?;
    let motions = ok(ev.embed_motions(&desk.held.iter().map(|r| &r.motion).collect::<Vec<_>>()))?;
    let rp3 = (0..20).map(|s| r_precision(texts.view(), motions.view(), 32, 3, s).unwrap()).sum::<f64>() / 20.0;
    let baseline = random_rp3(desk.held.len(), texts.ncols(), 400);
    let (family, keyword) = (family_hits as f64 / n, keyword_hits as f64 / n);
    ensure!((baseline - 3.0 / 32.0).abs() < 0.01, "Monte-Carlo random RP3 {baseline:.4} is not 3/32");
    ensure!(family >= 0.7, "generated-family accuracy {family:.2}");
    ensure!(keyword >= 0.7, "caption keyword rate {keyword:.2}");
    ensure!(rp3 > 0.5, "evaluator RP3 {rp3:.3}");
    Ok(format!("family {family:.2}, keyword {keyword:.2}, RP3 {rp3:.3} vs random {baseline:.4}"))
}

// 13 ----------------------------------------------------------------------------

fn poly_kernel(x: ndarray::ArrayView1<f64>, y: ndarray::ArrayView1<f64>) -> f64 {
    let f = x.len() as f64;
    (x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / f + 1.0).powi(3)
}

/// Unbiased MMD² averaged over consecutive blocks of 100, by direct kernel sums.
fn kid_oracle(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let block = a.nrows().min(b.nrows()).min(100);
    let blocks = a.nrows().min(b.nrows()) / block;
    let mut total = 0.0;
    for k in 0..blocks {
        let (x, y) = (a.slice(s![k * block..(k + 1) * block, ..]), b.slice(s![k * block..(k + 1) * block, ..]));
        let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
        for i in 0..block {
            for j in 0..block {
                if i != j {
                    xx += poly_kernel(x.row(i), x.row(j));
                    yy += poly_kernel(y.row(i), y.row(j));
                }
                xy += poly_kernel(x.row(i), y.row(j));
            }
        }
        let m = block as f64;
        total += xx / (m * (m - 1.0)) + yy / (m * (m - 1.0)) - 2.0 * xy / (m * m);
    }
    total / blocks as f64
}

/// Best mean error over a small-angle rotation grid, with closed-form scale and translation per candidate.
fn procrustes_grid(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> f64 {
    let n = pred.len() as f64;
    let mx = pred.iter().sum::<Vector3<f64>>() / n;
    let my = gt.iter().sum::<Vector3<f64>>() / n;
    let steps = 80;
    let span = 0.2;
    let angle = |s: usize| -span + 2.0 * span * s as f64 / steps as f64;
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        for j in 0..=steps {
            for k in 0..=steps {
                let r = axis_angle(Vector3::z(), angle(k)) * axis_angle(Vector3::y(), angle(j)) * axis_angle(Vector3::x(), angle(i));
                let num: f64 = pred.iter().zip(gt).map(|(x, y)| (r * (x - mx)).dot(&(y - my))).sum();
                let den: f64 = pred.iter().map(|x| (x - mx).norm_squared()).sum();
                let scale = num / den;
                let err = pred.iter().zip(gt).map(|(x, y)| (scale * r * (x - mx) + my - y).norm()).sum::<f64>() / n;
                best = best.min(err);
            }
        }
    }
    best
}

fn c13_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = Array2::from_shape_fn((500, 4), |_| -5.0 + gaussian(&mut rng));
    let b = Array2::from_shape_fn((500, 4), |_| 5.0 + gaussian(&mut rng));
    let got = ok(kid(a.view(), b.view(), KidMode::UnbiasedBlocks))?;
    let oracle = kid_oracle(&a, &b);
    ensure!((got - oracle).abs() <= 1e-6 * oracle.abs().max(1.0), "KID {got} vs oracle {oracle}");
    ensure!(ok(kid(b.view(), a.view(), KidMode::UnbiasedBlocks))? == got, "KID not symmetric");
    ensure!(ok(kid(a.view(), a.view(), KidMode::Biased))? == 0.0, "biased KID of identical sets is not 0");

    let t = Array2::from_shape_fn((300, 16), |_| gaussian(&mut rng));
    let m = Array2::from_shape_fn((300, 16), |_| gaussian(&mut rng));
    let direct = t.rows().into_iter().zip(m.rows()).map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()).sum::<f64>() / 300.0;
    let mmd = ok(mm_dist(t.view(), m.view()))?;
    ensure!((mmd - direct).abs() < 1e-9, "MM-Dist {mmd} vs {direct}");
    ensure!(ok(mm_dist(t.view(), t.view()))? == 0.0, "MM-Dist of identical embeddings is not 0");

    // Unigrams: 2 of 3 candidate words match, no brevity penalty (3 > 2). LCS 2: P 2/3, R 1.
    let b1 = bleu("the cat sat", &["the cat"], 1);
    let b2 = bleu("the cat sat", &["the cat"], 2);
    let rg = rouge_l("the cat sat", "the cat");
    ensure!((b1 - 2.0 / 3.0).abs() < 1e-12, "BLEU1 {b1}");
    ensure!((b2 - (2.0f64 / 3.0 * 0.5).sqrt()).abs() < 1e-12, "BLEU2 {b2}");
    ensure!((rg - 0.8).abs() < 1e-12, "ROUGE-L {rg}");
    let same = "the left hand pours the kettle slowly";
    ensure!(bleu(same, &[same], 1) == 1.0 && bleu(same, &[same], 4) == 1.0 && rouge_l(same, same) == 1.0, "identical text not 1");
    ensure!(bleu("a b c d", &["w x y z"], 1) == 0.0 && rouge_l("a b c d", "w x y z") == 0.0, "disjoint text not 0");

    let pred: Vec<Vector3<f64>> = (0..5).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-0.1..0.1))).collect();
    let rot = axis_angle(Vector3::new(1.0, 2.0, -0.5), 0.12);
    let gt: Vec<Vector3<f64>> = pred
        .iter()
        .map(|x| 1.1 * (rot * x) + Vector3::new(0.02, -0.01, 0.03) + Vector3::from_fn(|_, _| rng.gen_range(-0.002..0.002)))
        .collect();
    let aligned = procrustes_align(&pred, &gt);
    let err = aligned.iter().zip(&gt).map(|(x, y)| (x - y).norm()).sum::<f64>() / 5.0;
    let grid = procrustes_grid(&pred, &gt);
    let gap_mm = 1000.0 * (err - grid).abs();
    ensure!(gap_mm < 0.1, "closed form {err} vs grid search {grid}");

    let motion = generate_corpus(1, 13).remove(0).motion.truncated(12);
    let sk = HandSkeleton::default();
    ensure!(ok(mpjpe(&motion, &motion, &sk))? == 0.0 && ok(pa_mpjpe(&motion, &motion, &sk))? == 0.0, "identical motion has nonzero joint error");
    Ok(format!("KID rel {:.1e}, MM-Dist {:.1e}, BLEU/ROUGE-L exact, Procrustes vs grid {gap_mm:.3} mm", (got - oracle).abs() / oracle.abs(), (mmd - direct).abs()))
}

// 14 ----------------------------------------------------------------------------

fn c14_annotation() -> Outcome {
    let records = generate_corpus(100, 14);
    let vocab = ClosedVocabulary::default();
    let cfg = AnnotationConfig::default();
    let run = |jitter: Option<u64>| {
        let client = match jitter {
            Some(j) => MockClient::new(5).with_jitter(j, Duration::from_micros(300)),
            None => MockClient::new(5),
        };
        serde_json::to_string(&annotate_records(&records, &vocab, &PromptSet::default(), &client, &cfg)).unwrap()
    };
    let base = run(None);
    ensure!(run(None) == base, "two runs with one seed differ");
    for j in 0..4 {
        ensure!(run(Some(j)) == base, "completion schedule {j} changed the output");
    }
    let outcomes = annotate_records(&records, &vocab, &PromptSet::default(), &MockClient::new(5), &cfg);
    let kept: Vec<_> = outcomes.iter().filter(|o| o.kept).collect();
    ensure!(!kept.is_empty(), "nothing kept");
    for o in &kept {
        ensure!(!o.pairs.is_empty() && o.pairs.iter().all(|(v, n)| vocab.contains(v, n)), "out-of-vocabulary pair kept: {:?}", o.pairs);
    }
    ensure!(apply_annotations(records.clone(), &outcomes).len() == kept.len(), "applied record count differs");
    Ok(format!("{} bytes identical across 6 runs, {}/100 kept, all pairs in the closed vocabulary", base.len(), kept.len()))
}

// 15 ----------------------------------------------------------------------------

const SMOKE_CONFIG: &str = r#"
seed = 11

[tokenizer]
epochs = 6

[evaluator]
epochs = 4

[evaluation]
repeats = 2
mm_prompts = 4
mm_samples = 2
diversity_pairs = 50
"#;

fn cli(args: &[&str]) -> Result<(), String> {
    let code = handlm_cli::run(std::iter::once("handlm").chain(args.iter().copied()));
    ensure!(code == 0, "`handlm {}` exited with {code}", args.join(" "));
    Ok(())
}

fn c15_cli_smoke() -> Outcome {
    let clock = Instant::now();
    let dir = ok(tempfile::tempdir())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    ok(std::fs::write(p("run.toml"), SMOKE_CONFIG))?;
    let (config, ckpt) = (p("run.toml"), p("checkpoints"));
    let base = ["--config", config.as_str(), "--checkpoints", ckpt.as_str()];
    let with = |rest: &[&str]| -> Vec<String> { rest.iter().chain(&base).map(|s| s.to_string()).collect() };
    let call = |rest: &[&str]| cli(&with(rest).iter().map(String::as_str).collect::<Vec<_>>());

    call(&["gen-data", "--num", "80", "--out", &p("raw")])?;
    call(&["curate", "--in", &p("raw"), "--out", &p("curated")])?;
    call(&["annotate", "--in", &p("curated"), "--out", &p("annotated")])?;
    call(&["train-tokenizer", "--data", &p("annotated")])?;
    call(&["train-lm", "--stage", "pretrain", "--data", &p("annotated"), "--preset", "tiny", "--epochs", "3"])?;
    call(&["train-lm", "--stage", "refine", "--data", &p("annotated"), "--epochs", "1"])?;
    call(&["train-lm", "--stage", "instruct", "--data", &p("annotated"), "--epochs", "2"])?;
    call(&["generate", "--text", "pour the kettle with the right hand", "--out", &p("m.hmw")])?;
    call(&["caption", "--motion", &p("m.hmw"), "--out", &p("caption.json")])?;
    for task in ["t2m", "m2t"] {
        call(&["evaluate", "--task", task, "--data", &p("curated"), "--train-data", &p("annotated"), "--out", &p("reports")])?;
    }
    call(&["export", "--motion", &p("m.hmw"), "--format", "keypoints", "--out", &p("m.keypoints.json")])?;

    let motion = ok(read_hmw(Path::new(&p("m.hmw"))))?;
    let kp: serde_json::Value = ok(serde_json::from_str(&ok(std::fs::read_to_string(p("m.keypoints.json")))?))?;
    let n = motion.num_frames();
    let left = kp["left"].as_array().ok_or("keypoints lack a left hand")?;
    ensure!(left.len() == n && left[0].as_array().map(Vec::len) == Some(16), "keypoint shape mismatch");
    ensure!(left[0][0].as_array().map(Vec::len) == Some(3), "keypoints are not 3-vectors");
    let provenance = [
        "raw/provenance.json",
        "curated/provenance.json",
        "annotated/provenance.json",
        "checkpoints/tokenizer.safetensors.provenance.json",
        "checkpoints/lm-instruct.safetensors.provenance.json",
        "m.hmw.provenance.json",
        "caption.json.provenance.json",
        "reports/t2m_report.json.provenance.json",
        "reports/m2t_report.json.provenance.json",
    ];
    for f in provenance {
        ensure!(dir.path().join(f).is_file(), "missing {f}");
    }
    let elapsed = clock.elapsed();
    ensure!(elapsed < Duration::from_secs(1800), "smoke run took {elapsed:?}");
    Ok(format!("11 commands exit 0, {n}-frame motion parses, keypoints {n}x16x3, provenance present, {elapsed:.0?}"))
}

// -------------------------------------------------------------------------------

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| only.is_empty() || only.contains(&n);
    let mut desk: Option<Desk> = None;
    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let clock = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = clock.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n:02} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {n:02} {name}: {detail} [{secs:.1}s]");
            }
        }
    };
    report(1, "rotation round trip", &mut c01_rotations);
    report(2, "Savitzky-Golay oracle", &mut c02_savitzky_golay);
    report(3, "acceleration filter", &mut c03_accel_filter);
    report(4, "local outlier factor", &mut c04_lof);
    report(5, "quantization", &mut c05_quantize);
    report(6, "straight-through gradient", &mut c06_straight_through);
    report(7, "token codec", &mut c07_codec);
    report(8, "Gumbel-Softmax", &mut c08_gumbel);
    report(9, "refinement loss linearity", &mut c09_loss_linearity);
    report(10, "tokenizer training", &mut || c10_tokenizer(&mut desk));
    report(11, "three-stage language model", &mut || c11_lm_stages(&mut desk));
    report(12, "desk-scale task quality", &mut || c12_task_quality(&desk));
    report(13, "metric oracles", &mut c13_metrics);
    report(14, "mock annotation pipeline", &mut c14_annotation);
    report(15, "CLI smoke", &mut c15_cli_smoke);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
