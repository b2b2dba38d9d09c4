//! Temporal smoothing and jitter statistics.
//!
//! Signals are N×C arrays (frames × channels); every filter works per column
//! with point-mirror padding (`x[-i] = 2·x[0] − x[i]`, likewise at the end),
//! so constant and linear signals pass through unchanged up to the boundary.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::motion::{log_map, HandTrack, MotionError, POSE_JOINTS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("signal has {frames} frames, need at least {needed}")]
    TooShort { frames: usize, needed: usize },
    #[error("invalid filter parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Motion(#[from] MotionError),
}

/// Center-point least-squares weights for a `window`-sample, degree-`order` fit.
pub fn savitzky_golay_coefficients(window: usize, order: usize) -> Result<Vec<f64>, FilterError> {
    if window < 3 || window % 2 == 0 {
        return Err(FilterError::Params(format!("window must be odd and >= 3, got {window}")));
    }
    if order >= window {
        return Err(FilterError::Params(format!("order {order} must be below window {window}")));
    }
    let half = (window / 2) as isize;
    let design = DMatrix::from_fn(window, order + 1, |r, c| ((r as isize - half) as f64).powi(c as i32));
    let pinv = design
        .clone()
        .svd(true, true)
        .pseudo_inverse(1e-14)
        .map_err(|e| FilterError::Params(e.to_string()))?;
    // Row 0 of the pseudo-inverse yields the fitted constant term, i.e. the value at the center.
    Ok(pinv.row(0).iter().copied().collect())
}

/// Sample `i` of column `ch` extended past the ends by point reflection about the
/// edge samples, which keeps linear trends linear across the boundary.
fn point_mirror(signal: &ArrayView2<f64>, i: isize, ch: usize) -> f64 {
    let last = signal.nrows() as isize - 1;
    if last == 0 {
        signal[(0, ch)]
    } else if i < 0 {
        2.0 * signal[(0, ch)] - point_mirror(signal, -i, ch)
    } else if i > last {
        2.0 * signal[(last as usize, ch)] - point_mirror(signal, 2 * last - i, ch)
    } else {
        signal[(i as usize, ch)]
    }
}

fn convolve_mirror(signal: ArrayView2<f64>, kernel: &[f64]) -> Array2<f64> {
    let (n, c) = signal.dim();
    let half = (kernel.len() / 2) as isize;
    let mut out = Array2::zeros((n, c));
    for t in 0..n {
        for (k, w) in kernel.iter().enumerate() {
            let src = t as isize + k as isize - half;
            for ch in 0..c {
                out[(t, ch)] += w * point_mirror(&signal, src, ch);
            }
        }
    }
    out
}

pub fn savitzky_golay(signal: ArrayView2<f64>, window: usize, order: usize) -> Result<Array2<f64>, FilterError> {
    let coeffs = savitzky_golay_coefficients(window, order)?;
    if signal.nrows() < window {
        return Err(FilterError::TooShort { frames: signal.nrows(), needed: window });
    }
    Ok(convolve_mirror(signal, &coeffs))
}

/// Normalized Gaussian kernel truncated at ±4σ.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>, FilterError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(FilterError::Params(format!("sigma must be positive, got {sigma}")));
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

pub fn gaussian_smooth(signal: ArrayView2<f64>, sigma: f64) -> Result<Array2<f64>, FilterError> {
    let kernel = gaussian_kernel(sigma)?;
    if signal.nrows() == 0 {
        return Ok(signal.to_owned());
    }
    Ok(convolve_mirror(signal, &kernel))
}

/// Mean of the `k` largest values (all of them if fewer than `k`).
pub fn top_k_mean(values: &[f64], k: usize) -> f64 {
    if values.is_empty() || k == 0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let take = k.min(sorted.len());
    sorted[..take].iter().sum::<f64>() / take as f64
}

/// Per-frame translational acceleration magnitudes (m/s²), frames 1..N-1.
pub fn translation_accels(track: &HandTrack, fps: f64) -> Vec<f64> {
    let n = track.num_frames();
    (1..n.saturating_sub(1))
        .map(|t| {
            let a = track.translation(t + 1) - 2.0 * track.translation(t) + track.translation(t - 1);
            a.norm() * fps * fps
        })
        .collect()
}

/// Per-frame angular acceleration magnitudes (rad/s²), frames 1..N-1.
///
/// Angular velocity between consecutive frames is the rotation vector of
/// `R_tᵀ R_{t+1}`; the magnitude is the largest change over the wrist and all
/// 15 joints.
pub fn rotation_accels(track: &HandTrack, fps: f64) -> Result<Vec<f64>, MotionError> {
    let n = track.num_frames();
    if n < 3 {
        return Ok(Vec::new());
    }
    let mut out = vec![0.0f64; n - 2];
    for joint in 0..=POSE_JOINTS {
        let rot = |t: usize| {
            if joint == 0 {
                track.global_rotation(t)
            } else {
                track.joint_rotation(t, joint - 1)
            }
        };
        let mut cur = rot(1)?;
        let mut w_prev = log_map(&(rot(0)?.transpose() * cur)) * fps;
        for t in 1..n - 1 {
            let next = rot(t + 1)?;
            let w = log_map(&(cur.transpose() * next)) * fps;
            let a = (w - w_prev).norm() * fps;
            out[t - 1] = out[t - 1].max(a);
            w_prev = w;
            cur = next;
        }
    }
    Ok(out)
}

/// Mean of the top-`k` per-frame accelerations: (translation m/s², rotation rad/s²).
pub fn accel_score(track: &HandTrack, fps: f64, k: usize) -> Result<(f64, f64), FilterError> {
    if track.num_frames() < 3 {
        return Err(FilterError::TooShort { frames: track.num_frames(), needed: 3 });
    }
    let trans = top_k_mean(&translation_accels(track, fps), k);
    let rot = top_k_mean(&rotation_accels(track, fps)?, k);
    Ok((trans, rot))
}

/// SG then Gaussian over all channels of a track, followed by 6D re-orthonormalization.
pub fn smooth_track(track: &HandTrack, window: usize, order: usize, sigma: f64) -> Result<HandTrack, FilterError> {
    let channels = track.to_channels();
    let sg = savitzky_golay(channels.view(), window, order)?;
    let smooth = gaussian_smooth(sg.view(), sigma)?;
    let mut out = HandTrack::from_channels(smooth.view())?;
    out.orthonormalize()?;
    Ok(out)
}
