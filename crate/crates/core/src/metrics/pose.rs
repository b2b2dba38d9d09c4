use nalgebra::{Matrix3, Vector3};
use ndarray::{s, Array3, Axis};

use super::MetricError;
use crate::motion::MotionSequence;
use crate::skeleton::{forward_kinematics, HandSkeleton, NUM_JOINTS};

/// FK joints of both hands, N×32×3 (left joints first), in meters.
pub fn joint_positions(m: &MotionSequence, skeleton: &HandSkeleton) -> Result<Array3<f64>, MetricError> {
    let l = forward_kinematics(&m.left, skeleton)?;
    let r = forward_kinematics(&m.right, skeleton)?;
    Ok(ndarray::concatenate(Axis(1), &[l.view(), r.view()]).expect("same frame count"))
}

fn paired(pred: &MotionSequence, gt: &MotionSequence, skeleton: &HandSkeleton) -> Result<(Array3<f64>, Array3<f64>), MetricError> {
    if pred.num_frames() != gt.num_frames() {
        return Err(MetricError::Shape(format!("{} vs {} frames", pred.num_frames(), gt.num_frames())));
    }
    Ok((joint_positions(pred, skeleton)?, joint_positions(gt, skeleton)?))
}

fn mean_joint_error(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    let (n, j, _) = a.dim();
    let mut total = 0.0;
    for t in 0..n {
        for k in 0..j {
            let d = &a.slice(s![t, k, ..]) - &b.slice(s![t, k, ..]);
            total += d.dot(&d).sqrt();
        }
    }
    total / (n * j) as f64
}

/// Mean per-joint position error in millimeters.
pub fn mpjpe(pred: &MotionSequence, gt: &MotionSequence, skeleton: &HandSkeleton) -> Result<f64, MetricError> {
    let (p, g) = paired(pred, gt, skeleton)?;
    Ok(1000.0 * mean_joint_error(&p, &g))
}

/// Similarity transform (s, R, t) minimizing Σ‖s·R·x + t − y‖², applied to `pred`.
pub fn procrustes_align(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    // The identity is the exact optimum; the SVD path would leave round-off.
    if pred == gt {
        return gt.to_vec();
    }
    let n = pred.len() as f64;
    let mu_x = pred.iter().sum::<Vector3<f64>>() / n;
    let mu_y = gt.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for (x, y) in pred.iter().zip(gt) {
        let (xc, yc) = (x - mu_x, y - mu_y);
        cov += yc * xc.transpose();
        var_x += xc.norm_squared();
    }
    cov /= n;
    var_x /= n;
    if var_x < 1e-18 {
        return vec![mu_y; pred.len()];
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * v_t;
    let scale = (Matrix3::from_diagonal(&svd.singular_values) * d).trace() / var_x;
    let t = mu_y - scale * r * mu_x;
    pred.iter().map(|x| scale * r * x + t).collect()
}

/// MPJPE after per-frame, per-hand similarity alignment, in millimeters.
pub fn pa_mpjpe(pred: &MotionSequence, gt: &MotionSequence, skeleton: &HandSkeleton) -> Result<f64, MetricError> {
    let (p, g) = paired(pred, gt, skeleton)?;
    let mut aligned = p.clone();
    for t in 0..p.dim().0 {
        for hand in 0..2 {
            let joints = hand * NUM_JOINTS..(hand + 1) * NUM_JOINTS;
            let pts = |a: &Array3<f64>| -> Vec<Vector3<f64>> {
                joints.clone().map(|k| Vector3::new(a[(t, k, 0)], a[(t, k, 1)], a[(t, k, 2)])).collect()
            };
            for (k, x) in joints.clone().zip(procrustes_align(&pts(&p), &pts(&g))) {
                for c in 0..3 {
                    aligned[(t, k, c)] = x[c];
                }
            }
        }
    }
    Ok(1000.0 * mean_joint_error(&aligned, &g))
}

/// Mean norm of the joint acceleration difference (second differences · fps²), in mm/s².
pub fn accel_error(pred: &MotionSequence, gt: &MotionSequence, skeleton: &HandSkeleton) -> Result<f64, MetricError> {
    let (p, g) = paired(pred, gt, skeleton)?;
    let (n, j, _) = p.dim();
    if n < 3 {
        return Err(MetricError::TooFew { needed: 3, got: n });
    }
    let fps2 = gt.fps * gt.fps;
    let mut total = 0.0;
    for t in 1..n - 1 {
        for k in 0..j {
            let mut sq = 0.0;
            for c in 0..3 {
                let acc = |a: &Array3<f64>| a[(t + 1, k, c)] - 2.0 * a[(t, k, c)] + a[(t - 1, k, c)];
                sq += ((acc(&p) - acc(&g)) * fps2).powi(2);
            }
            total += sq.sqrt();
        }
    }
    Ok(1000.0 * total / ((n - 2) * j) as f64)
}
