//! Bimanual motion parameterization.
//!
//! A hand track stores, per frame, a 9-vector trajectory (6D global wrist
//! rotation followed by a 3D translation in meters) and a 90-vector pose
//! (15 joint rotations in 6D). A [`MotionSequence`] pairs a left and a right
//! track of equal length.

use nalgebra::{Matrix3, Vector3};
use ndarray::{s, Array2, ArrayView2};
use thiserror::Error;

pub const TRAJ_DIM: usize = 9;
pub const POSE_JOINTS: usize = 15;
pub const POSE_DIM: usize = POSE_JOINTS * 6;
pub const HAND_DIM: usize = TRAJ_DIM + POSE_DIM;
/// Width of one flattened frame: `[traj_L | pose_L | traj_R | pose_R]`.
pub const FRAME_DIM: usize = 2 * HAND_DIM;
pub const DEFAULT_FPS: f64 = 30.0;

/// Orthonormality tolerance accepted by [`rot6d_from_matrix`].
const ROTATION_TOL: f64 = 1e-6;
/// Below this cross-product norm the two 6D columns count as parallel.
const DEGENERATE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("not a rotation matrix (orthonormality error {ortho:.3e}, det {det:.6})")]
    NotRotation { ortho: f64, det: f64 },
    #[error("degenerate 6D rotation: columns are (nearly) parallel or zero")]
    Degenerate6d,
    #[error("track shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at frame {frame}, column {column}")]
    NonFinite { frame: usize, column: usize },
    #[error("expected flattened width {expected}, got {got}")]
    Width { expected: usize, got: usize },
    #[error("motion has zero frames")]
    Empty,
}

pub type Rot6 = [f64; 6];

/// First two columns of `r`, concatenated.
pub fn rot6d_from_matrix(r: &Matrix3<f64>) -> Result<Rot6, MotionError> {
    let ortho = (r.transpose() * r - Matrix3::identity()).norm();
    let det = r.determinant();
    if !(ortho <= ROTATION_TOL && (det - 1.0).abs() <= ROTATION_TOL) {
        return Err(MotionError::NotRotation { ortho, det });
    }
    Ok([r[(0, 0)], r[(1, 0)], r[(2, 0)], r[(0, 1)], r[(1, 1)], r[(2, 1)]])
}

/// Gram-Schmidt reconstruction of a rotation from its 6D encoding.
pub fn matrix_from_rot6d(v: &[f64]) -> Result<Matrix3<f64>, MotionError> {
    assert_eq!(v.len(), 6, "6D rotation needs exactly six values");
    let a1 = Vector3::new(v[0], v[1], v[2]);
    let a2 = Vector3::new(v[3], v[4], v[5]);
    let (n1, n2) = (a1.norm(), a2.norm());
    if !(n1 > 0.0 && n2 > 0.0) || !n1.is_finite() || !n2.is_finite() {
        return Err(MotionError::Degenerate6d);
    }
    let b1 = a1 / n1;
    if b1.cross(&(a2 / n2)).norm() < DEGENERATE_TOL {
        return Err(MotionError::Degenerate6d);
    }
    let b2 = (a2 - b1 * b1.dot(&a2)).normalize();
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

/// Projects a possibly perturbed 6D encoding back onto a valid rotation.
pub fn orthonormalize_rot6d(v: &mut [f64]) -> Result<(), MotionError> {
    let m = matrix_from_rot6d(v)?;
    v.copy_from_slice(&[m[(0, 0)], m[(1, 0)], m[(2, 0)], m[(0, 1)], m[(1, 1)], m[(2, 1)]]);
    Ok(())
}

pub const IDENTITY_6D: Rot6 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

/// Rotation of `angle` radians about a unit `axis`.
pub fn axis_angle(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
}

/// Geodesic distance between two rotations, in radians.
pub fn geodesic_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let c = ((a.transpose() * b).trace() - 1.0) / 2.0;
    c.clamp(-1.0, 1.0).acos()
}

/// Rotation vector (axis times angle) of `r`.
pub fn log_map(r: &Matrix3<f64>) -> Vector3<f64> {
    nalgebra::Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandTrack {
    /// N×9: 6D global rotation, then translation (m).
    pub trajectory: Array2<f64>,
    /// N×90: 15 joints × 6D local rotation.
    pub pose: Array2<f64>,
}

impl HandTrack {
    pub fn new(trajectory: Array2<f64>, pose: Array2<f64>) -> Result<Self, MotionError> {
        let track = Self { trajectory, pose };
        track.validate()?;
        Ok(track)
    }

    /// All-identity rotations at the origin.
    pub fn rest(frames: usize) -> Self {
        let mut trajectory = Array2::zeros((frames, TRAJ_DIM));
        let mut pose = Array2::zeros((frames, POSE_DIM));
        for t in 0..frames {
            for (c, v) in IDENTITY_6D.iter().enumerate() {
                trajectory[(t, c)] = *v;
            }
            for j in 0..POSE_JOINTS {
                for (c, v) in IDENTITY_6D.iter().enumerate() {
                    pose[(t, 6 * j + c)] = *v;
                }
            }
        }
        Self { trajectory, pose }
    }

    pub fn num_frames(&self) -> usize {
        self.trajectory.nrows()
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        if self.trajectory.ncols() != TRAJ_DIM || self.pose.ncols() != POSE_DIM {
            return Err(MotionError::Shape(format!(
                "trajectory {:?} / pose {:?}",
                self.trajectory.dim(),
                self.pose.dim()
            )));
        }
        if self.trajectory.nrows() != self.pose.nrows() {
            return Err(MotionError::Shape(format!(
                "trajectory has {} frames, pose has {}",
                self.trajectory.nrows(),
                self.pose.nrows()
            )));
        }
        for ((frame, column), v) in self.trajectory.indexed_iter() {
            if !v.is_finite() {
                return Err(MotionError::NonFinite { frame, column });
            }
        }
        for ((frame, column), v) in self.pose.indexed_iter() {
            if !v.is_finite() {
                return Err(MotionError::NonFinite { frame, column: TRAJ_DIM + column });
            }
        }
        Ok(())
    }

    pub fn global_rotation(&self, frame: usize) -> Result<Matrix3<f64>, MotionError> {
        let row = self.trajectory.row(frame);
        matrix_from_rot6d(&[row[0], row[1], row[2], row[3], row[4], row[5]])
    }

    pub fn translation(&self, frame: usize) -> Vector3<f64> {
        let row = self.trajectory.row(frame);
        Vector3::new(row[6], row[7], row[8])
    }

    pub fn joint_rotation(&self, frame: usize, joint: usize) -> Result<Matrix3<f64>, MotionError> {
        let row = self.pose.row(frame);
        let b = 6 * joint;
        matrix_from_rot6d(&[row[b], row[b + 1], row[b + 2], row[b + 3], row[b + 4], row[b + 5]])
    }

    /// Re-orthonormalizes every 6D block in place.
    pub fn orthonormalize(&mut self) -> Result<(), MotionError> {
        for mut row in self.trajectory.rows_mut() {
            let s = row.as_slice_mut().expect("standard layout");
            orthonormalize_rot6d(&mut s[..6])?;
        }
        for mut row in self.pose.rows_mut() {
            let s = row.as_slice_mut().expect("standard layout");
            for j in 0..POSE_JOINTS {
                orthonormalize_rot6d(&mut s[6 * j..6 * j + 6])?;
            }
        }
        Ok(())
    }

    /// Channel-wise concatenation `[trajectory | pose]`, N×99.
    pub fn to_channels(&self) -> Array2<f64> {
        ndarray::concatenate(ndarray::Axis(1), &[self.trajectory.view(), self.pose.view()])
            .expect("equal frame counts")
    }

    pub fn from_channels(channels: ArrayView2<f64>) -> Result<Self, MotionError> {
        if channels.ncols() != HAND_DIM {
            return Err(MotionError::Width { expected: HAND_DIM, got: channels.ncols() });
        }
        Self::new(
            channels.slice(s![.., ..TRAJ_DIM]).to_owned(),
            channels.slice(s![.., TRAJ_DIM..]).to_owned(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub fps: f64,
    pub left: HandTrack,
    pub right: HandTrack,
}

impl MotionSequence {
    pub fn new(fps: f64, left: HandTrack, right: HandTrack) -> Result<Self, MotionError> {
        let m = Self { fps, left, right };
        m.validate()?;
        Ok(m)
    }

    pub fn rest(frames: usize, fps: f64) -> Self {
        Self { fps, left: HandTrack::rest(frames), right: HandTrack::rest(frames) }
    }

    pub fn num_frames(&self) -> usize {
        self.left.num_frames()
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        self.left.validate()?;
        self.right.validate()?;
        if self.left.num_frames() != self.right.num_frames() {
            return Err(MotionError::Shape(format!(
                "left has {} frames, right has {}",
                self.left.num_frames(),
                self.right.num_frames()
            )));
        }
        if self.num_frames() == 0 {
            return Err(MotionError::Empty);
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(MotionError::Shape(format!("fps must be positive, got {}", self.fps)));
        }
        Ok(())
    }

    /// N×198 row-major layout `[traj_L | pose_L | traj_R | pose_R]`.
    pub fn flatten(&self) -> Array2<f64> {
        ndarray::concatenate(
            ndarray::Axis(1),
            &[self.left.trajectory.view(), self.left.pose.view(), self.right.trajectory.view(), self.right.pose.view()],
        )
        .expect("validated tracks")
    }

    pub fn unflatten(rows: ArrayView2<f64>, fps: f64) -> Result<Self, MotionError> {
        if rows.ncols() != FRAME_DIM {
            return Err(MotionError::Width { expected: FRAME_DIM, got: rows.ncols() });
        }
        let left = HandTrack::from_channels(rows.slice(s![.., ..HAND_DIM]))?;
        let right = HandTrack::from_channels(rows.slice(s![.., HAND_DIM..]))?;
        Self::new(fps, left, right)
    }

    /// Hands exchanged.
    pub fn swapped(&self) -> Self {
        Self { fps: self.fps, left: self.right.clone(), right: self.left.clone() }
    }

    /// Translates both hands so the first-frame wrist midpoint sits at the origin.
    pub fn recenter(&mut self) {
        if self.num_frames() == 0 {
            return;
        }
        let mid = (self.left.translation(0) + self.right.translation(0)) / 2.0;
        for track in [&mut self.left, &mut self.right] {
            for mut row in track.trajectory.rows_mut() {
                for a in 0..3 {
                    row[6 + a] -= mid[a];
                }
            }
        }
    }

    /// Rounds every value to the nearest `f32`, the on-disk precision.
    pub fn round_to_f32(&mut self) {
        for arr in [&mut self.left.trajectory, &mut self.left.pose, &mut self.right.trajectory, &mut self.right.pose] {
            arr.mapv_inplace(|v| v as f32 as f64);
        }
    }

    /// Keeps the first `frames` frames.
    pub fn truncated(&self, frames: usize) -> Self {
        let f = frames.min(self.num_frames());
        let cut = |t: &HandTrack| HandTrack {
            trajectory: t.trajectory.slice(s![..f, ..]).to_owned(),
            pose: t.pose.slice(s![..f, ..]).to_owned(),
        };
        Self { fps: self.fps, left: cut(&self.left), right: cut(&self.right) }
    }

    /// Right-pads by repeating the last frame up to `frames`.
    pub fn padded_to(&self, frames: usize) -> Self {
        let n = self.num_frames();
        if frames <= n || n == 0 {
            return self.clone();
        }
        let pad = |t: &HandTrack| {
            let mut traj = Array2::zeros((frames, TRAJ_DIM));
            let mut pose = Array2::zeros((frames, POSE_DIM));
            for i in 0..frames {
                let src = i.min(n - 1);
                traj.row_mut(i).assign(&t.trajectory.row(src));
                pose.row_mut(i).assign(&t.pose.row(src));
            }
            HandTrack { trajectory: traj, pose }
        };
        Self { fps: self.fps, left: pad(&self.left), right: pad(&self.right) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Uniform rotation from a normalized 4D Gaussian (quaternion) sample.
    fn sample_rotation(rng: &mut impl rand::Rng) -> Matrix3<f64> {
        use rand::distributions::Distribution;
        let n = rand::distributions::Uniform::new(-1.0f64, 1.0);
        loop {
            let q: [f64; 4] = [n.sample(rng), n.sample(rng), n.sample(rng), n.sample(rng)];
            let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-3 && norm <= 1.0 {
                let (w, x, y, z) = (q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm);
                return Matrix3::new(
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - z * w),
                    2.0 * (x * z + y * w),
                    2.0 * (x * y + z * w),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - x * w),
                    2.0 * (x * z - y * w),
                    2.0 * (y * z + x * w),
                    1.0 - 2.0 * (x * x + y * y),
                );
            }
        }
    }

    #[test]
    fn identity_and_quarter_turn() {
        assert_eq!(rot6d_from_matrix(&Matrix3::identity()).unwrap(), [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let rz = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_eq!(rot6d_from_matrix(&rz).unwrap(), [0.0, 1.0, 0.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_non_rotations() {
        let reflect = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(matches!(rot6d_from_matrix(&reflect), Err(MotionError::NotRotation { .. })));
        assert!(rot6d_from_matrix(&(Matrix3::identity() * 2.0)).is_err());
    }

    #[test]
    fn reconstruction_cases() {
        assert_eq!(matrix_from_rot6d(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap(), Matrix3::identity());
        assert_eq!(matrix_from_rot6d(&[2.0, 0.0, 0.0, 0.0, 3.0, 0.0]).unwrap(), Matrix3::identity());
        assert_eq!(matrix_from_rot6d(&[1.0, 0.0, 0.0, 1.0 + 1e-12, 0.0, 0.0]), Err(MotionError::Degenerate6d));
        assert_eq!(matrix_from_rot6d(&[0.0; 6]), Err(MotionError::Degenerate6d));
    }

    #[test]
    fn random_round_trip() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let r = sample_rotation(&mut rng);
            let back = matrix_from_rot6d(&rot6d_from_matrix(&r).unwrap()).unwrap();
            assert!((back - r).norm() < 1e-6);
            assert!((back.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn flatten_layout() {
        let mut m = MotionSequence::rest(3, DEFAULT_FPS);
        m.left.trajectory[(1, 7)] = 0.25;
        m.right.pose[(2, 89)] = -0.5;
        let flat = m.flatten();
        assert_eq!(flat.dim(), (3, FRAME_DIM));
        assert_eq!(flat.row(1).to_vec()[..9], m.left.trajectory.row(1).to_vec()[..]);
        assert_eq!(flat[(2, FRAME_DIM - 1)], -0.5);
        assert_eq!(MotionSequence::unflatten(flat.view(), DEFAULT_FPS).unwrap(), m);
        assert!(close(&flat.row(0).to_vec()[..9], &IDENTITY_6D.iter().chain(&[0.0; 3]).copied().collect::<Vec<_>>(), 0.0));
    }

    #[test]
    fn unflatten_rejects_width() {
        let bad = Array2::<f64>::zeros((2, 197));
        assert_eq!(
            MotionSequence::unflatten(bad.view(), 30.0),
            Err(MotionError::Width { expected: FRAME_DIM, got: 197 })
        );
    }

    #[test]
    fn zero_motion_flattens_to_zero_row() {
        let zero = Array2::<f64>::zeros((1, FRAME_DIM));
        // Zero 6D blocks are not valid rotations, so only the raw layout is checked here.
        let left = HandTrack { trajectory: Array2::zeros((1, 9)), pose: Array2::zeros((1, 90)) };
        let m = MotionSequence { fps: 30.0, left: left.clone(), right: left };
        assert_eq!(m.flatten(), zero);
    }

    #[test]
    fn padding_repeats_last_frame() {
        let mut m = MotionSequence::rest(3, 30.0);
        m.left.trajectory[(2, 6)] = 1.5;
        let p = m.padded_to(8);
        assert_eq!(p.num_frames(), 8);
        assert_eq!(p.left.trajectory[(7, 6)], 1.5);
        assert_eq!(p.truncated(3), m);
    }

    #[test]
    fn recenter_puts_midpoint_at_origin() {
        let mut m = MotionSequence::rest(2, 30.0);
        m.left.trajectory[(0, 6)] = -0.3;
        m.right.trajectory[(0, 6)] = 0.1;
        m.right.trajectory[(1, 8)] = 0.4;
        m.recenter();
        let mid = (m.left.translation(0) + m.right.translation(0)) / 2.0;
        assert!(mid.norm() < 1e-15);
        assert!((m.right.trajectory[(1, 8)] - 0.4).abs() < 1e-15);
    }
}
