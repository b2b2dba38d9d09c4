//! Fixed 16-joint hand skeleton used wherever joint positions are needed.
//!
//! Joint 0 is the wrist. Each finger is a three-joint chain hanging off the
//! wrist, in the order thumb, index, middle, ring, pinky. Pose joint `j`
//! (0-based, 15 of them) is the local rotation of skeleton joint `j + 1`.

use nalgebra::{Matrix3, Vector3};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::motion::{HandTrack, MotionError, POSE_JOINTS};

pub const NUM_JOINTS: usize = POSE_JOINTS + 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandSkeleton {
    /// Parent of joint `i + 1`; the wrist (joint 0) has no parent.
    pub parents: [usize; POSE_JOINTS],
    /// Length of the bone ending at joint `i + 1`, in meters.
    pub bone_lengths: [f64; POSE_JOINTS],
    /// Unit direction of that bone in its parent's frame at rest.
    pub rest_axes: [[f64; 3]; POSE_JOINTS],
}

impl Default for HandSkeleton {
    fn default() -> Self {
        const FINGER_DIRS: [[f64; 3]; 5] = [
            [0.55, 0.75, -0.25],
            [1.0, 0.25, 0.0],
            [1.0, 0.05, 0.0],
            [1.0, -0.12, 0.0],
            [0.95, -0.3, 0.0],
        ];
        const LENGTHS: [[f64; 3]; 5] = [
            [0.040, 0.032, 0.025],
            [0.090, 0.040, 0.025],
            [0.090, 0.045, 0.028],
            [0.085, 0.040, 0.026],
            [0.080, 0.030, 0.020],
        ];
        let mut parents = [0; POSE_JOINTS];
        let mut bone_lengths = [0.0; POSE_JOINTS];
        let mut rest_axes = [[0.0; 3]; POSE_JOINTS];
        for f in 0..5 {
            let d = Vector3::from(FINGER_DIRS[f]).normalize();
            for k in 0..3 {
                let i = 3 * f + k;
                parents[i] = if k == 0 { 0 } else { i };
                bone_lengths[i] = LENGTHS[f][k];
                rest_axes[i] = [d.x, d.y, d.z];
            }
        }
        Self { parents, bone_lengths, rest_axes }
    }
}

impl HandSkeleton {
    /// Checks that the tree is rooted at the wrist, acyclic, and has positive bones.
    pub fn validate(&self) -> Result<(), MotionError> {
        for (i, &p) in self.parents.iter().enumerate() {
            // Parents must precede children so a single forward pass suffices.
            if p > i {
                return Err(MotionError::Shape(format!("joint {} has parent {p} after it", i + 1)));
            }
            if !(self.bone_lengths[i] > 0.0) {
                return Err(MotionError::Shape(format!("bone {} has non-positive length", i + 1)));
            }
            let n = Vector3::from(self.rest_axes[i]).norm();
            if (n - 1.0).abs() > 1e-9 {
                return Err(MotionError::Shape(format!("rest axis {} is not unit length", i + 1)));
            }
        }
        Ok(())
    }
}

/// Joint positions, N×16×3, in the track's world frame.
pub fn forward_kinematics(track: &HandTrack, skeleton: &HandSkeleton) -> Result<Array3<f64>, MotionError> {
    let n = track.num_frames();
    let mut out = Array3::zeros((n, NUM_JOINTS, 3));
    let mut global = [Matrix3::identity(); NUM_JOINTS];
    let mut pos = [Vector3::zeros(); NUM_JOINTS];
    for t in 0..n {
        global[0] = track.global_rotation(t)?;
        pos[0] = track.translation(t);
        for i in 0..POSE_JOINTS {
            let joint = i + 1;
            let parent = skeleton.parents[i];
            let offset = Vector3::from(skeleton.rest_axes[i]) * skeleton.bone_lengths[i];
            pos[joint] = pos[parent] + global[parent] * offset;
            global[joint] = global[parent] * track.joint_rotation(t, i)?;
        }
        for (j, p) in pos.iter().enumerate() {
            for a in 0..3 {
                out[(t, j, a)] = p[a];
            }
        }
    }
    Ok(out)
}
