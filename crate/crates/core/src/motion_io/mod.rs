//! Skeletons and joint-motion sequences: BVH and column-mapped CSV parsing,
//! plus matrix-chain forward kinematics.

mod bvh;
mod csv;

pub use bvh::{parse_bvh, write_bvh};
pub use csv::{parse_joint_csv, write_joint_csv, JointCsvSpec};

use crate::math::{Axis3, Mat3, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Where a window or motion ultimately came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Real,
    VirtualText,
    VirtualVideo,
    /// Produced by sensor-level augmentation of another window. Motions are
    /// never augmented; this tag only appears on windows.
    Augmented,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::VirtualText => "virtual-text",
            Provenance::VirtualVideo => "virtual-video",
            Provenance::Augmented => "augmented",
        }
    }
}

#[derive(Debug, Error)]
pub enum MotionIoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("invalid motion: {0}")]
    InvalidMotion(String),
    #[error("skeleton has {expected} joints but pose/motion has {found}")]
    JointCountMismatch { expected: usize, found: usize },
}

impl MotionIoError {
    pub(crate) fn at(line: usize, message: impl Into<String>) -> Self {
        MotionIoError::Parse { line, message: message.into() }
    }
}

/// A single-rooted joint tree with rest-pose bone offsets in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    joint_names: Vec<String>,
    parent_index: Vec<Option<usize>>,
    rest_offset: Vec<Vec3>,
    root_index: usize,
}

impl Skeleton {
    pub fn new(
        joint_names: Vec<String>,
        parent_index: Vec<Option<usize>>,
        rest_offset: Vec<Vec3>,
    ) -> Result<Self, MotionIoError> {
        let n = joint_names.len();
        if n == 0 {
            return Err(MotionIoError::InvalidSkeleton("no joints".into()));
        }
        if parent_index.len() != n || rest_offset.len() != n {
            return Err(MotionIoError::InvalidSkeleton(
                "joint_names, parent_index and rest_offset lengths differ".into(),
            ));
        }
        let roots: Vec<usize> = (0..n).filter(|&j| parent_index[j].is_none()).collect();
        if roots.len() != 1 {
            return Err(MotionIoError::InvalidSkeleton(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        let root_index = roots[0];
        for (j, &p) in parent_index.iter().enumerate() {
            if let Some(p) = p {
                if p >= n {
                    return Err(MotionIoError::InvalidSkeleton(format!(
                        "joint {j} has out-of-range parent {p}"
                    )));
                }
                if rest_offset[j].norm() == 0.0 {
                    return Err(MotionIoError::InvalidSkeleton(format!(
                        "non-root joint '{}' has zero-length rest offset",
                        joint_names[j]
                    )));
                }
            }
        }
        // Walking to the root from every joint must terminate: no cycles.
        for start in 0..n {
            let mut cursor = start;
            for _ in 0..=n {
                match parent_index[cursor] {
                    None => break,
                    Some(p) => cursor = p,
                }
            }
            if parent_index[cursor].is_some() {
                return Err(MotionIoError::InvalidSkeleton(format!(
                    "cycle detected through joint {start}"
                )));
            }
        }
        Ok(Skeleton { joint_names, parent_index, rest_offset, root_index })
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parent_index[joint]
    }

    pub fn rest_offset(&self, joint: usize) -> Vec3 {
        self.rest_offset[joint]
    }

    pub fn root_index(&self) -> usize {
        self.root_index
    }

    /// Children of `joint` in index order.
    pub fn children(&self, joint: usize) -> Vec<usize> {
        (0..self.joint_count())
            .filter(|&c| self.parent_index[c] == Some(joint))
            .collect()
    }

    /// Joint indices ordered parents-before-children.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.joint_count();
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        order.push(self.root_index);
        placed[self.root_index] = true;
        while order.len() < n {
            for j in 0..n {
                if !placed[j] && self.parent_index[j].map(|p| placed[p]) == Some(true) {
                    order.push(j);
                    placed[j] = true;
                }
            }
        }
        order
    }

    /// Rest-pose world position of a joint: cumulative offsets along its chain.
    pub fn rest_world_position(&self, joint: usize) -> Vec3 {
        let mut pos = self.rest_offset[joint];
        let mut cursor = joint;
        while let Some(p) = self.parent_index[cursor] {
            pos += self.rest_offset[p];
            cursor = p;
        }
        pos
    }
}

/// Frames x joints of world-frame joint positions at a fixed frame rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSequence {
    pub frame_rate: f64,
    /// `positions[frame][joint]`, meters, world frame.
    pub positions: Vec<Vec<Vec3>>,
    pub activity_label: Option<String>,
    pub subject_id: Option<String>,
    pub provenance: Provenance,
}

impl MotionSequence {
    pub fn new(
        frame_rate: f64,
        positions: Vec<Vec<Vec3>>,
        provenance: Provenance,
    ) -> Result<Self, MotionIoError> {
        if !(frame_rate > 0.0) {
            return Err(MotionIoError::InvalidMotion(format!(
                "frame rate must be positive, got {frame_rate}"
            )));
        }
        if positions.len() < 2 {
            return Err(MotionIoError::InvalidMotion(format!(
                "need at least 2 frames, got {}",
                positions.len()
            )));
        }
        if provenance == Provenance::Augmented {
            return Err(MotionIoError::InvalidMotion(
                "motion sequences are never augmented".into(),
            ));
        }
        let joints = positions[0].len();
        for (f, frame) in positions.iter().enumerate() {
            if frame.len() != joints {
                return Err(MotionIoError::InvalidMotion(format!(
                    "frame {f} has {} joints, frame 0 has {joints}",
                    frame.len()
                )));
            }
            if let Some(j) = frame.iter().position(|p| !p.is_finite()) {
                return Err(MotionIoError::InvalidMotion(format!(
                    "non-finite position at frame {f}, joint {j}"
                )));
            }
        }
        Ok(MotionSequence {
            frame_rate,
            positions,
            activity_label: None,
            subject_id: None,
            provenance,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.activity_label = Some(label.into());
        self
    }

    pub fn with_subject(mut self, subject: impl Into<String>) -> Self {
        self.subject_id = Some(subject.into());
        self
    }

    pub fn frame_count(&self) -> usize {
        self.positions.len()
    }

    pub fn joint_count(&self) -> usize {
        self.positions[0].len()
    }

    pub fn duration_seconds(&self) -> f64 {
        (self.frame_count() - 1) as f64 / self.frame_rate
    }

    /// Scale all coordinates (unit conversion at ingest).
    pub fn scaled(mut self, factor: f64) -> Self {
        for frame in &mut self.positions {
            for p in frame.iter_mut() {
                *p = *p * factor;
            }
        }
        self
    }
}

/// Euler rotation order as declared on a BVH CHANNELS line, e.g. ZXY.
/// Rotations are applied intrinsically in listed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotationOrder(pub [Axis3; 3]);

impl RotationOrder {
    pub const XYZ: RotationOrder = RotationOrder([Axis3::X, Axis3::Y, Axis3::Z]);

    /// Rotation matrix for the given angles (degrees) in this order.
    /// Intrinsic composition: listed rotations right-multiply.
    pub fn matrix_from_degrees(self, degrees: [f64; 3]) -> Mat3 {
        let mut m = Mat3::IDENTITY;
        for (axis, deg) in self.0.iter().zip(degrees) {
            m = m.mul_mat(Mat3::rotation_about(*axis, deg.to_radians()));
        }
        m
    }
}

/// The BVH-native pose representation: per-frame root translation plus
/// per-joint local Euler rotations in each joint's declared order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPose {
    pub frame_rate: f64,
    /// Per-frame root translation, meters.
    pub root_translation: Vec<Vec3>,
    /// `rotations_deg[frame][joint]` = angles in the joint's declared order.
    pub rotations_deg: Vec<Vec<[f64; 3]>>,
    /// Declared rotation order per joint (XYZ for joints without rotation channels).
    pub orders: Vec<RotationOrder>,
}

impl ChannelPose {
    pub fn frame_count(&self) -> usize {
        self.root_translation.len()
    }

    pub fn joint_count(&self) -> usize {
        self.orders.len()
    }

    /// Local rotation matrix of a joint at a frame.
    pub fn local_rotation(&self, frame: usize, joint: usize) -> Mat3 {
        self.orders[joint].matrix_from_degrees(self.rotations_deg[frame][joint])
    }
}

/// World joint positions from local channel rotations.
///
/// Per joint: `world(j) = world(parent) + world_rot(parent) * rest_offset(j)`,
/// with `world_rot(j) = world_rot(parent) * local_rot(j)`. The root sits at
/// `rest_offset(root) + translation(frame)`.
pub fn forward_kinematics(
    skeleton: &Skeleton,
    pose: &ChannelPose,
) -> Result<MotionSequence, MotionIoError> {
    if pose.joint_count() != skeleton.joint_count() {
        return Err(MotionIoError::JointCountMismatch {
            expected: skeleton.joint_count(),
            found: pose.joint_count(),
        });
    }
    let order = skeleton.topological_order();
    let n = skeleton.joint_count();
    let mut positions = Vec::with_capacity(pose.frame_count());
    for frame in 0..pose.frame_count() {
        let mut world_rot = vec![Mat3::IDENTITY; n];
        let mut world_pos = vec![Vec3::ZERO; n];
        for &j in &order {
            match skeleton.parent(j) {
                None => {
                    world_rot[j] = pose.local_rotation(frame, j);
                    world_pos[j] = skeleton.rest_offset(j) + pose.root_translation[frame];
                }
                Some(p) => {
                    world_rot[j] = world_rot[p].mul_mat(pose.local_rotation(frame, j));
                    world_pos[j] = world_pos[p] + world_rot[p].mul_vec(skeleton.rest_offset(j));
                }
            }
        }
        positions.push(world_pos);
    }
    MotionSequence::new(pose.frame_rate, positions, Provenance::VirtualText)
}
