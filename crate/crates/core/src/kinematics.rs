//! Quaternion algebra, pelvis-rooted inverse kinematics, and angular
//! velocity of rotation tracks.
//!
//! IK recovers each joint's global rotation from observed bone directions by
//! shortest-arc alignment (plus a twist correction about the primary bone
//! when a joint has several children). The root uses an orthonormal frame
//! built from the hip line (lateral, primary) and the pelvis-to-spine axis
//! (longitudinal); skeletons where those joints cannot be identified fall
//! back to the generic shortest-arc solve for the root as well. Rotation
//! about a single bone's own axis is unobservable and resolved as zero twist.

use crate::math::{Mat3, Vec3};
use crate::motion_io::{MotionSequence, Skeleton};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("zero-length axis")]
    ZeroAxis,
    #[error("zero-length input vector")]
    ZeroVector,
    #[error("motion has {found} joints, skeleton has {expected}")]
    JointCountMismatch { expected: usize, found: usize },
    #[error("rotation track shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
}

const DEGENERATE_LENGTH: f64 = 1e-9;

/// Unit rotation quaternion. Constructors and products renormalize, keeping
/// the norm within 1e-9 of one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Quaternion {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        debug_assert!(n > 1e-300, "degenerate quaternion");
        Quaternion { w: w / n, x: x / n, y: y / n, z: z / n }
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(self, other: Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Rotation by `angle` radians about `axis` (right-handed).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Quaternion, KinematicsError> {
        let unit = axis.normalized().ok_or(KinematicsError::ZeroAxis)?;
        let (s, c) = (angle / 2.0).sin_cos();
        Ok(Quaternion::renormalized(c, unit.x * s, unit.y * s, unit.z * s))
    }

    /// Shortest-arc rotation taking the direction of `a` onto the direction
    /// of `b`. Antiparallel inputs rotate by pi about a deterministic
    /// perpendicular axis (built from the smallest-index basis vector that
    /// is not parallel to `a`).
    pub fn between(a: Vec3, b: Vec3) -> Result<Quaternion, KinematicsError> {
        let a = a.normalized().ok_or(KinematicsError::ZeroVector)?;
        let b = b.normalized().ok_or(KinematicsError::ZeroVector)?;
        let d = a.dot(b);
        if 1.0 + d < 1e-12 {
            for axis in crate::math::Axis3::ALL {
                let cross = a.cross(axis.unit());
                if cross.norm() > 1e-6 {
                    let perp = cross.normalized().expect("norm checked");
                    return Quaternion::from_axis_angle(perp, std::f64::consts::PI);
                }
            }
            unreachable!("every nonzero vector is non-parallel to some basis vector");
        }
        let v = a.cross(b);
        Ok(Quaternion::renormalized(1.0 + d, v.x, v.y, v.z))
    }

    pub fn conjugate(self) -> Quaternion {
        Quaternion { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hemisphere canonical form: w >= 0.
    pub fn canonicalized(self) -> Quaternion {
        if self.w < 0.0 {
            Quaternion { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
        } else {
            self
        }
    }

    /// Rotate a vector: q v q^-1, expanded to avoid the full products.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let uv = u.cross(v);
        v + uv * (2.0 * self.w) + u.cross(uv) * 2.0
    }

    /// Rotation vector (axis times angle, angle in [0, pi]). The identity
    /// maps to zero. The double cover is resolved toward the short angle.
    pub fn rotation_vector(self) -> Vec3 {
        let q = self.canonicalized();
        let v = Vec3::new(q.x, q.y, q.z);
        let sin_half = v.norm();
        if sin_half < 1e-300 {
            return Vec3::ZERO;
        }
        let angle = 2.0 * sin_half.atan2(q.w);
        v * (angle / sin_half)
    }

    pub fn to_rotation_matrix(self) -> Mat3 {
        let Quaternion { w, x, y, z } = self;
        Mat3::from_rows(
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        )
    }

    /// Standard branchy conversion from an orthonormal rotation matrix.
    pub fn from_rotation_matrix(m: Mat3) -> Quaternion {
        let r = m.rows;
        let trace = r[0][0] + r[1][1] + r[2][2];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quaternion::renormalized(
                0.25 * s,
                (r[2][1] - r[1][2]) / s,
                (r[0][2] - r[2][0]) / s,
                (r[1][0] - r[0][1]) / s,
            )
        } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
            let s = (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt() * 2.0;
            Quaternion::renormalized(
                (r[2][1] - r[1][2]) / s,
                0.25 * s,
                (r[0][1] + r[1][0]) / s,
                (r[0][2] + r[2][0]) / s,
            )
        } else if r[1][1] > r[2][2] {
            let s = (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt() * 2.0;
            Quaternion::renormalized(
                (r[0][2] - r[2][0]) / s,
                (r[0][1] + r[1][0]) / s,
                0.25 * s,
                (r[1][2] + r[2][1]) / s,
            )
        } else {
            let s = (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt() * 2.0;
            Quaternion::renormalized(
                (r[1][0] - r[0][1]) / s,
                (r[0][2] + r[2][0]) / s,
                (r[1][2] + r[2][1]) / s,
                0.25 * s,
            )
        };
        q.canonicalized()
    }
}

impl std::ops::Mul for Quaternion {
    type Output = Quaternion;

    /// Hamilton product, renormalized.
    fn mul(self, r: Quaternion) -> Quaternion {
        Quaternion::renormalized(
            self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        )
    }
}

/// Frames x joints of unit quaternions, in both world (global) and local
/// (parent-relative) frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationTrack {
    pub global: Vec<Vec<Quaternion>>,
    pub local: Vec<Vec<Quaternion>>,
}

impl RotationTrack {
    pub fn frame_count(&self) -> usize {
        self.global.len()
    }

    pub fn joint_count(&self) -> usize {
        self.global.first().map_or(0, Vec::len)
    }

    /// Build a track from local rotations by composing down the tree.
    pub fn from_local(
        skeleton: &Skeleton,
        local: Vec<Vec<Quaternion>>,
    ) -> Result<RotationTrack, KinematicsError> {
        let order = skeleton.topological_order();
        let n = skeleton.joint_count();
        let mut global = Vec::with_capacity(local.len());
        for frame in &local {
            if frame.len() != n {
                return Err(KinematicsError::ShapeMismatch(format!(
                    "frame has {} joints, skeleton has {n}",
                    frame.len()
                )));
            }
            let mut g = vec![Quaternion::IDENTITY; n];
            for &j in &order {
                g[j] = match skeleton.parent(j) {
                    None => frame[j],
                    Some(p) => g[p] * frame[j],
                };
            }
            global.push(g);
        }
        Ok(RotationTrack { global, local })
    }
}

/// World joint positions implied by a rotation track and per-frame root
/// positions: `p(j) = p(parent) + R_global(parent) * rest_offset(j)`.
pub fn pose_positions(
    skeleton: &Skeleton,
    track: &RotationTrack,
    root_positions: &[Vec3],
) -> Result<Vec<Vec<Vec3>>, KinematicsError> {
    if track.joint_count() != skeleton.joint_count() {
        return Err(KinematicsError::JointCountMismatch {
            expected: skeleton.joint_count(),
            found: track.joint_count(),
        });
    }
    if root_positions.len() != track.frame_count() {
        return Err(KinematicsError::ShapeMismatch(format!(
            "{} root positions for {} frames",
            root_positions.len(),
            track.frame_count()
        )));
    }
    let order = skeleton.topological_order();
    let n = skeleton.joint_count();
    let mut out = Vec::with_capacity(track.frame_count());
    for (frame, root_pos) in track.global.iter().zip(root_positions) {
        let mut pos = vec![Vec3::ZERO; n];
        for &j in &order {
            pos[j] = match skeleton.parent(j) {
                None => *root_pos,
                Some(p) => pos[p] + frame[p].rotate(skeleton.rest_offset(j)),
            };
        }
        out.push(pos);
    }
    Ok(out)
}

/// Joints used to orient the root: the hip line and a longitudinal reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RootFrameJoints {
    pub left_hip: usize,
    pub right_hip: usize,
    pub spine: usize,
}

/// Identify hip and spine joints by name. Returns `None` when the skeleton
/// has no recognizable root frame (e.g. a plain chain).
pub fn resolve_root_frame(skeleton: &Skeleton) -> Option<RootFrameJoints> {
    let mut left_hip = None;
    let mut right_hip = None;
    let mut spine: Option<(usize, u8)> = None; // (joint, preference rank)

    for (j, name) in skeleton.joint_names().iter().enumerate() {
        if j == skeleton.root_index() {
            continue;
        }
        let n: String = name
            .to_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        let hip_like = n.contains("hip") || n.contains("upleg") || n.contains("thigh");
        if hip_like {
            let is_left = n.contains("left") || (n.starts_with('l') && !n.starts_with("leg"));
            let is_right = n.contains("right") || n.starts_with('r');
            if is_left && left_hip.is_none() {
                left_hip = Some(j);
            } else if is_right && right_hip.is_none() {
                right_hip = Some(j);
            }
            continue;
        }
        let rank = if n.contains("spine") {
            Some(0)
        } else if n.contains("chest") {
            Some(1)
        } else if n.contains("neck") {
            Some(2)
        } else {
            None
        };
        if let Some(rank) = rank {
            if spine.is_none() || spine.is_some_and(|(_, r)| rank < r) {
                spine = Some((j, rank));
            }
        }
    }

    Some(RootFrameJoints {
        left_hip: left_hip?,
        right_hip: right_hip?,
        spine: spine?.0,
    })
}

/// Gram-Schmidt frame with `primary` as the first axis. Columns are the
/// orthonormal basis (primary, orthogonalized secondary, their cross).
fn orthonormal_frame(primary: Vec3, secondary: Vec3) -> Option<Mat3> {
    let e1 = primary.normalized()?;
    let e2 = (secondary - e1 * secondary.dot(e1)).normalized()?;
    let e3 = e1.cross(e2);
    Some(Mat3::from_columns(e1, e2, e3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkDiagnostic {
    pub frame: usize,
    pub reason: String,
}

/// Result of an IK solve: the recovered track plus diagnostics for frames
/// that were degenerate and carried over from their predecessor.
#[derive(Debug, Clone)]
pub struct IkOutcome {
    pub track: RotationTrack,
    pub diagnostics: Vec<IkDiagnostic>,
}

struct IkContext<'a> {
    skeleton: &'a Skeleton,
    order: Vec<usize>,
    rest_world: Vec<Vec3>,
    root_frame: Option<RootFrameJoints>,
    /// Per joint: (primary child, optional twist-reference child).
    bone_refs: Vec<Option<(usize, Option<usize>)>>,
}

impl<'a> IkContext<'a> {
    fn new(skeleton: &'a Skeleton) -> Self {
        let n = skeleton.joint_count();
        let children: Vec<Vec<usize>> = (0..n).map(|j| skeleton.children(j)).collect();
        let rest_world = (0..n).map(|j| skeleton.rest_world_position(j)).collect();
        let bone_refs = (0..n)
            .map(|j| {
                let kids = &children[j];
                let primary = *kids.first()?;
                let r1 = skeleton.rest_offset(primary).normalized()?;
                // Twist reference: the sibling least parallel to the primary
                // bone in the rest pose.
                let secondary = kids[1..]
                    .iter()
                    .filter_map(|&c| {
                        let r2 = skeleton.rest_offset(c).normalized()?;
                        Some((c, r1.cross(r2).norm()))
                    })
                    .filter(|(_, sine)| *sine > 1e-6)
                    .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite"))
                    .map(|(c, _)| c);
                Some((primary, secondary))
            })
            .collect();
        IkContext {
            skeleton,
            order: skeleton.topological_order(),
            rest_world,
            root_frame: resolve_root_frame(skeleton),
            bone_refs,
        }
    }

    /// Global rotation of a joint from its observed bones; `None` means the
    /// joint is a leaf and inherits its parent's rotation.
    fn solve_joint(&self, j: usize, positions: &[Vec3]) -> Result<Option<Quaternion>, String> {
        let Some((primary, secondary)) = self.bone_refs[j] else {
            return Ok(None);
        };
        let r1 = self.skeleton.rest_offset(primary);
        let o1 = positions[primary] - positions[j];
        if o1.norm() < DEGENERATE_LENGTH {
            return Err(format!(
                "zero-length observed bone {} -> {}",
                self.skeleton.joint_names()[j],
                self.skeleton.joint_names()[primary]
            ));
        }
        let swing = Quaternion::between(r1, o1).expect("bone lengths are nonzero");
        let Some(c2) = secondary else {
            return Ok(Some(swing));
        };
        let o2 = positions[c2] - positions[j];
        if o2.norm() < DEGENERATE_LENGTH {
            return Err(format!(
                "zero-length observed bone {} -> {}",
                self.skeleton.joint_names()[j],
                self.skeleton.joint_names()[c2]
            ));
        }
        // Twist about the aligned primary bone that best matches the
        // secondary bone's azimuth.
        let axis = o1.normalized().expect("length checked");
        let have = swing.rotate(self.skeleton.rest_offset(c2));
        let have_perp = have - axis * have.dot(axis);
        let want_perp = o2 - axis * o2.dot(axis);
        if have_perp.norm() < DEGENERATE_LENGTH || want_perp.norm() < DEGENERATE_LENGTH {
            return Ok(Some(swing));
        }
        let angle = have_perp.cross(want_perp).dot(axis).atan2(have_perp.dot(want_perp));
        let twist = Quaternion::from_axis_angle(axis, angle).expect("unit axis");
        Ok(Some(twist * swing))
    }

    fn solve_root(&self, positions: &[Vec3]) -> Result<Quaternion, String> {
        let root = self.skeleton.root_index();
        if let Some(rf) = self.root_frame {
            let lateral = positions[rf.left_hip] - positions[rf.right_hip];
            let longitudinal = positions[rf.spine] - positions[root];
            if lateral.norm() < DEGENERATE_LENGTH {
                return Err("coincident hips".into());
            }
            let rest_lateral = self.rest_world[rf.left_hip] - self.rest_world[rf.right_hip];
            let rest_longitudinal = self.rest_world[rf.spine] - self.rest_world[root];
            let rest = orthonormal_frame(rest_lateral, rest_longitudinal)
                .ok_or("degenerate rest-pose root frame")?;
            let observed = orthonormal_frame(lateral, longitudinal)
                .ok_or("degenerate observed root frame")?;
            Ok(Quaternion::from_rotation_matrix(observed.mul_mat(rest.transpose())))
        } else {
            // No recognizable hips/spine: orient the root from its child
            // bones like any other joint.
            Ok(self
                .solve_joint(root, positions)
                .map_err(|e| format!("degenerate root solve: {e}"))?
                .unwrap_or(Quaternion::IDENTITY))
        }
    }

    fn solve_frame(&self, positions: &[Vec3]) -> Result<(Vec<Quaternion>, Vec<Quaternion>), String> {
        let n = self.skeleton.joint_count();
        let root = self.skeleton.root_index();
        let mut global = vec![Quaternion::IDENTITY; n];
        global[root] = self.solve_root(positions)?;
        for &j in &self.order {
            if j == root {
                continue;
            }
            let parent = self.skeleton.parent(j).expect("non-root");
            global[j] = match self.solve_joint(j, positions)? {
                Some(q) => q,
                None => global[parent],
            };
        }
        let mut local = vec![Quaternion::IDENTITY; n];
        for &j in &self.order {
            let q = match self.skeleton.parent(j) {
                None => global[j],
                Some(p) => global[p].conjugate() * global[j],
            };
            local[j] = q.canonicalized();
            global[j] = global[j].canonicalized();
        }
        Ok((global, local))
    }
}

/// Recover per-joint rotations from world joint positions.
///
/// Degenerate frames (coincident hips, zero-length observed bones) are
/// reported in the outcome's diagnostics and replaced by the previous
/// frame's solution (identity for a degenerate first frame).
pub fn inverse_kinematics(
    skeleton: &Skeleton,
    motion: &MotionSequence,
) -> Result<IkOutcome, KinematicsError> {
    if motion.joint_count() != skeleton.joint_count() {
        return Err(KinematicsError::JointCountMismatch {
            expected: skeleton.joint_count(),
            found: motion.joint_count(),
        });
    }
    let ctx = IkContext::new(skeleton);
    let n = skeleton.joint_count();
    let mut global = Vec::with_capacity(motion.frame_count());
    let mut local = Vec::with_capacity(motion.frame_count());
    let mut diagnostics = Vec::new();
    for (frame, positions) in motion.positions.iter().enumerate() {
        match ctx.solve_frame(positions) {
            Ok((g, l)) => {
                global.push(g);
                local.push(l);
            }
            Err(reason) => {
                diagnostics.push(IkDiagnostic { frame, reason });
                let (g, l) = if frame == 0 {
                    (vec![Quaternion::IDENTITY; n], vec![Quaternion::IDENTITY; n])
                } else {
                    (global[frame - 1].clone(), local[frame - 1].clone())
                };
                global.push(g);
                local.push(l);
            }
        }
    }
    Ok(IkOutcome { track: RotationTrack { global, local }, diagnostics })
}

/// Body-frame angular velocity of the global track, rad/s.
///
/// Interior frames pair `(q[k-1], q[k+1])` over `2/frame_rate`; endpoints
/// use their single neighbor over `1/frame_rate`. Consecutive quaternions
/// are hemisphere-aligned before differencing, so sign flips in the stored
/// track cannot produce spurious 2-pi jumps.
pub fn angular_velocity(
    track: &RotationTrack,
    frame_rate: f64,
) -> Result<Vec<Vec<Vec3>>, KinematicsError> {
    let frames = track.frame_count();
    if frames < 2 {
        return Err(KinematicsError::TooFewFrames { needed: 2, got: frames });
    }
    let joints = track.joint_count();
    let mut out = vec![vec![Vec3::ZERO; joints]; frames];
    #[allow(clippy::needless_range_loop)]
    for j in 0..joints {
        for k in 0..frames {
            let (a, b, rate) = if k == 0 {
                (track.global[0][j], track.global[1][j], frame_rate)
            } else if k == frames - 1 {
                (track.global[frames - 2][j], track.global[frames - 1][j], frame_rate)
            } else {
                (track.global[k - 1][j], track.global[k + 1][j], frame_rate / 2.0)
            };
            // rotation_vector canonicalizes the relative rotation, which is
            // exactly the hemisphere alignment of the (a, b) pair.
            out[k][j] = (a.conjugate() * b).rotation_vector() * rate;
        }
    }
    Ok(out)
}
