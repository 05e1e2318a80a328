//! Rigid-body and screw-motion primitives shared by every stage of the
//! pipeline.
//!
//! Points and directions are `nalgebra::Vector3<f64>`. A [`RigidTransform`]
//! maps points as `R * p + t`. Joints are single degree of freedom: a
//! revolute joint rotates about the line through `pivot` along `axis`, a
//! prismatic joint translates along `axis`.

mod chamfer;
mod kabsch;
mod kdtree;
mod screw;
pub mod so3;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub use chamfer::{chamfer_mean, chamfer_one_directional, chamfer_symmetric};
pub use kabsch::fit_rigid_transform;
pub use kdtree::NearestNeighborIndex;
pub use screw::{screw_decompose, PrismaticScrew, RevoluteScrew, ScrewDecomposition};

pub type Vec3 = Vector3<f64>;

/// Revolute angles below this carry no usable axis.
pub const REVOLUTE_DEGENERATE_ANGLE: f64 = 1e-6;
/// Translations below this carry no usable direction.
pub const PRISMATIC_DEGENERATE_DISTANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

/// Element of SE(3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "TransformRepr", from = "TransformRepr")]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let r = &t.rotation;
        TransformRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl From<TransformRepr> for RigidTransform {
    fn from(r: TransformRepr) -> Self {
        let m = r.rotation;
        RigidTransform {
            rotation: Matrix3::new(
                m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
            ),
            translation: Vec3::from(r.translation),
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by the axis-angle vector `omega`, then translation.
    pub fn from_axis_angle(omega: &Vec3, translation: Vec3) -> Self {
        Self {
            rotation: so3::exp(omega),
            translation,
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Projects the rotation block back onto SO(3) (polar decomposition).
    pub fn orthonormalized(&self) -> RigidTransform {
        RigidTransform {
            rotation: so3::project_to_rotation(&self.rotation),
            translation: self.translation,
        }
    }

    /// Geodesic angle of the rotation block.
    pub fn rotation_angle(&self) -> f64 {
        so3::log(&self.rotation).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().all(|v| v.is_finite()) && self.translation.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

/// Geodesic rotation distance and translation distance between two poses.
pub fn pose_distance(a: &RigidTransform, b: &RigidTransform) -> (f64, f64) {
    let rel = a.rotation.transpose() * b.rotation;
    (so3::log(&rel).norm(), (a.translation - b.translation).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Revolute,
    Prismatic,
}

impl JointType {
    pub const BOTH: [JointType; 2] = [JointType::Revolute, JointType::Prismatic];

    pub fn as_str(&self) -> &'static str {
        match self {
            JointType::Revolute => "revolute",
            JointType::Prismatic => "prismatic",
        }
    }
}

impl std::fmt::Display for JointType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One-degree-of-freedom joint. `pivot` is ignored for prismatic joints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointModel {
    pub joint_type: JointType,
    #[serde(with = "vec3_serde")]
    pub axis: Vec3,
    #[serde(with = "vec3_serde")]
    pub pivot: Vec3,
}

impl JointModel {
    /// Normalizes `axis`; the pivot is canonicalized to the point of the axis
    /// line closest to the origin.
    pub fn revolute(axis: Vec3, pivot: Vec3) -> Self {
        let axis = axis.normalize();
        Self {
            joint_type: JointType::Revolute,
            axis,
            pivot: pivot - axis * axis.dot(&pivot),
        }
    }

    pub fn prismatic(axis: Vec3) -> Self {
        Self {
            joint_type: JointType::Prismatic,
            axis: axis.normalize(),
            pivot: Vec3::zeros(),
        }
    }

    /// Flat `[type, axis, pivot]` form (type 1 = revolute, 0 = prismatic).
    pub fn to_array(&self) -> [f64; 7] {
        let flag = match self.joint_type {
            JointType::Revolute => 1.0,
            JointType::Prismatic => 0.0,
        };
        [
            flag,
            self.axis.x,
            self.axis.y,
            self.axis.z,
            self.pivot.x,
            self.pivot.y,
            self.pivot.z,
        ]
    }

    /// Same joint with the axis reversed; states must be negated to match.
    pub fn flipped(&self) -> Self {
        Self {
            axis: -self.axis,
            ..*self
        }
    }

    /// Shortest distance from `p` to the revolute axis line.
    pub fn distance_to_axis_line(&self, p: &Vec3) -> f64 {
        let d = p - self.pivot;
        (d - self.axis * self.axis.dot(&d)).norm()
    }
}

/// Rigid motion of the movable part at joint state `state`.
pub fn apply_joint(joint: &JointModel, state: f64) -> RigidTransform {
    match joint.joint_type {
        JointType::Prismatic => RigidTransform::from_translation(joint.axis * state),
        JointType::Revolute => {
            let rotation = so3::exp(&(joint.axis * state));
            RigidTransform {
                rotation,
                translation: joint.pivot - rotation * joint.pivot,
            }
        }
    }
}

/// Per-frame joint states; frame 0 is the canonical state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointStateSequence {
    pub states: Vec<f64>,
}

impl JointStateSequence {
    pub fn new(states: Vec<f64>) -> Self {
        Self { states }
    }

    pub fn is_canonical(&self) -> bool {
        self.states.first().is_some_and(|s| *s == 0.0)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Unordered point set, optionally labeled per point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub labels: Option<Vec<u16>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self {
            points,
            labels: None,
        }
    }

    pub fn labeled(points: Vec<Vec3>, labels: Vec<u16>) -> Self {
        assert_eq!(points.len(), labels.len());
        Self {
            points,
            labels: Some(labels),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Minimum distance between two infinite lines.
pub fn line_to_line_distance(p1: &Vec3, d1: &Vec3, p2: &Vec3, d2: &Vec3) -> f64 {
    let d1 = d1.normalize();
    let d2 = d2.normalize();
    let n = d1.cross(&d2);
    let w = p2 - p1;
    let nn = n.norm();
    if nn < 1e-12 {
        (w - d1 * d1.dot(&w)).norm()
    } else {
        (w.dot(&n) / nn).abs()
    }
}

pub(crate) mod vec3_serde {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::from(a))
    }
}
