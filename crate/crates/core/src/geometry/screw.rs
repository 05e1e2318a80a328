use super::{so3, RigidTransform, Vec3, PRISMATIC_DEGENERATE_DISTANCE, REVOLUTE_DEGENERATE_ANGLE};
use serde::{Deserialize, Serialize};

/// Rotation about a line; `pivot` is the point of the line nearest the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevoluteScrew {
    #[serde(with = "super::vec3_serde")]
    pub axis: Vec3,
    #[serde(with = "super::vec3_serde")]
    pub pivot: Vec3,
    pub angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrismaticScrew {
    #[serde(with = "super::vec3_serde")]
    pub axis: Vec3,
    pub distance: f64,
}

/// Both joint readings of one rigid motion. `None` marks a degenerate branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScrewDecomposition {
    pub revolute: Option<RevoluteScrew>,
    pub prismatic: Option<PrismaticScrew>,
}

pub fn screw_decompose(t: &RigidTransform) -> ScrewDecomposition {
    let omega = so3::log(&t.rotation);
    let angle = omega.norm();
    let revolute = if angle < REVOLUTE_DEGENERATE_ANGLE || !angle.is_finite() {
        None
    } else {
        let axis = omega / angle;
        let t_perp = t.translation - axis * axis.dot(&t.translation);
        // Solves (I - R) p = t_perp for p orthogonal to the axis.
        let cot_half = 1.0 / (0.5 * angle).tan();
        let pivot = (t_perp + axis.cross(&t_perp) * cot_half) * 0.5;
        Some(RevoluteScrew { axis, pivot, angle })
    };

    let distance = t.translation.norm();
    let prismatic = if distance < PRISMATIC_DEGENERATE_DISTANCE || !distance.is_finite() {
        None
    } else {
        Some(PrismaticScrew {
            axis: t.translation / distance,
            distance,
        })
    };

    ScrewDecomposition {
        revolute,
        prismatic,
    }
}
