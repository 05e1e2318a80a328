//! Parameterized cabinet scenes used by tests, benchmarks and the CLI.
//!
//! Every template keeps the movable panel at least 4 cm in front of the body
//! and makes it overhang the body front, so the body front is hidden in
//! frame 0 and the panel stays farther than the part-attachment radius from
//! every static surface point. A thin static board behind the body stays
//! visible around it and pins down the camera.

use super::{CameraNoise, Cuboid, PartSpec, SceneSpec};
use crate::geometry::{so3, JointModel, RigidTransform, Vec3};
use crate::rng::{self, domain};
use crate::scene::Intrinsics;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// Hinged door in front of a body (revolute).
    CabinetDoor,
    /// Front panel pulled straight out (prismatic).
    Drawer,
    /// Drawer whose box is hidden inside the body at the canonical state.
    DrawerWithInterior,
}

/// Observation corruption applied on top of a template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseSpec {
    pub point_noise: f64,
    pub mask_corruption: f64,
    pub outlier_rate: f64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self::default()
    }

    /// 5 mm point noise, 20% flipped moving-map labels, 20% outlier matches.
    pub fn standard() -> Self {
        Self {
            point_noise: 0.005,
            mask_corruption: 0.2,
            outlier_rate: 0.2,
        }
    }
}

pub const DEFAULT_FRAMES: usize = 10;
const DENSITY: f64 = 1.0 / 0.03;
const GAP: f64 = 0.04;
const PANEL_THICKNESS: f64 = 0.012;
const OVERHANG: f64 = 0.05;
/// Margin of the backboard around the panel, and its sample density.
const BACKBOARD_MARGIN: f64 = 0.12;
const BACKBOARD_DENSITY: f64 = 1.0 / 0.05;
const SAMPLE_JITTER: f64 = 0.6;

impl SceneSpec {
    /// Seeded variation of a template: body size, object pose, hinge side
    /// and final joint state are drawn from `seed`.
    pub fn template(kind: SceneKind, seed: u64, noise: NoiseSpec) -> SceneSpec {
        let mut rng = rng::stream(seed, domain::TEMPLATE, 0);
        let bw = rng.random_range(0.20..0.26);
        let bh = rng.random_range(0.24..0.30);
        let bd = 0.2;
        let yaw = rng.random_range(0.25..0.42) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let pitch = rng.random_range(0.28..0.42);
        let distance = rng.random_range(1.6..1.8);
        let hinge_side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let final_state = match kind {
            SceneKind::CabinetDoor => rng.random_range(0.6..1.0),
            SceneKind::Drawer | SceneKind::DrawerWithInterior => rng.random_range(0.15..0.3),
        };

        let object = RigidTransform::new(
            so3::exp(&Vec3::new(pitch, 0.0, 0.0)) * so3::exp(&Vec3::new(0.0, yaw, 0.0)),
            Vec3::new(0.0, 0.0, distance),
        );
        let place = |center: Vec3, half: Vec3| -> Cuboid {
            let c = object.apply(&center);
            let o = so3::log(&object.rotation);
            Cuboid {
                center: [c.x, c.y, c.z],
                half_extents: [half.x, half.y, half.z],
                orientation: [o.x, o.y, o.z],
                density: DENSITY,
            }
        };

        let body = place(Vec3::zeros(), Vec3::new(bw, bh, bd));
        let panel_half = Vec3::new(bw + OVERHANG, bh + OVERHANG, PANEL_THICKNESS / 2.0);
        // static board behind the body, visible around it
        let backboard = Cuboid {
            density: BACKBOARD_DENSITY,
            ..place(
                Vec3::new(0.0, 0.0, bd + 0.01),
                Vec3::new(panel_half.x + BACKBOARD_MARGIN, panel_half.y + BACKBOARD_MARGIN, 0.01),
            )
        };
        let panel_z = -bd - GAP - PANEL_THICKNESS / 2.0;
        let mut movable = vec![place(Vec3::new(0.0, 0.0, panel_z), panel_half)];
        if kind == SceneKind::DrawerWithInterior {
            let depth = 0.12;
            movable.push(place(
                Vec3::new(0.0, 0.0, -bd + 0.01 + depth),
                Vec3::new(bw - 0.03, bh - 0.01, depth),
            ));
        }

        let joint = match kind {
            SceneKind::CabinetDoor => {
                // Hinge on the back edge of the door; opens toward the camera.
                let pivot = Vec3::new(hinge_side * panel_half.x, 0.0, -bd - GAP);
                let axis = Vec3::new(0.0, -hinge_side, 0.0);
                JointModel::revolute(object.apply_vector(&axis), object.apply(&pivot))
            }
            _ => JointModel::prismatic(object.apply_vector(&Vec3::new(0.0, 0.0, -1.0))),
        };

        let frames = DEFAULT_FRAMES;
        let states = (0..frames)
            .map(|t| final_state * t as f64 / (frames - 1) as f64)
            .collect();

        SceneSpec {
            seed,
            parts: vec![
                PartSpec { id: 0, cuboids: vec![body, backboard] },
                PartSpec { id: 1, cuboids: movable },
            ],
            joint,
            movable_part: 1,
            states,
            width: 128,
            height: 104,
            intrinsics: Intrinsics {
                fx: 127.0,
                fy: 127.0,
                cx: 64.0,
                cy: 52.0,
            },
            sample_jitter: SAMPLE_JITTER,
            retarget_interval: Some([7, 10]),
            camera_noise: CameraNoise {
                position: 0.05,
                orientation: 0.03,
            },
            point_noise: noise.point_noise,
            mask_corruption: noise.mask_corruption,
            outlier_rate: noise.outlier_rate,
        }
    }
}

/// Short form of a spec file: a template, its seed and the noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateRef {
    pub template: SceneKind,
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseSpec,
}

/// Contents of a scene spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecFile {
    Template(TemplateRef),
    Full(Box<SceneSpec>),
}

impl SpecFile {
    pub fn into_spec(self) -> SceneSpec {
        match self {
            Self::Template(t) => SceneSpec::template(t.template, t.seed, t.noise),
            Self::Full(s) => *s,
        }
    }
}

/// 50 doors (seeds 0..50), then 25 drawers and 25 drawers with interior
/// (seeds 0..25), all at the given noise level.
pub fn suite(noise: NoiseSpec) -> Vec<TemplateRef> {
    let doors = (0..50).map(|seed| (SceneKind::CabinetDoor, seed));
    let drawers = (0..25).map(|seed| (SceneKind::Drawer, seed));
    let interiors = (0..25).map(|seed| (SceneKind::DrawerWithInterior, seed));
    doors
        .chain(drawers)
        .chain(interiors)
        .map(|(template, seed)| TemplateRef { template, seed, noise })
        .collect()
}

impl TemplateRef {
    /// `door-007`, `drawer-012`, `drawer_interior-003`.
    pub fn name(&self) -> String {
        let kind = match self.template {
            SceneKind::CabinetDoor => "door",
            SceneKind::Drawer => "drawer",
            SceneKind::DrawerWithInterior => "drawer_interior",
        };
        format!("{kind}-{:03}", self.seed)
    }

    pub fn spec(&self) -> SceneSpec {
        SceneSpec::template(self.template, self.seed, self.noise)
    }
}
