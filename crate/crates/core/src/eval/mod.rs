//! Error metrics against synthetic ground truth, and report aggregation.

use crate::geometry::{
    chamfer_mean, line_to_line_distance, pose_distance, JointModel, JointType, NearestNeighborIndex, RigidTransform, Vec3,
};
use crate::rng::{self, domain};
use crate::scene::ImageMap;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

#[cfg(test)]
mod tests;

/// Value assigned to every non-angular metric of a failed run.
pub const FAILURE_VALUE: f64 = 1.0;

/// Emitted verbatim in every report.
pub const CONVENTIONS: &str = "axis error: angle between undirected axis lines, arccos|a.b| in [0, pi/2]; \
position error: minimum distance between the infinite axis lines (revolute ground truth only); \
state error: mean |s_pred - s_gt| over frames, predicted states negated when the predicted axis is flipped; \
a wrong joint type reports failure values for position and state; \
failure: axis pi/2, revolute state pi/2, every other error 1.0; \
geometry: symmetric Chamfer (mean of both directions, Euclidean) on seeded uniform samples, 1.0 for an empty part; \
mIOU: moving maps binarized at 0.5, frames with an empty union count 1; \
std: population standard deviation";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointMetrics {
    /// Radians.
    pub axis_error: f64,
    /// Meters; `None` for a prismatic ground truth.
    pub position_error: Option<f64>,
    pub type_error: bool,
    /// Mean over frames, radians or meters.
    pub state_error: f64,
    /// Largest per-frame error.
    pub max_state_error: f64,
    pub failure: bool,
}

impl JointMetrics {
    pub fn failed(gt_type: JointType) -> Self {
        let state = match gt_type {
            JointType::Revolute => FRAC_PI_2,
            JointType::Prismatic => FAILURE_VALUE,
        };
        Self {
            axis_error: FRAC_PI_2,
            position_error: (gt_type == JointType::Revolute).then_some(FAILURE_VALUE),
            type_error: true,
            state_error: state,
            max_state_error: state,
            failure: true,
        }
    }
}

/// Compares a predicted joint and states with the ground truth. `None`,
/// or a state sequence of the wrong length, counts as failure.
pub fn joint_metrics(pred: Option<(&JointModel, &[f64])>, gt: &JointModel, gt_states: &[f64]) -> JointMetrics {
    let Some((joint, states)) = pred else {
        return JointMetrics::failed(gt.joint_type);
    };
    if states.len() != gt_states.len() {
        return JointMetrics::failed(gt.joint_type);
    }
    let dot = joint.axis.normalize().dot(&gt.axis.normalize());
    let axis_error = dot.abs().min(1.0).acos();
    let type_error = joint.joint_type != gt.joint_type;
    let failed = JointMetrics::failed(gt.joint_type);
    let position_error = match gt.joint_type {
        JointType::Prismatic => None,
        JointType::Revolute if type_error => failed.position_error,
        JointType::Revolute => Some(line_to_line_distance(&joint.pivot, &joint.axis, &gt.pivot, &gt.axis)),
    };
    let (state_error, max_state_error) = if type_error {
        (failed.state_error, failed.max_state_error)
    } else {
        let sign = if dot < 0.0 { -1.0 } else { 1.0 };
        let errs: Vec<f64> = states.iter().zip(gt_states).map(|(p, g)| (sign * p - g).abs()).collect();
        let mean = if errs.is_empty() { 0.0 } else { errs.iter().sum::<f64>() / errs.len() as f64 };
        (mean, errs.iter().copied().fold(0.0, f64::max))
    };
    JointMetrics {
        axis_error,
        position_error,
        type_error,
        state_error,
        max_state_error,
        failure: false,
    }
}

/// Symmetric Chamfer on the whole object, the movable part and the static
/// part (CD-w, CD-m, CD-s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryMetrics {
    pub whole: f64,
    pub movable: f64,
    pub fixed: f64,
}

impl GeometryMetrics {
    pub fn failed() -> Self {
        Self {
            whole: FAILURE_VALUE,
            movable: FAILURE_VALUE,
            fixed: FAILURE_VALUE,
        }
    }
}

/// `samples` points drawn uniformly with replacement, or every point when
/// `samples` is 0.
fn draw(points: &[Vec3], samples: usize, seed: u64, stream: u64) -> Vec<Vec3> {
    if samples == 0 {
        return points.to_vec();
    }
    let mut rng = rng::stream(seed, domain::EVAL_SAMPLE, stream);
    (0..samples).map(|_| points[rng.random_range(0..points.len())]).collect()
}

/// Symmetric Chamfer of two clouds after sampling; 1.0 when either is
/// empty.
pub fn sampled_chamfer(pred: &[Vec3], gt: &[Vec3], samples: usize, seed: u64, stream: u64) -> f64 {
    if pred.is_empty() || gt.is_empty() {
        return FAILURE_VALUE;
    }
    let a = draw(pred, samples, seed, 2 * stream);
    let b = draw(gt, samples, seed, 2 * stream + 1);
    let ia = NearestNeighborIndex::new(&a);
    let ib = NearestNeighborIndex::new(&b);
    0.5 * (chamfer_mean(&a, &ib) + chamfer_mean(&b, &ia))
}

/// Predicted parts are the surface cloud split by `pred_movable`; ground
/// truth parts are `gt_cloud` split by `gt_movable`.
pub fn geometry_metrics(
    surface: &[Vec3],
    pred_movable: &[bool],
    gt_cloud: &[Vec3],
    gt_movable: &[bool],
    samples: usize,
    seed: u64,
) -> GeometryMetrics {
    let split = |points: &[Vec3], flags: &[bool], want: bool| -> Vec<Vec3> {
        points.iter().zip(flags).filter(|(_, f)| **f == want).map(|(p, _)| *p).collect()
    };
    GeometryMetrics {
        whole: sampled_chamfer(surface, gt_cloud, samples, seed, 0),
        movable: sampled_chamfer(
            &split(surface, pred_movable, true),
            &split(gt_cloud, gt_movable, true),
            samples,
            seed,
            1,
        ),
        fixed: sampled_chamfer(
            &split(surface, pred_movable, false),
            &split(gt_cloud, gt_movable, false),
            samples,
            seed,
            2,
        ),
    }
}

fn iou_counts(inter: usize, union: usize) -> f64 {
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean per-frame IoU of the maps binarized at 0.5.
///
/// # Panics
/// When frame counts or grids differ.
pub fn miou(pred: &[ImageMap], gt: &[ImageMap]) -> f64 {
    assert_eq!(pred.len(), gt.len(), "frame count");
    if pred.is_empty() {
        return 1.0;
    }
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            assert_eq!((p.width, p.height), (g.width, g.height), "grid");
            let (mut inter, mut union) = (0, 0);
            for (a, b) in p.data.iter().zip(&g.data) {
                let (a, b) = (*a >= 0.5, *b >= 0.5);
                inter += usize::from(a && b);
                union += usize::from(a || b);
            }
            iou_counts(inter, union)
        })
        .sum();
    sum / pred.len() as f64
}

/// IoU of two movable-point flag vectors; 1 when both are empty.
pub fn partition_iou(pred: &[bool], gt: &[bool]) -> f64 {
    assert_eq!(pred.len(), gt.len(), "point count");
    let inter = pred.iter().zip(gt).filter(|(a, b)| **a && **b).count();
    let union = pred.iter().zip(gt).filter(|(a, b)| **a || **b).count();
    iou_counts(inter, union)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraMetrics {
    /// Mean geodesic distance, radians.
    pub rotation: f64,
    /// Mean translation distance, meters.
    pub translation: f64,
    pub max_rotation: f64,
    pub max_translation: f64,
}

/// Both trajectories must be world-from-camera relative to frame 0.
///
/// # Panics
/// When the lengths differ.
pub fn camera_metrics(pred: &[RigidTransform], gt: &[RigidTransform]) -> CameraMetrics {
    assert_eq!(pred.len(), gt.len(), "trajectory length");
    let mut m = CameraMetrics {
        rotation: 0.0,
        translation: 0.0,
        max_rotation: 0.0,
        max_translation: 0.0,
    };
    for (a, b) in pred.iter().zip(gt) {
        let (r, t) = pose_distance(a, b);
        m.rotation += r;
        m.translation += t;
        m.max_rotation = m.max_rotation.max(r);
        m.max_translation = m.max_translation.max(t);
    }
    if !pred.is_empty() {
        m.rotation /= pred.len() as f64;
        m.translation /= pred.len() as f64;
    }
    m
}

/// Population mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Evaluation of one pipeline run on one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub scene: String,
    /// Stage and message of the error that stopped the run.
    pub failure: Option<String>,
    pub coarse: JointMetrics,
    pub refined: JointMetrics,
    pub coarse_camera: Option<CameraMetrics>,
    pub refined_camera: Option<CameraMetrics>,
    pub geometry: GeometryMetrics,
    pub miou: Option<f64>,
    pub partition_iou: Option<f64>,
}

impl SceneReport {
    /// Named scalar values aggregated across scenes. Missing values are
    /// skipped.
    pub fn scalars(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("coarse_axis_error", Some(self.coarse.axis_error)),
            ("coarse_position_error", self.coarse.position_error),
            ("coarse_state_error", Some(self.coarse.state_error)),
            ("coarse_type_error", Some(f64::from(u8::from(self.coarse.type_error)))),
            ("refined_axis_error", Some(self.refined.axis_error)),
            ("refined_position_error", self.refined.position_error),
            ("refined_state_error", Some(self.refined.state_error)),
            ("refined_type_error", Some(f64::from(u8::from(self.refined.type_error)))),
            ("coarse_camera_rotation", self.coarse_camera.map(|c| c.rotation)),
            ("coarse_camera_translation", self.coarse_camera.map(|c| c.translation)),
            ("refined_camera_rotation", self.refined_camera.map(|c| c.rotation)),
            ("refined_camera_translation", self.refined_camera.map(|c| c.translation)),
            ("cd_whole", Some(self.geometry.whole)),
            ("cd_movable", Some(self.geometry.movable)),
            ("cd_static", Some(self.geometry.fixed)),
            ("miou", self.miou),
            ("partition_iou", self.partition_iou),
            ("failure", Some(f64::from(u8::from(self.failure.is_some())))),
        ]
    }
}

/// All scenes of one pipeline seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub conventions: String,
    pub seed: u64,
    pub scenes: Vec<SceneReport>,
    /// Mean and standard deviation across scenes.
    pub aggregate: BTreeMap<String, MeanStd>,
}

impl RunReport {
    pub fn new(seed: u64, scenes: Vec<SceneReport>) -> Self {
        let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for s in &scenes {
            for (name, v) in s.scalars() {
                if let Some(v) = v {
                    columns.entry(name.to_string()).or_default().push(v);
                }
            }
        }
        Self {
            schema_version: crate::io::SCHEMA_VERSION,
            conventions: CONVENTIONS.to_string(),
            seed,
            aggregate: columns.into_iter().map(|(k, v)| (k, MeanStd::of(&v))).collect(),
            scenes,
        }
    }
}

/// Runs over several pipeline seeds, summarized by the mean and standard
/// deviation across seeds of each per-seed mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub schema_version: u32,
    pub conventions: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunReport>,
    pub cross_seed: BTreeMap<String, MeanStd>,
}

impl VarianceReport {
    pub fn new(runs: Vec<RunReport>) -> Self {
        let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &runs {
            for (k, v) in &r.aggregate {
                columns.entry(k.clone()).or_default().push(v.mean);
            }
        }
        Self {
            schema_version: crate::io::SCHEMA_VERSION,
            conventions: CONVENTIONS.to_string(),
            seeds: runs.iter().map(|r| r.seed).collect(),
            cross_seed: columns.into_iter().map(|(k, v)| (k, MeanStd::of(&v))).collect(),
            runs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("variance harness needs at least one seed")]
    NoSeeds,
    #[error("scene {scene}: {source}")]
    Synth {
        scene: String,
        #[source]
        source: crate::synth::SynthError,
    },
}

/// Generates every scene once and runs the pipeline on it with each seed.
/// Scenes run in parallel; rows keep the input order.
pub fn variance_harness(
    scenes: &[(String, crate::synth::SceneSpec)],
    seeds: &[u64],
    config: &crate::config::Config,
) -> Result<VarianceReport, EvalError> {
    use rayon::prelude::*;
    if seeds.is_empty() {
        return Err(EvalError::NoSeeds);
    }
    let rows: Vec<Vec<SceneReport>> = scenes
        .par_iter()
        .map(|(name, spec)| {
            let (obs, gt) = crate::synth::generate_scene(spec).map_err(|source| EvalError::Synth {
                scene: name.clone(),
                source,
            })?;
            Ok(seeds
                .iter()
                .map(|&seed| {
                    crate::io::run_pipeline(name, &obs, Some(&gt), config, seed)
                        .report
                        .expect("ground truth given")
                })
                .collect())
        })
        .collect::<Result<_, EvalError>>()?;
    let runs = seeds
        .iter()
        .enumerate()
        .map(|(k, &seed)| RunReport::new(seed, rows.iter().map(|r| r[k].clone()).collect()))
        .collect();
    Ok(VarianceReport::new(runs))
}
