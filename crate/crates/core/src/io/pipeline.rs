//! Coarse, refine, select, segment and evaluate on one dataset.

use crate::coarse::{estimate_coarse, CoarseEstimate};
use crate::config::Config;
use crate::eval::{
    camera_metrics, geometry_metrics, joint_metrics, miou, partition_iou, CameraMetrics, GeometryMetrics, JointMetrics,
    SceneReport, FAILURE_VALUE,
};
use crate::geometry::{JointModel, JointType, RigidTransform};
use crate::refine::{moving_maps, refine_both, select_joint_type, split_tracks, LossTerms, MovingVector, RefineResult};
use crate::scene::{GroundTruth, ImageMap, Observation};
use crate::segment::{classify_newly_observed, extract_movable_part, SurfacePartition};
use serde::{Deserialize, Serialize};

/// Error that stopped a run, kept instead of propagated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub message: String,
}

impl Failure {
    fn new(stage: &str, e: impl std::fmt::Display) -> Self {
        Self {
            stage: stage.into(),
            message: e.to_string(),
        }
    }
}

/// One refined hypothesis as written to `refine.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinedHypothesis {
    pub joint: JointModel,
    pub states: Vec<f64>,
    pub cameras: Vec<RigidTransform>,
    pub moving: MovingVector,
    pub best_iteration: usize,
    pub loss: LossTerms,
}

impl RefinedHypothesis {
    pub fn from_result(r: &RefineResult) -> Self {
        Self {
            joint: r.state.joint(),
            states: r.state.states.clone(),
            cameras: r.state.cameras(),
            moving: r.state.moving.clone(),
            best_iteration: r.best_iteration,
            loss: r.loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineArtifact {
    pub revolute: Option<RefinedHypothesis>,
    pub prismatic: Option<RefinedHypothesis>,
    pub selected: JointType,
}

impl RefineArtifact {
    pub fn selected(&self) -> &RefinedHypothesis {
        match self.selected {
            JointType::Revolute => self.revolute.as_ref(),
            JointType::Prismatic => self.prismatic.as_ref(),
        }
        .expect("selected hypothesis is present")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionArtifact {
    pub joint_type: JointType,
    pub newly_observed: Vec<u32>,
    pub partition: SurfacePartition,
}

/// Everything a run produced. Stages after a failure are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub coarse: Option<CoarseEstimate>,
    /// Full optimizer results, revolute then prismatic.
    pub refine_results: Option<[Option<RefineResult>; 2]>,
    pub refine: Option<RefineArtifact>,
    pub partition: Option<PartitionArtifact>,
    pub failure: Option<Failure>,
    /// Present when ground truth was supplied.
    pub report: Option<SceneReport>,
}

/// Refinement of both hypotheses and the final type choice.
pub fn run_refine(
    obs: &Observation,
    coarse: &CoarseEstimate,
    config: &Config,
    seed: u64,
) -> Result<([Option<RefineResult>; 2], RefineArtifact), Failure> {
    let results = refine_both(obs, coarse, &config.refine, seed).map_err(|e| Failure::new("refine", e))?;
    let selected = select_joint_type(results[0].as_ref(), results[1].as_ref(), &obs.surface.points, &config.select)
        .ok_or_else(|| Failure::new("select", "no refined hypothesis"))?;
    let artifact = RefineArtifact {
        revolute: results[0].as_ref().map(RefinedHypothesis::from_result),
        prismatic: results[1].as_ref().map(RefinedHypothesis::from_result),
        selected,
    };
    Ok((results, artifact))
}

/// Moving maps rebuilt from a refined moving vector. Newly observed
/// segments carry no probability and contribute nothing.
pub fn predicted_moving_maps(obs: &Observation, moving: &MovingVector) -> Vec<ImageMap> {
    let (tracked, _) = split_tracks(&obs.segments);
    moving_maps(moving, &tracked, obs.width, obs.height, obs.frame_count())
}

pub fn run_segment(obs: &Observation, refine: &RefineArtifact, config: &Config) -> Result<PartitionArtifact, Failure> {
    let newly_observed = classify_newly_observed(&obs.segments).map_err(|e| Failure::new("segment", e))?;
    let map0 = predicted_moving_maps(obs, &refine.selected().moving).swap_remove(0);
    let frame0 = obs.frames.first().ok_or_else(|| Failure::new("segment", "no frames"))?;
    let partition = extract_movable_part(&obs.surface.points, &map0, frame0, obs.width, obs.height, &config.segment)
        .map_err(|e| Failure::new("segment", e))?;
    Ok(PartitionArtifact {
        joint_type: refine.selected,
        newly_observed,
        partition,
    })
}

fn failed_camera() -> CameraMetrics {
    CameraMetrics {
        rotation: FAILURE_VALUE,
        translation: FAILURE_VALUE,
        max_rotation: FAILURE_VALUE,
        max_translation: FAILURE_VALUE,
    }
}

/// Scores whatever stages completed; missing stages take failure values.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    name: &str,
    obs: &Observation,
    gt: &GroundTruth,
    coarse: Option<&CoarseEstimate>,
    refine: Option<&RefineArtifact>,
    partition: Option<&PartitionArtifact>,
    failure: Option<&Failure>,
    config: &Config,
    seed: u64,
) -> SceneReport {
    let gt_states = &gt.states.states;
    let coarse_joint: Option<JointMetrics> = coarse.map(|c| {
        let h = c.voted();
        joint_metrics(Some((&h.joint, &h.states)), &gt.joint, gt_states)
    });
    let refined = refine.map(|r| {
        let h = r.selected();
        joint_metrics(Some((&h.joint, &h.states)), &gt.joint, gt_states)
    });
    let failed = JointMetrics::failed(gt.joint.joint_type);
    let gt_movable = gt.surface_is_movable();
    let object_movable: Vec<bool> = match &gt.object_cloud.labels {
        Some(l) => l.iter().map(|l| *l == gt.movable_part).collect(),
        None => vec![false; gt.object_cloud.len()],
    };
    let (geometry, partition_score) = match partition {
        Some(p) if p.partition.len() == obs.surface.len() => {
            let flags = p.partition.is_movable();
            (
                geometry_metrics(
                    &obs.surface.points,
                    &flags,
                    &gt.object_cloud.points,
                    &object_movable,
                    config.eval.geometry_samples,
                    seed,
                ),
                (flags.len() == gt_movable.len()).then(|| partition_iou(&flags, &gt_movable)),
            )
        }
        _ => (GeometryMetrics::failed(), Some(0.0)),
    };
    let moving_iou = match refine {
        Some(r) if gt.moving_maps.len() == obs.frame_count() => Some(miou(&predicted_moving_maps(obs, &r.selected().moving), &gt.moving_maps)),
        _ => Some(0.0),
    };
    SceneReport {
        scene: name.to_string(),
        failure: failure.map(|f| format!("{}: {}", f.stage, f.message)),
        coarse: coarse_joint.unwrap_or(failed),
        refined: refined.unwrap_or(failed),
        coarse_camera: Some(coarse.map_or_else(failed_camera, |c| camera_metrics(&c.cameras, &gt.cameras))),
        refined_camera: Some(refine.map_or_else(failed_camera, |r| camera_metrics(&r.selected().cameras, &gt.cameras))),
        geometry,
        miou: moving_iou,
        partition_iou: partition_score,
    }
}

/// Runs every stage, turning the first error into a [`Failure`]. Nothing
/// here panics on bad input data.
pub fn run_pipeline(name: &str, obs: &Observation, gt: Option<&GroundTruth>, config: &Config, seed: u64) -> PipelineOutput {
    let mut out = PipelineOutput {
        coarse: None,
        refine_results: None,
        refine: None,
        partition: None,
        failure: None,
        report: None,
    };
    let stages = (|| -> Result<(), Failure> {
        let coarse = estimate_coarse(obs, &config.coarse, seed).map_err(|e| Failure::new("coarse", e))?;
        out.coarse = Some(coarse);
        let (results, refine) = run_refine(obs, out.coarse.as_ref().unwrap(), config, seed)?;
        out.refine_results = Some(results);
        out.refine = Some(refine);
        out.partition = Some(run_segment(obs, out.refine.as_ref().unwrap(), config)?);
        Ok(())
    })();
    out.failure = stages.err();
    if let Some(gt) = gt {
        out.report = Some(evaluate(
            name,
            obs,
            gt,
            out.coarse.as_ref(),
            out.refine.as_ref(),
            out.partition.as_ref(),
            out.failure.as_ref(),
            config,
            seed,
        ));
    }
    out
}
