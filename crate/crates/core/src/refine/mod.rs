//! Gradient refinement of cameras, joint, states and the segment moving
//! vector against the surface cloud, run once per joint hypothesis.

mod loss;

pub use loss::{moving_maps, Associations, FrameDistances, LossTerms, NeighborHints, RefineProblem, Subsample};

use crate::coarse::CoarseEstimate;
use crate::config::{RefineConfig, SelectConfig};
use crate::geometry::{so3, vec3_serde, JointModel, JointStateSequence, JointType, RigidTransform, Vec3};
use crate::rng::{self, domain};
use crate::scene::{ImageMap, Observation, SegmentTrack};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RefineError {
    #[error("segment {0} has no pixels in any frame")]
    EmptySegment(u32),
    #[error("no segment is present in frame 0")]
    NoSegments,
    #[error("loss is not finite at iteration {0}")]
    NonFiniteLoss(usize),
    #[error("no {0} estimate to refine")]
    MissingHypothesis(JointType),
    #[error("coarse estimate covers {coarse} frames, observation has {observed}")]
    FrameMismatch { coarse: usize, observed: usize },
}

/// Per-segment moving probabilities stored as logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingVector {
    pub segment_ids: Vec<u32>,
    pub logits: Vec<f64>,
}

impl MovingVector {
    pub fn probabilities(&self) -> Vec<f64> {
        self.logits.iter().map(|&l| sigmoid(l)).collect()
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Segments present in frame 0, in track order, and the newly observed rest.
pub fn split_tracks(tracks: &[SegmentTrack]) -> (Vec<&SegmentTrack>, Vec<&SegmentTrack>) {
    tracks.iter().partition(|s| s.present_in_frame0())
}

/// Share of each frame-0 segment's pixels, over all frames, that lies in
/// the moving region of the coarse maps, clamped and stored as logits.
pub fn init_moving_vector(
    tracks: &[SegmentTrack],
    maps: &[ImageMap],
    config: &RefineConfig,
) -> Result<MovingVector, RefineError> {
    if let Some(s) = tracks.iter().find(|s| s.total_pixels() == 0) {
        return Err(RefineError::EmptySegment(s.id));
    }
    let (tracked, _) = split_tracks(tracks);
    let [lo, hi] = config.init_clamp;
    let mut ids = Vec::new();
    let mut logits = Vec::new();
    for s in tracked {
        let mut inside = 0usize;
        let mut total = 0usize;
        for (mask, map) in s.masks.iter().zip(maps) {
            for (m, v) in mask.data.iter().zip(&map.data) {
                if *m > 0.0 {
                    total += 1;
                    if *v >= config.init_threshold {
                        inside += 1;
                    }
                }
            }
        }
        let v = (inside as f64 / total as f64).clamp(lo, hi);
        ids.push(s.id);
        logits.push(logit(v));
    }
    Ok(MovingVector {
        segment_ids: ids,
        logits,
    })
}

/// Local increment `(omega, tau)` composed onto a base camera pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CameraDelta(pub [f64; 6]);

impl CameraDelta {
    pub fn omega(&self) -> Vec3 {
        Vec3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn tau(&self) -> Vec3 {
        Vec3::new(self.0[3], self.0[4], self.0[5])
    }
}

/// Free variables of one hypothesis. Camera 0 and `states[0]` are frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineState {
    pub joint_type: JointType,
    pub base_cameras: Vec<RigidTransform>,
    pub camera_deltas: Vec<CameraDelta>,
    /// Unnormalized axis; the joint uses its direction.
    #[serde(with = "vec3_serde")]
    pub axis: Vec3,
    /// Ignored for prismatic joints.
    #[serde(with = "vec3_serde")]
    pub pivot: Vec3,
    pub states: Vec<f64>,
    pub moving: MovingVector,
}

/// Offsets of each block in the flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    frames: usize,
    pub axis: usize,
    pub pivot: Option<usize>,
    states: usize,
    pub logits: usize,
    pub len: usize,
}

impl Layout {
    /// Start of camera `t >= 1`.
    pub fn camera(&self, t: usize) -> usize {
        debug_assert!(t >= 1 && t < self.frames);
        6 * (t - 1)
    }

    pub fn state(&self, t: usize) -> usize {
        self.states + t - 1
    }
}

impl RefineState {
    pub fn new(joint: JointModel, cameras: Vec<RigidTransform>, states: Vec<f64>, moving: MovingVector) -> Self {
        assert_eq!(cameras.len(), states.len());
        Self {
            joint_type: joint.joint_type,
            camera_deltas: vec![CameraDelta::default(); cameras.len()],
            base_cameras: cameras,
            axis: joint.axis,
            pivot: joint.pivot,
            states,
            moving,
        }
    }

    /// Starting point for `hypothesis` from the coarse estimate.
    pub fn from_coarse(coarse: &CoarseEstimate, hypothesis: JointType, moving: MovingVector) -> Result<Self, RefineError> {
        let h = coarse
            .hypothesis(hypothesis)
            .ok_or(RefineError::MissingHypothesis(hypothesis))?;
        let mut states = h.states.clone();
        states[0] = 0.0;
        Ok(Self::new(h.joint, coarse.cameras.clone(), states, moving))
    }

    pub fn frame_count(&self) -> usize {
        self.states.len()
    }

    pub fn camera(&self, t: usize) -> RigidTransform {
        let base = &self.base_cameras[t];
        let d = &self.camera_deltas[t];
        RigidTransform::new(base.rotation * so3::exp(&d.omega()), base.translation + d.tau())
    }

    pub fn cameras(&self) -> Vec<RigidTransform> {
        (0..self.frame_count()).map(|t| self.camera(t)).collect()
    }

    pub fn joint(&self) -> JointModel {
        match self.joint_type {
            JointType::Revolute => JointModel::revolute(self.axis, self.pivot),
            JointType::Prismatic => JointModel::prismatic(self.axis),
        }
    }

    pub fn state_sequence(&self) -> JointStateSequence {
        JointStateSequence::new(self.states.clone())
    }

    pub(crate) fn layout(&self) -> Layout {
        let frames = self.frame_count();
        let axis = 6 * (frames - 1);
        let pivot = (self.joint_type == JointType::Revolute).then_some(axis + 3);
        let states = axis + if pivot.is_some() { 6 } else { 3 };
        let logits = states + frames - 1;
        Layout {
            frames,
            axis,
            pivot,
            states,
            logits,
            len: logits + self.moving.len(),
        }
    }

    /// Free parameters as one flat vector.
    pub fn to_params(&self) -> Vec<f64> {
        let l = self.layout();
        let mut p = vec![0.0; l.len];
        for t in 1..self.frame_count() {
            p[l.camera(t)..l.camera(t) + 6].copy_from_slice(&self.camera_deltas[t].0);
            p[l.state(t)] = self.states[t];
        }
        p[l.axis..l.axis + 3].copy_from_slice(self.axis.as_slice());
        if let Some(o) = l.pivot {
            p[o..o + 3].copy_from_slice(self.pivot.as_slice());
        }
        p[l.logits..].copy_from_slice(&self.moving.logits);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let l = self.layout();
        assert_eq!(p.len(), l.len);
        for t in 1..self.frame_count() {
            self.camera_deltas[t].0.copy_from_slice(&p[l.camera(t)..l.camera(t) + 6]);
            self.states[t] = p[l.state(t)];
        }
        self.axis = Vec3::new(p[l.axis], p[l.axis + 1], p[l.axis + 2]);
        if let Some(o) = l.pivot {
            self.pivot = Vec3::new(p[o], p[o + 1], p[o + 2]);
        }
        self.moving.logits.copy_from_slice(&p[l.logits..]);
    }
}

/// One row of the optimization trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub terms: LossTerms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResult {
    /// Lowest-loss iterate.
    pub state: RefineState,
    pub best_iteration: usize,
    /// Full-data loss at `state`.
    pub loss: LossTerms,
    pub history: Vec<LossRecord>,
}

/// Seeded per-frame point subsets for one iteration.
pub fn draw_subsample(problem: &RefineProblem, fraction: f64, seed: u64, iteration: usize) -> Subsample {
    if fraction >= 1.0 {
        return None;
    }
    let n = problem.frame_count();
    Some(
        (0..n)
            .map(|t| {
                let count = problem.used_points(t);
                let k = ((count as f64 * fraction).round() as usize).clamp(count.min(1), count);
                let mut rng = rng::stream(seed, domain::SUBSAMPLE, (iteration * n + t) as u64);
                let mut idx: Vec<u32> = sample(&mut rng, count, k).into_iter().map(|i| i as u32).collect();
                idx.sort_unstable();
                idx
            })
            .collect(),
    )
}

/// Iterates re-scored on all points before picking the returned one.
const FINAL_CANDIDATES: usize = 8;

/// Adam on all free parameters. Nearest neighbors are re-associated on a
/// fresh subsample every iteration.
///
/// The returned state takes the final moving vector and the geometry
/// (cameras, joint, states) of the iterate with the lowest loss under that
/// moving vector thresholded at 0.5. Iterates are ranked on their own
/// subsample, then the best few are compared on all points.
pub fn optimize(
    problem: &RefineProblem,
    initial: RefineState,
    config: &RefineConfig,
    seed: u64,
) -> Result<RefineResult, RefineError> {
    let mut state = initial;
    let mut params = state.to_params();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut history = Vec::with_capacity(config.iterations);
    let mut trace: Vec<(Vec<f64>, FrameDistances)> = Vec::with_capacity(config.iterations);
    let mut hints = NeighborHints::new(problem);

    for it in 0..config.iterations {
        let sub = draw_subsample(problem, config.subsample_fraction, seed, it);
        let assoc = problem.associate_hinted(&state, &sub, &mut hints);
        let (terms, grad) = problem.loss_and_gradient(&state, &assoc);
        if !terms.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(RefineError::NonFiniteLoss(it));
        }
        history.push(LossRecord { iteration: it, terms });
        trace.push((params.clone(), problem.distances(&state, &assoc)));
        let step = (it + 1) as i32;
        let c1 = 1.0 - config.beta1.powi(step);
        let c2 = 1.0 - config.beta2.powi(step);
        for k in 0..params.len() {
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * grad[k];
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * grad[k] * grad[k];
            params[k] -= config.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + config.epsilon);
        }
        state.set_params(&params);
    }
    let logits = state.moving.logits.clone();
    // soft probabilities leak a little of each branch into the other, which
    // pulls the minimum away from the true geometry on wide motions
    let hard: Vec<f64> = logits.iter().map(|&l| if l >= 0.0 { f64::INFINITY } else { f64::NEG_INFINITY }).collect();
    let probs: Vec<f64> = hard.iter().map(|&l| if l > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut ranked: Vec<(f64, usize)> = trace
        .iter()
        .enumerate()
        .map(|(k, (_, d))| (problem.loss_from_distances(d, &probs), k))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best: Option<(LossTerms, usize, RefineState)> = None;
    for &(_, k) in ranked.iter().take(FINAL_CANDIDATES) {
        let mut candidate = state.clone();
        candidate.set_params(&trace[k].0);
        candidate.moving.logits.clone_from(&hard);
        let assoc = problem.associate_hinted(&candidate, &None, &mut hints);
        let loss = problem.loss_frozen(&candidate, &assoc);
        if !loss.total.is_finite() {
            return Err(RefineError::NonFiniteLoss(k));
        }
        if best.as_ref().is_none_or(|(l, i, _)| loss.total < l.total || (loss.total == l.total && k < *i)) {
            best = Some((loss, k, candidate));
        }
    }
    let (best_iteration, mut state) = match best {
        Some((_, k, s)) => (k, s),
        None => (0, state),
    };
    state.moving.logits = logits;
    let loss = problem.loss(&state, &None);
    Ok(RefineResult {
        state,
        best_iteration,
        loss,
        history,
    })
}

/// Both hypotheses refined from the coarse estimate. A hypothesis without
/// a coarse estimate is `None`.
pub fn refine_both(
    obs: &Observation,
    coarse: &CoarseEstimate,
    config: &RefineConfig,
    seed: u64,
) -> Result<[Option<RefineResult>; 2], RefineError> {
    if coarse.cameras.len() != obs.frame_count() {
        return Err(RefineError::FrameMismatch {
            coarse: coarse.cameras.len(),
            observed: obs.frame_count(),
        });
    }
    let moving = init_moving_vector(&obs.segments, &obs.moving_maps, config)?;
    if moving.is_empty() {
        return Err(RefineError::NoSegments);
    }
    let (tracked, newly) = split_tracks(&obs.segments);
    let problem = RefineProblem::new(obs, &tracked, &newly);
    let run = |hyp: JointType| -> Result<Option<RefineResult>, RefineError> {
        match RefineState::from_coarse(coarse, hyp, moving.clone()) {
            Ok(init) => optimize(&problem, init, config, seed).map(Some),
            Err(RefineError::MissingHypothesis(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let (r, p) = rayon::join(|| run(JointType::Revolute), || run(JointType::Prismatic));
    Ok([r?, p?])
}

/// Final joint choice: prismatic when the revolute axis line passes far
/// from the whole surface, otherwise the hypothesis with the lower loss.
pub fn select_joint_type(
    revolute: Option<&RefineResult>,
    prismatic: Option<&RefineResult>,
    surface: &[Vec3],
    config: &SelectConfig,
) -> Option<JointType> {
    match (revolute, prismatic) {
        (None, None) => None,
        (Some(_), None) => Some(JointType::Revolute),
        (None, Some(_)) => Some(JointType::Prismatic),
        (Some(r), Some(p)) => {
            let joint = r.state.joint();
            let nearest = surface
                .iter()
                .map(|q| joint.distance_to_axis_line(q))
                .fold(f64::INFINITY, f64::min);
            if nearest > config.prismatic_axis_distance || p.loss.total < r.loss.total {
                Some(JointType::Prismatic)
            } else {
                Some(JointType::Revolute)
            }
        }
    }
}
