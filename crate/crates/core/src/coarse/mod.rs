//! Coarse estimate: camera trajectory from static matches, per-pair joint
//! fits for both hypotheses from dynamic matches, then a vote and averages.

mod ransac;

pub use ransac::{estimate_joint_pair, PairFit};

use crate::config::CoarseConfig;
use crate::geometry::{fit_rigid_transform, so3, GeometryError, JointModel, JointType, RigidTransform, Vec3};
use crate::rng::{self, domain};
use crate::scene::{Correspondence, Observation};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Frames kept by the coarse stage when the video is long.
pub const TARGET_FRAMES: usize = 20;
const SUBSAMPLE_ABOVE: usize = 22;
const ORTHONORMALIZE_EVERY: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoarseError {
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("fewer than the required static matches between selected frame {0} and its predecessor")]
    InsufficientStaticMatches(usize),
    #[error("degenerate {0} motion")]
    DegenerateMotion(JointType),
    #[error("no frame pair produced a joint estimate")]
    NoValidPairs,
    #[error("correspondence between frames {frame_a} and {frame_b} indexes a missing point")]
    InvalidCorrespondence { frame_a: usize, frame_b: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Uniformly spaced frame indices: every frame for short videos, otherwise
/// 20 indices from 0 to `n - 1`.
pub fn subsample_frames(n: usize) -> Vec<usize> {
    if n <= SUBSAMPLE_ABOVE {
        return (0..n).collect();
    }
    let last = (n - 1) as f64;
    let k = (TARGET_FRAMES - 1) as f64;
    (0..TARGET_FRAMES)
        .map(|i| (i as f64 * last / k).round() as usize)
        .collect()
}

/// Which side of the moving maps a match lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Static,
    Dynamic,
    /// Endpoints disagree; used by neither camera nor joint estimation.
    Mixed,
}

/// Region of a match from the map values at its two endpoints.
pub fn label_region(value_a: f32, value_b: f32, threshold: f32) -> Region {
    match (value_a >= threshold, value_b >= threshold) {
        (true, true) => Region::Dynamic,
        (false, false) => Region::Static,
        _ => Region::Mixed,
    }
}

/// One joint hypothesis after voting and averaging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisEstimate {
    pub joint: JointModel,
    /// Pairs that voted for this hypothesis.
    pub votes: usize,
    /// Mean truncated residual over pairs with a fit.
    pub mean_residual: f64,
    /// One state per frame, `states[0] = 0`.
    pub states: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostics {
    pub frame_a: usize,
    pub frame_b: usize,
    pub static_matches: usize,
    pub dynamic_matches: usize,
    pub revolute: Option<PairFit>,
    pub prismatic: Option<PairFit>,
    pub vote: Option<JointType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseEstimate {
    pub selected_frames: Vec<usize>,
    /// World-from-camera for every frame; frame 0 is the identity.
    pub cameras: Vec<RigidTransform>,
    pub joint_type: JointType,
    /// `None` when no pair gave a non-degenerate fit for the hypothesis.
    pub revolute: Option<HypothesisEstimate>,
    pub prismatic: Option<HypothesisEstimate>,
    pub pairs: Vec<PairDiagnostics>,
}

impl CoarseEstimate {
    pub fn hypothesis(&self, joint_type: JointType) -> Option<&HypothesisEstimate> {
        match joint_type {
            JointType::Revolute => self.revolute.as_ref(),
            JointType::Prismatic => self.prismatic.as_ref(),
        }
    }

    /// Joint of the voted hypothesis.
    pub fn voted(&self) -> &HypothesisEstimate {
        self.hypothesis(self.joint_type)
            .expect("voted hypothesis always has an estimate")
    }
}

/// Runs the whole coarse stage. RANSAC streams are keyed by `seed`.
pub fn estimate_coarse(obs: &Observation, config: &CoarseConfig, seed: u64) -> Result<CoarseEstimate, CoarseError> {
    let n = obs.frame_count();
    if n < 2 {
        return Err(CoarseError::TooFewFrames(n));
    }
    let selected = subsample_frames(n);
    let labeled = label_all(obs, config)?;
    let selected_cams = chain_selected(obs, &selected, &labeled, config, seed)?;
    let cameras = expand_cameras(&selected, &selected_cams, n);

    let mut pair_keys = Vec::new();
    for (i, &a) in selected.iter().enumerate() {
        for (j, &b) in selected.iter().enumerate().skip(i + 1).take(config.pair_window) {
            pair_keys.push((i, j, a, b));
        }
    }
    let pairs: Vec<(usize, usize, PairDiagnostics)> = pair_keys
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j, a, b))| {
            let diag = fit_pair(obs, &labeled, &cameras, a, b, config, seed, k as u64);
            (i, j, diag)
        })
        .collect();
    let (revolute, prismatic, joint_type) = vote_and_average(&pairs, selected.len())?;
    let expand = |h: Option<HypothesisEstimate>| {
        h.map(|mut h| {
            h.states = expand_states(&selected, &h.states, n);
            h
        })
    };
    let (revolute, prismatic) = (expand(revolute), expand(prismatic));
    Ok(CoarseEstimate {
        selected_frames: selected,
        cameras,
        joint_type,
        revolute,
        prismatic,
        pairs: pairs.into_iter().map(|(_, _, d)| d).collect(),
    })
}

/// Confident matches of one correspondence set with their region labels.
struct LabeledSet {
    frame_a: usize,
    frame_b: usize,
    matches: Vec<(Correspondence, Region)>,
}

fn label_all(obs: &Observation, config: &CoarseConfig) -> Result<Vec<LabeledSet>, CoarseError> {
    obs.correspondences
        .iter()
        .map(|set| {
            if set.frame_a >= obs.frame_count() || set.frame_b >= obs.frame_count() {
                return Err(CoarseError::InvalidCorrespondence {
                    frame_a: set.frame_a,
                    frame_b: set.frame_b,
                });
            }
            let (fa, fb) = (&obs.frames[set.frame_a], &obs.frames[set.frame_b]);
            let mut matches = Vec::new();
            for m in &set.matches {
                if m.a as usize >= fa.len() || m.b as usize >= fb.len() {
                    return Err(CoarseError::InvalidCorrespondence {
                        frame_a: set.frame_a,
                        frame_b: set.frame_b,
                    });
                }
                if m.confidence <= config.confidence_threshold {
                    continue;
                }
                let va = obs.moving_maps[set.frame_a].get(fa.pixels[m.a as usize]);
                let vb = obs.moving_maps[set.frame_b].get(fb.pixels[m.b as usize]);
                matches.push((*m, label_region(va, vb, config.dynamic_threshold)));
            }
            // canonical order keeps RANSAC independent of the file order
            matches.sort_by(|x, y| (x.0.a, x.0.b).cmp(&(y.0.a, y.0.b)).then(x.0.confidence.total_cmp(&y.0.confidence)));
            Ok(LabeledSet {
                frame_a: set.frame_a,
                frame_b: set.frame_b,
                matches,
            })
        })
        .collect()
}

fn find_set(sets: &[LabeledSet], a: usize, b: usize) -> Option<&LabeledSet> {
    sets.iter().find(|s| s.frame_a == a && s.frame_b == b)
}

/// Camera trajectory alone: world-from-camera for every frame.
pub fn estimate_camera_poses(obs: &Observation, config: &CoarseConfig, seed: u64) -> Result<Vec<RigidTransform>, CoarseError> {
    let n = obs.frame_count();
    if n < 2 {
        return Err(CoarseError::TooFewFrames(n));
    }
    let selected = subsample_frames(n);
    let labeled = label_all(obs, config)?;
    let poses = chain_selected(obs, &selected, &labeled, config, seed)?;
    Ok(expand_cameras(&selected, &poses, n))
}

/// Chains relative poses fitted on static matches between consecutive
/// selected frames. Returns one world-from-camera pose per selected frame.
fn chain_selected(
    obs: &Observation,
    selected: &[usize],
    labeled: &[LabeledSet],
    config: &CoarseConfig,
    seed: u64,
) -> Result<Vec<RigidTransform>, CoarseError> {
    let mut poses = vec![RigidTransform::identity()];
    for (k, w) in selected.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let (mut src, mut dst) = (Vec::new(), Vec::new());
        if let Some(set) = find_set(labeled, a, b) {
            for (m, region) in &set.matches {
                if config.use_region_labels && *region != Region::Static {
                    continue;
                }
                src.push(obs.frames[b].points[m.b as usize]);
                dst.push(obs.frames[a].points[m.a as usize]);
            }
        }
        if src.len() < config.min_static_matches.max(3) {
            return Err(CoarseError::InsufficientStaticMatches(b));
        }
        let mut rng = rng::stream(seed, domain::CAMERA_RANSAC, k as u64);
        let rel = robust_rigid(&src, &dst, config, &mut rng).ok_or(CoarseError::InsufficientStaticMatches(b))?;
        let mut pose = poses[k].compose(&rel);
        if (k + 1) % ORTHONORMALIZE_EVERY == 0 {
            pose = pose.orthonormalized();
        }
        poses.push(pose);
    }
    Ok(poses)
}

/// Rigid fit of `src -> dst` by three-point RANSAC, refit on the inliers.
fn robust_rigid(src: &[Vec3], dst: &[Vec3], config: &CoarseConfig, rng: &mut ChaCha8Rng) -> Option<RigidTransform> {
    let radius = config.camera_inlier_radius;
    let score = |t: &RigidTransform| {
        src.iter()
            .zip(dst)
            .map(|(s, d)| (t.apply(s) - d).norm().min(radius))
            .sum::<f64>()
    };
    let mut best: Option<(f64, RigidTransform)> = None;
    for _ in 0..config.camera_ransac_iterations {
        let picks = sample(rng, src.len(), 3);
        let s: Vec<Vec3> = picks.iter().map(|i| src[i]).collect();
        let d: Vec<Vec3> = picks.iter().map(|i| dst[i]).collect();
        let Ok(t) = fit_rigid_transform(&s, &d, &[1.0; 3]) else {
            continue;
        };
        let cost = score(&t);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, t));
        }
    }
    let (_, t) = best?;
    let weights: Vec<f64> = src
        .iter()
        .zip(dst)
        .map(|(s, d)| if (t.apply(s) - d).norm() < radius { 1.0 } else { 0.0 })
        .collect();
    fit_rigid_transform(src, dst, &weights).ok()
}

/// Poses for every frame, interpolating between selected frames.
fn expand_cameras(selected: &[usize], poses: &[RigidTransform], n: usize) -> Vec<RigidTransform> {
    let mut out = vec![RigidTransform::identity(); n];
    for (w, p) in selected.windows(2).zip(poses.windows(2)) {
        let (a, b) = (w[0], w[1]);
        let delta = so3::log(&(p[0].rotation.transpose() * p[1].rotation));
        for (t, slot) in out.iter_mut().enumerate().take(b + 1).skip(a) {
            let alpha = (t - a) as f64 / (b - a) as f64;
            *slot = RigidTransform::new(
                p[0].rotation * so3::exp(&(delta * alpha)),
                p[0].translation.lerp(&p[1].translation, alpha),
            );
        }
    }
    for (&t, p) in selected.iter().zip(poses) {
        out[t] = *p;
    }
    out
}

fn expand_states(selected: &[usize], states: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (w, s) in selected.windows(2).zip(states.windows(2)) {
        let (a, b) = (w[0], w[1]);
        for (t, slot) in out.iter_mut().enumerate().take(b + 1).skip(a) {
            let alpha = (t - a) as f64 / (b - a) as f64;
            *slot = s[0] + alpha * (s[1] - s[0]);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn fit_pair(
    obs: &Observation,
    labeled: &[LabeledSet],
    cameras: &[RigidTransform],
    a: usize,
    b: usize,
    config: &CoarseConfig,
    seed: u64,
    key: u64,
) -> PairDiagnostics {
    let mut diag = PairDiagnostics {
        frame_a: a,
        frame_b: b,
        static_matches: 0,
        dynamic_matches: 0,
        revolute: None,
        prismatic: None,
        vote: None,
    };
    let Some(set) = find_set(labeled, a, b) else {
        return diag;
    };
    let (mut src, mut dst) = (Vec::new(), Vec::new());
    for (m, region) in &set.matches {
        match region {
            Region::Static => diag.static_matches += 1,
            Region::Dynamic => {
                src.push(cameras[a].apply(&obs.frames[a].points[m.a as usize]));
                dst.push(cameras[b].apply(&obs.frames[b].points[m.b as usize]));
            }
            Region::Mixed => {}
        }
    }
    diag.dynamic_matches = src.len();
    if set.matches.len() < config.min_pair_matches {
        return diag;
    }
    for (h, hyp) in JointType::BOTH.into_iter().enumerate() {
        let mut rng = rng::stream(seed, domain::RANSAC, key * 2 + h as u64);
        let fit = estimate_joint_pair(&src, &dst, hyp, config, &mut rng).ok();
        match hyp {
            JointType::Revolute => diag.revolute = fit,
            JointType::Prismatic => diag.prismatic = fit,
        }
    }
    diag.vote = match (&diag.revolute, &diag.prismatic) {
        (Some(r), Some(p)) => Some(if r.residual <= p.residual {
            JointType::Revolute
        } else {
            JointType::Prismatic
        }),
        (Some(_), None) => Some(JointType::Revolute),
        (None, Some(_)) => Some(JointType::Prismatic),
        (None, None) => None,
    };
    diag
}

/// Majority vote over pair results and per-hypothesis averages. `pairs`
/// holds `(i, j, diagnostics)` with selected-frame positions `i < j`;
/// states are returned per selected frame.
pub fn vote_and_average(
    pairs: &[(usize, usize, PairDiagnostics)],
    n_selected: usize,
) -> Result<(Option<HypothesisEstimate>, Option<HypothesisEstimate>, JointType), CoarseError> {
    let mut estimates = [None, None];
    for (slot, hyp) in estimates.iter_mut().zip(JointType::BOTH) {
        let fits: Vec<(usize, usize, &PairFit)> = pairs
            .iter()
            .filter_map(|(i, j, d)| {
                let f = match hyp {
                    JointType::Revolute => d.revolute.as_ref(),
                    JointType::Prismatic => d.prismatic.as_ref(),
                };
                f.map(|f| (*i, *j, f))
            })
            .collect();
        let Some(first) = fits.first() else {
            continue;
        };
        let reference = first.2.joint.axis;
        let sign = |f: &PairFit| if f.joint.axis.dot(&reference) < 0.0 { -1.0 } else { 1.0 };
        let axis_sum: Vec3 = fits.iter().map(|(_, _, f)| f.joint.axis * sign(f)).sum();
        let axis = axis_sum.normalize();
        let joint = match hyp {
            JointType::Revolute => {
                let pivot = fits.iter().map(|(_, _, f)| f.joint.pivot).sum::<Vec3>() / fits.len() as f64;
                JointModel::revolute(axis, pivot)
            }
            JointType::Prismatic => JointModel::prismatic(axis),
        };
        let mut states = vec![0.0; n_selected];
        for k in 1..n_selected {
            let delta = fits
                .iter()
                .find(|(i, j, _)| *i == k - 1 && *j == k)
                .map(|(_, _, f)| f.delta * sign(f))
                .unwrap_or(0.0);
            states[k] = states[k - 1] + delta;
        }
        let votes = pairs.iter().filter(|(_, _, d)| d.vote == Some(hyp)).count();
        let mean_residual = fits.iter().map(|(_, _, f)| f.residual).sum::<f64>() / fits.len() as f64;
        *slot = Some(HypothesisEstimate {
            joint,
            votes,
            mean_residual,
            states,
        });
    }
    let [revolute, prismatic] = estimates;
    let joint_type = match (&revolute, &prismatic) {
        (None, None) => return Err(CoarseError::NoValidPairs),
        (Some(_), None) => JointType::Revolute,
        (None, Some(_)) => JointType::Prismatic,
        (Some(r), Some(p)) => {
            if r.votes == 0 && p.votes == 0 {
                return Err(CoarseError::NoValidPairs);
            }
            match r.votes.cmp(&p.votes) {
                std::cmp::Ordering::Greater => JointType::Revolute,
                std::cmp::Ordering::Less => JointType::Prismatic,
                std::cmp::Ordering::Equal => {
                    if r.mean_residual <= p.mean_residual {
                        JointType::Revolute
                    } else {
                        JointType::Prismatic
                    }
                }
            }
        }
    };
    Ok((revolute, prismatic, joint_type))
}
