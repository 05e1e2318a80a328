//! Masked Chamfer objective and its analytic gradient.

use super::{MovingVector, RefineState};
use crate::geometry::{so3, JointType, NearestNeighborIndex, Vec3};
use crate::scene::{ImageMap, Observation, SegmentTrack};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Distances below this get no gradient (the direction is undefined).
const MIN_DISTANCE: f64 = 1e-12;

/// Loss split into its static and dynamic parts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub static_term: f64,
    pub dynamic_term: f64,
    pub total: f64,
}

/// Per frame `(point, static distance, dynamic distance)` under frozen
/// associations.
pub type FrameDistances = Vec<Vec<(u32, f64, f64)>>;

/// Observation data the objective needs, prepared once per video.
///
/// Only points covered by a tracked segment that is present in frame 0
/// take part; points of newly observed segments are dropped.
#[derive(Debug, Clone)]
pub struct RefineProblem {
    frames: Vec<FrameData>,
    surface: NearestNeighborIndex,
    n_segments: usize,
}

#[derive(Debug, Clone, Default)]
struct FrameData {
    points: Vec<Vec3>,
    /// `memberships[offsets[i]..offsets[i + 1]]` are the segments of point i.
    offsets: Vec<u32>,
    memberships: Vec<(u32, f32)>,
}

/// Nearest surface points for each used point of each frame, static then
/// dynamic branch. Frame 0 is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Associations {
    pub frames: Vec<Vec<(usize, Vec3, Vec3)>>,
}

/// Last static and dynamic neighbor of every used point, per frame.
#[derive(Debug, Clone)]
pub struct NeighborHints {
    frames: Vec<Vec<(u32, u32)>>,
}

impl NeighborHints {
    pub fn new(problem: &RefineProblem) -> Self {
        Self {
            frames: problem.frames.iter().map(|f| vec![(u32::MAX, u32::MAX); f.points.len()]).collect(),
        }
    }
}

/// Per-frame point subsets; `None` uses every point.
pub type Subsample = Option<Vec<Vec<u32>>>;

impl RefineProblem {
    /// `tracked` lists the segment tracks in moving-vector order.
    pub fn new(obs: &Observation, tracked: &[&SegmentTrack], newly_observed: &[&SegmentTrack]) -> Self {
        let frames = obs
            .frames
            .iter()
            .enumerate()
            .map(|(t, frame)| {
                let mut data = FrameData {
                    offsets: vec![0],
                    ..Default::default()
                };
                for (p, &pixel) in frame.points.iter().zip(&frame.pixels) {
                    if newly_observed.iter().any(|s| s.masks[t].get(pixel) > 0.0) {
                        continue;
                    }
                    let before = data.memberships.len();
                    for (d, s) in tracked.iter().enumerate() {
                        let v = s.masks[t].get(pixel);
                        if v > 0.0 {
                            data.memberships.push((d as u32, v));
                        }
                    }
                    if data.memberships.len() == before {
                        continue;
                    }
                    data.points.push(*p);
                    data.offsets.push(data.memberships.len() as u32);
                }
                data
            })
            .collect();
        Self {
            frames,
            surface: NearestNeighborIndex::new(&obs.surface.points),
            n_segments: tracked.len(),
        }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Number of points of frame `t` entering the loss.
    pub fn used_points(&self, t: usize) -> usize {
        self.frames[t].points.len()
    }

    pub fn segment_count(&self) -> usize {
        self.n_segments
    }

    /// Nearest surface points under the current state.
    pub fn associate(&self, state: &RefineState, subsample: &Subsample) -> Associations {
        self.associate_hinted(state, subsample, &mut NeighborHints::new(self))
    }

    /// [`Self::associate`] that starts each search from the previous
    /// neighbor of the same point and records the new one. The result does
    /// not depend on the hints.
    pub fn associate_hinted(&self, state: &RefineState, subsample: &Subsample, hints: &mut NeighborHints) -> Associations {
        let frames = hints
            .frames
            .par_iter_mut()
            .enumerate()
            .map(|(t, hint)| {
                if t == 0 {
                    return Vec::new();
                }
                let f = FrameTransforms::new(state, t);
                self.indices(t, subsample)
                    .map(|i| {
                        let y = f.camera(&self.frames[t].points[i]);
                        let z = f.part(&y);
                        let (hs, qs, _) = self.surface.nearest_hinted(&y, hint[i].0 as usize).expect("surface nonempty");
                        let (hd, qd, _) = self.surface.nearest_hinted(&z, hint[i].1 as usize).expect("surface nonempty");
                        hint[i] = (hs as u32, hd as u32);
                        (i, qs, qd)
                    })
                    .collect()
            })
            .collect();
        Associations { frames }
    }

    /// Loss with nearest neighbors re-associated.
    pub fn loss(&self, state: &RefineState, subsample: &Subsample) -> LossTerms {
        self.evaluate(state, &self.associate(state, subsample), false).0
    }

    /// Loss and gradient (in [`RefineState::to_params`] layout) with the
    /// given associations held fixed.
    pub fn loss_and_gradient(&self, state: &RefineState, assoc: &Associations) -> (LossTerms, Vec<f64>) {
        let (terms, grad) = self.evaluate(state, assoc, true);
        (terms, grad.expect("gradient requested"))
    }

    /// Loss with associations held fixed, no gradient.
    pub fn loss_frozen(&self, state: &RefineState, assoc: &Associations) -> LossTerms {
        self.evaluate(state, assoc, false).0
    }

    /// Static and dynamic distances `(point, d_static, d_dynamic)` of every
    /// associated point, per frame.
    pub fn distances(&self, state: &RefineState, assoc: &Associations) -> FrameDistances {
        (0..self.frames.len())
            .map(|t| {
                if t == 0 {
                    return Vec::new();
                }
                let f = FrameTransforms::new(state, t);
                assoc.frames[t]
                    .iter()
                    .map(|&(i, qs, qd)| {
                        let y = f.camera(&self.frames[t].points[i]);
                        (i as u32, (y - qs).norm(), (f.part(&y) - qd).norm())
                    })
                    .collect()
            })
            .collect()
    }

    /// Loss from precomputed distances under the moving probabilities `probs`.
    pub fn loss_from_distances(&self, distances: &[Vec<(u32, f64, f64)>], probs: &[f64]) -> f64 {
        let scale = 1.0 / (self.frames.len() - 1) as f64;
        let mut total = 0.0;
        for (t, frame) in distances.iter().enumerate().skip(1) {
            let (mut ws, mut wd, mut s, mut d) = (0.0, 0.0, 0.0, 0.0);
            for &(i, ds, dd) in frame {
                let m = self.moving_value(t, i as usize, probs).0;
                ws += 1.0 - m;
                wd += m;
                s += (1.0 - m) * ds;
                d += m * dd;
            }
            if ws > 0.0 {
                total += scale * s / ws;
            }
            if wd > 0.0 {
                total += scale * d / wd;
            }
        }
        total
    }

    fn indices<'a>(&'a self, t: usize, subsample: &'a Subsample) -> Box<dyn Iterator<Item = usize> + 'a> {
        match subsample {
            Some(s) => Box::new(s[t].iter().map(|&i| i as usize)),
            None => Box::new(0..self.frames[t].points.len()),
        }
    }

    fn moving_value(&self, t: usize, i: usize, probs: &[f64]) -> (f64, bool) {
        let f = &self.frames[t];
        let raw: f64 = f.memberships[f.offsets[i] as usize..f.offsets[i + 1] as usize]
            .iter()
            .map(|&(d, v)| probs[d as usize] * f64::from(v))
            .sum();
        (raw.clamp(0.0, 1.0), raw > 0.0 && raw < 1.0)
    }

    fn evaluate(&self, state: &RefineState, assoc: &Associations, with_grad: bool) -> (LossTerms, Option<Vec<f64>>) {
        let n = self.frames.len();
        assert_eq!(state.states.len(), n, "state length");
        assert_eq!(state.moving.logits.len(), self.n_segments, "moving vector length");
        let probs = state.moving.probabilities();
        let layout = state.layout();
        let scale = 1.0 / (n - 1) as f64;

        let per_frame: Vec<(f64, f64, Option<FrameGrad>)> = (1..n)
            .into_par_iter()
            .map(|t| self.frame_term(state, t, &assoc.frames[t], &probs, with_grad, scale))
            .collect();

        let mut terms = LossTerms::default();
        let mut grad = with_grad.then(|| vec![0.0; layout.len]);
        for (k, (s, d, fg)) in per_frame.into_iter().enumerate() {
            let t = k + 1;
            terms.static_term += scale * s;
            terms.dynamic_term += scale * d;
            if let (Some(g), Some(fg)) = (grad.as_mut(), fg) {
                let c = layout.camera(t);
                g[c..c + 6].copy_from_slice(&fg.camera);
                for k in 0..3 {
                    g[layout.axis + k] += fg.axis[k];
                }
                if let Some(p) = layout.pivot {
                    for k in 0..3 {
                        g[p + k] += fg.pivot[k];
                    }
                }
                g[layout.state(t)] = fg.state;
                for (d, v) in fg.logits.iter().enumerate() {
                    g[layout.logits + d] += v;
                }
            }
        }
        terms.total = terms.static_term + terms.dynamic_term;
        if let Some(g) = grad.as_mut() {
            // chain the normalized-axis gradient to the free axis vector
            let u = state.axis;
            let a = u.normalize();
            let ga = Vec3::new(g[layout.axis], g[layout.axis + 1], g[layout.axis + 2]);
            let gu = (ga - a * a.dot(&ga)) / u.norm();
            g[layout.axis..layout.axis + 3].copy_from_slice(gu.as_slice());
        }
        (terms, grad)
    }

    /// Unscaled static and dynamic means of frame `t`, plus its gradient
    /// contributions already multiplied by `scale`.
    fn frame_term(
        &self,
        state: &RefineState,
        t: usize,
        pairs: &[(usize, Vec3, Vec3)],
        probs: &[f64],
        with_grad: bool,
        scale: f64,
    ) -> (f64, f64, Option<FrameGrad>) {
        let f = FrameTransforms::new(state, t);
        let points = &self.frames[t].points;
        struct PointEval {
            i: usize,
            y: Vec3,
            m: f64,
            free: bool,
            ds: f64,
            dd: f64,
            ns: Vec3,
            nd: Vec3,
        }
        let evals: Vec<PointEval> = pairs
            .iter()
            .map(|&(i, qs, qd)| {
                let y = f.camera(&points[i]);
                let z = f.part(&y);
                let (m, free) = self.moving_value(t, i, probs);
                let (ds, dd) = ((y - qs).norm(), (z - qd).norm());
                let unit = |v: Vec3, d: f64| if d > MIN_DISTANCE { v / d } else { Vec3::zeros() };
                PointEval {
                    i,
                    y,
                    m,
                    free,
                    ds,
                    dd,
                    ns: unit(y - qs, ds),
                    nd: unit(z - qd, dd),
                }
            })
            .collect();
        let ws: f64 = evals.iter().map(|e| 1.0 - e.m).sum();
        let wd: f64 = evals.iter().map(|e| e.m).sum();
        let s = if ws > 0.0 {
            evals.iter().map(|e| (1.0 - e.m) * e.ds).sum::<f64>() / ws
        } else {
            0.0
        };
        let d = if wd > 0.0 {
            evals.iter().map(|e| e.m * e.dd).sum::<f64>() / wd
        } else {
            0.0
        };
        if !with_grad {
            return (s, d, None);
        }

        let mut g = FrameGrad {
            camera: [0.0; 6],
            axis: Vec3::zeros(),
            pivot: Vec3::zeros(),
            state: 0.0,
            logits: vec![0.0; self.n_segments],
        };
        let rk = f.part_rotation;
        let a = f.axis;
        let theta = -state.states[t];
        let (sin, cos) = theta.sin_cos();
        let mut gy_sum = Vec3::zeros();
        let mut gomega_local = Vec3::zeros();
        for e in &evals {
            let cs = if ws > 0.0 { scale * (1.0 - e.m) / ws } else { 0.0 };
            let cd = if wd > 0.0 { scale * e.m / wd } else { 0.0 };
            let nd = e.nd * cd;
            let gy = e.ns * cs + rk.transpose() * nd;
            gy_sum += gy;
            gomega_local += points[e.i].cross(&(f.camera_rotation.transpose() * gy));
            match state.joint_type {
                JointType::Revolute => {
                    let v = e.y - state.pivot;
                    let rv = rk * v;
                    g.pivot += nd - rk.transpose() * nd;
                    g.state += -a.cross(&rv).dot(&nd);
                    g.axis += v.cross(&nd) * sin + (v * a.dot(&nd) + nd * a.dot(&v)) * (1.0 - cos);
                }
                JointType::Prismatic => {
                    g.state += -a.dot(&nd);
                    g.axis += -nd * state.states[t];
                }
            }
            if e.free {
                let mut dm = 0.0;
                if ws > 0.0 {
                    dm += (s - e.ds) / ws;
                }
                if wd > 0.0 {
                    dm += (e.dd - d) / wd;
                }
                let fr = &self.frames[t];
                for &(seg, v) in &fr.memberships[fr.offsets[e.i] as usize..fr.offsets[e.i + 1] as usize] {
                    let p = probs[seg as usize];
                    g.logits[seg as usize] += scale * dm * f64::from(v) * p * (1.0 - p);
                }
            }
        }
        let jr = so3::right_jacobian(&state.camera_deltas[t].omega());
        let gomega = jr.transpose() * gomega_local;
        g.camera[..3].copy_from_slice(gomega.as_slice());
        g.camera[3..].copy_from_slice(gy_sum.as_slice());
        (s, d, Some(g))
    }
}

struct FrameGrad {
    camera: [f64; 6],
    axis: Vec3,
    pivot: Vec3,
    state: f64,
    logits: Vec<f64>,
}

/// Camera and part transforms of one frame under a state.
struct FrameTransforms {
    camera_rotation: nalgebra::Matrix3<f64>,
    camera_translation: Vec3,
    part_rotation: nalgebra::Matrix3<f64>,
    part_translation: Vec3,
    axis: Vec3,
}

impl FrameTransforms {
    fn new(state: &RefineState, t: usize) -> Self {
        let cam = state.camera(t);
        let joint = state.joint();
        let k = crate::geometry::apply_joint(&joint, -state.states[t]);
        Self {
            camera_rotation: cam.rotation,
            camera_translation: cam.translation,
            part_rotation: k.rotation,
            part_translation: k.translation,
            axis: joint.axis,
        }
    }

    #[inline]
    fn camera(&self, x: &Vec3) -> Vec3 {
        self.camera_rotation * x + self.camera_translation
    }

    #[inline]
    fn part(&self, y: &Vec3) -> Vec3 {
        self.part_rotation * y + self.part_translation
    }
}

/// Soft moving map of every frame: segment masks weighted by the moving
/// probabilities, clamped to `[0, 1]`.
pub fn moving_maps(moving: &MovingVector, tracked: &[&SegmentTrack], width: u32, height: u32, frames: usize) -> Vec<ImageMap> {
    let probs = moving.probabilities();
    (0..frames)
        .map(|t| {
            let mut map = ImageMap::zeros(width, height);
            for (d, s) in tracked.iter().enumerate() {
                for (px, v) in s.masks[t].data.iter().enumerate() {
                    if *v > 0.0 {
                        map.data[px] += (probs[d] * f64::from(*v)) as f32;
                    }
                }
            }
            for v in &mut map.data {
                *v = v.clamp(0.0, 1.0);
            }
            map
        })
        .collect()
}
