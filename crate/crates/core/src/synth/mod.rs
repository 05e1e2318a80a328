//! Synthetic articulated scenes with exact ground truth.
//!
//! An object is a set of labeled parts, each a union of cuboids, with one
//! movable part attached through a single joint. Frames are rendered with a
//! per-pixel point z-buffer, so every observed point is a known surface
//! sample; correspondences, moving maps and part segments follow from the
//! sample identities.

mod render;
mod templates;
mod trajectory;

use crate::coarse::subsample_frames;
use crate::geometry::{apply_joint, JointModel, JointStateSequence, PointCloud, RigidTransform, Vec3};
use crate::rng::{self, domain};
use crate::scene::{
    Correspondence, CorrespondenceSet, FrameObservation, GroundTruth, ImageMap, Intrinsics, Observation,
    SegmentTrack,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};

use render::{look_at, render, sample_surfaces, PosedCuboid, Sample};
pub use templates::{suite, NoiseSpec, SceneKind, SpecFile, TemplateRef};

/// Moving-map threshold on per-frame world displacement.
pub const MOTION_EPSILON: f64 = 1e-6;
/// Voxel edge for fusing the surface scan.
pub const FUSION_VOXEL: f64 = 0.005;
pub const FUSION_VIEWS: usize = 24;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("frame {0} sees no object points")]
    EmptyFrame(usize),
}

/// Axis-aligned box in its own frame, placed by `orientation` (axis-angle)
/// and `center`. `density` is samples per meter along each face edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    #[serde(default)]
    pub orientation: [f64; 3],
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSpec {
    pub id: u16,
    pub cuboids: Vec<Cuboid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CameraNoise {
    /// Std of target position steps, meters.
    pub position: f64,
    /// Std of target orientation steps, radians.
    pub orientation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub parts: Vec<PartSpec>,
    /// Joint in world (frame-0 camera) coordinates.
    pub joint: JointModel,
    pub movable_part: u16,
    /// Joint state per frame; starts at 0 and is monotone.
    pub states: Vec<f64>,
    pub width: u32,
    pub height: u32,
    pub intrinsics: Intrinsics,
    /// Random in-plane offset of each surface sample as a fraction of its
    /// grid cell, in `[0, 1)`. Irregular samples avoid exact matches between
    /// the cloud and copies of itself shifted by whole cells.
    #[serde(default)]
    pub sample_jitter: f64,
    /// Frames between camera retargets; `None` keeps the camera fixed.
    pub retarget_interval: Option<[u32; 2]>,
    pub camera_noise: CameraNoise,
    /// Std of Gaussian noise on observed points, meters.
    pub point_noise: f64,
    /// Fraction of object pixels whose moving-map label is flipped.
    pub mask_corruption: f64,
    /// Fraction of injected random correspondences.
    pub outlier_rate: f64,
}

impl SceneSpec {
    pub fn frame_count(&self) -> usize {
        self.states.len()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.parts.is_empty() {
            return bad("no parts".into());
        }
        if self.states.len() < 2 {
            return bad(format!("{} frames, need at least 2", self.states.len()));
        }
        if self.states[0] != 0.0 {
            return bad("state schedule must start at 0".into());
        }
        let inc = self.states.windows(2).all(|w| w[1] >= w[0]);
        let dec = self.states.windows(2).all(|w| w[1] <= w[0]);
        if !(inc || dec) {
            return bad("state schedule must be monotone".into());
        }
        let mut ids = HashSet::new();
        for p in &self.parts {
            if !ids.insert(p.id) {
                return bad(format!("duplicate part id {}", p.id));
            }
            if p.cuboids.is_empty() {
                return bad(format!("part {} has no cuboids", p.id));
            }
            for c in &p.cuboids {
                if c.density.is_nan() || c.density <= 0.0 || c.half_extents.iter().any(|h| h.is_nan() || *h <= 0.0) {
                    return bad(format!("part {} has a cuboid with non-positive size or density", p.id));
                }
            }
        }
        if !ids.contains(&self.movable_part) {
            return bad(format!("movable part {} not found", self.movable_part));
        }
        if ids.len() < 2 {
            return bad("need a static part besides the movable one".into());
        }
        if (self.joint.axis.norm() - 1.0).abs() > 1e-9 {
            return bad("joint axis must be unit length".into());
        }
        if let Some([lo, hi]) = self.retarget_interval {
            if lo == 0 || lo > hi {
                return bad(format!("retarget interval [{lo}, {hi}]"));
            }
        }
        for (name, r) in [("mask_corruption", self.mask_corruption), ("outlier_rate", self.outlier_rate)] {
            if !(0.0..1.0).contains(&r) {
                return bad(format!("{name} = {r} outside [0, 1)"));
            }
        }
        if self.point_noise < 0.0 || self.width == 0 || self.height == 0 {
            return bad("negative noise or empty image".into());
        }
        Ok(())
    }

    fn posed_cuboids(&self, state: f64) -> Vec<PosedCuboid> {
        let motion = apply_joint(&self.joint, state);
        self.parts
            .iter()
            .flat_map(|p| {
                let movable = p.id == self.movable_part;
                p.cuboids.iter().map(move |c| {
                    let posed = PosedCuboid::new(c);
                    if movable {
                        posed.moved(&motion)
                    } else {
                        posed
                    }
                })
            })
            .collect()
    }
}

fn posed_samples(spec: &SceneSpec, samples: &[Sample], state: f64) -> Vec<Vec3> {
    let motion = apply_joint(&spec.joint, state);
    samples
        .iter()
        .map(|s| if s.movable { motion.apply(&s.position) } else { s.position })
        .collect()
}

/// Canonical-state surface scan: the union of [`FUSION_VIEWS`] z-buffered
/// views around the object, voxel-deduplicated at [`FUSION_VOXEL`].
/// Labels are part ids.
pub fn fuse_surface_cloud(spec: &SceneSpec) -> Result<PointCloud, SynthError> {
    if spec.parts.is_empty() {
        return Err(SynthError::InvalidSpec("no parts".into()));
    }
    let samples = sample_surfaces(spec);
    let views = fusion_viewpoints(&samples);
    let (ids, _) = fuse_from_views(spec, &samples, &views);
    Ok(PointCloud::labeled(
        ids.iter().map(|&i| samples[i as usize].position).collect(),
        ids.iter().map(|&i| samples[i as usize].part).collect(),
    ))
}

const FUSION_RESOLUTION: u32 = 320;

fn fusion_viewpoints(samples: &[Sample]) -> Vec<RigidTransform> {
    let (center, radius) = bounding_sphere(samples);
    let distance = (3.0 * radius).max(1.0);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..FUSION_VIEWS)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / FUSION_VIEWS as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            let dir = Vec3::new(r * phi.cos(), y, r * phi.sin());
            look_at(&(center + dir * distance), &center)
        })
        .collect()
}

fn fusion_intrinsics(samples: &[Sample]) -> Intrinsics {
    let (_, radius) = bounding_sphere(samples);
    let distance = (3.0 * radius).max(1.0);
    let half = FUSION_RESOLUTION as f64 / 2.0;
    let f = half / (1.15 * radius / (distance - radius)).max(1e-3);
    Intrinsics { fx: f, fy: f, cx: half, cy: half }
}

fn bounding_sphere(samples: &[Sample]) -> (Vec3, f64) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for s in samples {
        lo = lo.inf(&s.position);
        hi = hi.sup(&s.position);
    }
    let center = (lo + hi) * 0.5;
    let radius = samples
        .iter()
        .map(|s| (s.position - center).norm())
        .fold(0.0, f64::max)
        .max(1e-3);
    (center, radius)
}

/// Sample ids kept after fusion (ascending) and the number of distinct
/// samples seen before voxel deduplication.
fn fuse_from_views(spec: &SceneSpec, samples: &[Sample], views: &[RigidTransform]) -> (Vec<u32>, usize) {
    let world: Vec<Vec3> = samples.iter().map(|s| s.position).collect();
    let cuboids = spec.posed_cuboids(0.0);
    let intrinsics = fusion_intrinsics(samples);
    let seen: BTreeSet<u32> = views
        .par_iter()
        .map(|v| {
            render(&world, &cuboids, v, &intrinsics, FUSION_RESOLUTION, FUSION_RESOLUTION)
                .into_iter()
                .map(|h| h.sample)
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let mut voxels = HashSet::new();
    let mut kept = Vec::new();
    for &id in &seen {
        let p = world[id as usize] / FUSION_VOXEL;
        let key = (p.x.floor() as i64, p.y.floor() as i64, p.z.floor() as i64);
        if voxels.insert(key) {
            kept.push(id);
        }
    }
    (kept, seen.len())
}

/// Renders a scene into an [`Observation`] plus its [`GroundTruth`].
/// Deterministic in `spec.seed`.
pub fn generate_scene(spec: &SceneSpec) -> Result<(Observation, GroundTruth), SynthError> {
    spec.validate()?;
    let samples = sample_surfaces(spec);
    let n_frames = spec.frame_count();
    let cameras = trajectory::camera_trajectory(spec);

    let views = fusion_viewpoints(&samples);
    let (surface_ids, _) = fuse_from_views(spec, &samples, &views);
    let surface = PointCloud::new(surface_ids.iter().map(|&i| samples[i as usize].position).collect());
    let surface_labels: Vec<u16> = surface_ids.iter().map(|&i| samples[i as usize].part).collect();

    let (w, h) = (spec.width, spec.height);
    let noise = Normal::new(0.0, spec.point_noise).unwrap();
    let rendered: Vec<Rendered> = (0..n_frames)
        .into_par_iter()
        .map(|t| {
            let state = spec.states[t];
            let neighbor = if t == 0 { spec.states[1] } else { spec.states[t - 1] };
            let world = posed_samples(spec, &samples, state);
            let hits = render(&world, &spec.posed_cuboids(state), &cameras[t], &spec.intrinsics, w, h);

            let mut rng = rng::stream(spec.seed, domain::POINT_NOISE, t as u64);
            let mut frame = FrameObservation::default();
            let mut gt_map = ImageMap::zeros(w, h);
            let motion_now = apply_joint(&spec.joint, state);
            let motion_prev = apply_joint(&spec.joint, neighbor);
            for hit in &hits {
                let jitter = if spec.point_noise > 0.0 {
                    Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
                } else {
                    Vec3::zeros()
                };
                frame.points.push(hit.camera_point + jitter);
                frame.pixels.push(hit.pixel);
                let s = &samples[hit.sample as usize];
                if s.movable {
                    let moved = (motion_now.apply(&s.position) - motion_prev.apply(&s.position)).norm();
                    if moved > MOTION_EPSILON {
                        gt_map.set(hit.pixel, 1.0);
                    }
                }
            }

            let mut corrupt = rng::stream(spec.seed, domain::MASK_CORRUPTION, t as u64);
            let mut map = gt_map.clone();
            if spec.mask_corruption > 0.0 {
                for hit in &hits {
                    if corrupt.random::<f64>() < spec.mask_corruption {
                        let v = map.get(hit.pixel);
                        map.set(hit.pixel, 1.0 - v);
                    }
                }
            }
            Rendered {
                frame,
                sample_ids: hits.iter().map(|h| h.sample).collect(),
                segments: hits.iter().map(|h| (h.pixel, samples[h.sample as usize].segment)).collect(),
                gt_map,
                map,
            }
        })
        .collect();

    if let Some(t) = rendered.iter().position(|r| r.frame.is_empty()) {
        return Err(SynthError::EmptyFrame(t));
    }

    let mut tracks: BTreeMap<u32, Vec<ImageMap>> = BTreeMap::new();
    for (t, r) in rendered.iter().enumerate() {
        for &(pixel, seg) in &r.segments {
            let masks = tracks
                .entry(seg)
                .or_insert_with(|| vec![ImageMap::zeros(w, h); n_frames]);
            masks[t].set(pixel, 1.0);
        }
    }
    let segments = tracks
        .into_iter()
        .map(|(id, masks)| SegmentTrack { id, masks })
        .collect();

    let correspondences = synth_correspondences(spec, &rendered, samples.len());

    let joint = spec.joint;
    let gt = GroundTruth {
        joint: match joint.joint_type {
            crate::geometry::JointType::Revolute => JointModel::revolute(joint.axis, joint.pivot),
            crate::geometry::JointType::Prismatic => JointModel::prismatic(joint.axis),
        },
        states: JointStateSequence::new(spec.states.clone()),
        cameras,
        moving_maps: rendered.iter().map(|r| r.gt_map.clone()).collect(),
        surface_labels,
        object_cloud: PointCloud::labeled(
            samples.iter().map(|s| s.position).collect(),
            samples.iter().map(|s| s.part).collect(),
        ),
        movable_part: spec.movable_part,
    };
    let obs = Observation {
        width: w,
        height: h,
        intrinsics: spec.intrinsics,
        surface,
        moving_maps: rendered.iter().map(|r| r.map.clone()).collect(),
        frames: rendered.into_iter().map(|r| r.frame).collect(),
        segments,
        correspondences,
    };
    Ok((obs, gt))
}

struct Rendered {
    frame: FrameObservation,
    sample_ids: Vec<u32>,
    segments: Vec<(u32, u32)>,
    gt_map: ImageMap,
    map: ImageMap,
}

/// Exact sample-identity matches between selected frames at most three
/// selected steps apart, plus uniformly random outlier pairs.
fn synth_correspondences(spec: &SceneSpec, rendered: &[Rendered], n_samples: usize) -> Vec<CorrespondenceSet> {
    let selected = subsample_frames(rendered.len());
    let mut pairs = Vec::new();
    for (i, &a) in selected.iter().enumerate() {
        for &b in selected.iter().skip(i + 1).take(3) {
            pairs.push((a, b));
        }
    }
    pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            let mut in_b = vec![u32::MAX; n_samples];
            for (idx, &s) in rendered[b].sample_ids.iter().enumerate() {
                in_b[s as usize] = idx as u32;
            }
            let mut matches: Vec<Correspondence> = rendered[a]
                .sample_ids
                .iter()
                .enumerate()
                .filter(|(_, s)| in_b[**s as usize] != u32::MAX)
                .map(|(idx, s)| Correspondence {
                    a: idx as u32,
                    b: in_b[*s as usize],
                    confidence: 1.0,
                })
                .collect();
            if spec.outlier_rate > 0.0 {
                let mut rng = rng::stream(spec.seed, domain::OUTLIERS, k as u64);
                let ratio = spec.outlier_rate / (1.0 - spec.outlier_rate);
                let n_out = (matches.len() as f64 * ratio).round() as usize;
                let (na, nb) = (rendered[a].sample_ids.len() as u32, rendered[b].sample_ids.len() as u32);
                for _ in 0..n_out {
                    matches.push(Correspondence {
                        a: rng.random_range(0..na),
                        b: rng.random_range(0..nb),
                        confidence: rng.random_range(0.9..1.0),
                    });
                }
            }
            matches.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)).then(x.confidence.total_cmp(&y.confidence)));
            CorrespondenceSet {
                frame_a: a,
                frame_b: b,
                matches,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests;
