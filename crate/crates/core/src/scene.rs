//! In-memory form of one video: what the pipeline consumes and the ground
//! truth a synthetic generator can attach.

use crate::geometry::{JointModel, JointStateSequence, PointCloud, RigidTransform, Vec3};
use serde::{Deserialize, Serialize};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Pixel coordinates of a camera-frame point, `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Camera-frame point at the center of pixel `(u, v)` with depth `z`.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z)
    }
}

/// Row-major `height x width` grid of `f32`, used for masks and soft maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl ImageMap {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; (width * height) as usize],
        }
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, pixel: u32) -> f32 {
        self.data[pixel as usize]
    }

    #[inline]
    pub fn set(&mut self, pixel: u32, value: f32) {
        self.data[pixel as usize] = value;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn count_at_least(&self, threshold: f32) -> usize {
        self.data.iter().filter(|v| **v >= threshold).count()
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}

/// One time step: the valid depth pixels unprojected into camera
/// coordinates. `pixels[i]` is the row-major pixel of `points[i]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameObservation {
    pub points: Vec<Vec3>,
    pub pixels: Vec<u32>,
}

impl FrameObservation {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A part segment tracked through the video, one binary mask per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTrack {
    pub id: u32,
    pub masks: Vec<ImageMap>,
}

impl SegmentTrack {
    pub fn present_in_frame0(&self) -> bool {
        self.masks.first().is_some_and(|m| m.count_nonzero() > 0)
    }

    pub fn total_pixels(&self) -> usize {
        self.masks.iter().map(|m| m.count_nonzero()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    /// Point index in the first frame.
    pub a: u32,
    /// Point index in the second frame.
    pub b: u32,
    pub confidence: f64,
}

/// Matches between frames `frame_a < frame_b` (raw frame indices).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub frame_a: usize,
    pub frame_b: usize,
    pub matches: Vec<Correspondence>,
}

/// Everything the reconstruction consumes for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub width: u32,
    pub height: u32,
    pub intrinsics: Intrinsics,
    /// Surface cloud of the object at the canonical state, expressed in the
    /// frame-0 camera coordinates.
    pub surface: PointCloud,
    pub frames: Vec<FrameObservation>,
    /// Rough moving maps used by the coarse stage and moving-vector init.
    pub moving_maps: Vec<ImageMap>,
    pub segments: Vec<SegmentTrack>,
    pub correspondences: Vec<CorrespondenceSet>,
}

impl Observation {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn correspondences_between(&self, a: usize, b: usize) -> Option<&CorrespondenceSet> {
        self.correspondences
            .iter()
            .find(|c| c.frame_a == a && c.frame_b == b)
    }
}

/// Ground truth attached to synthetic scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub joint: JointModel,
    pub states: JointStateSequence,
    /// World-from-camera per frame; frame 0 is the identity.
    pub cameras: Vec<RigidTransform>,
    pub moving_maps: Vec<ImageMap>,
    /// Part id of every surface-cloud point.
    pub surface_labels: Vec<u16>,
    /// Complete object surface at the canonical state, labeled by part id.
    pub object_cloud: PointCloud,
    pub movable_part: u16,
}

impl GroundTruth {
    pub fn surface_is_movable(&self) -> Vec<bool> {
        self.surface_labels
            .iter()
            .map(|l| *l == self.movable_part)
            .collect()
    }
}
