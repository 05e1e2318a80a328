//! Segment bookkeeping and the final movable/static split of the surface
//! cloud.

use crate::config::SegmentConfig;
use crate::geometry::{NearestNeighborIndex, Vec3};
use crate::scene::{FrameObservation, ImageMap, SegmentTrack};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SegmentError {
    #[error("no segment tracks")]
    NoTracks,
    #[error("frame-0 map is {map_width}x{map_height}, observation expects {width}x{height}")]
    MapSize {
        map_width: u32,
        map_height: u32,
        width: u32,
        height: u32,
    },
}

/// Ids of segments absent from frame 0, in track order.
pub fn classify_newly_observed(tracks: &[SegmentTrack]) -> Result<Vec<u32>, SegmentError> {
    if tracks.is_empty() {
        return Err(SegmentError::NoTracks);
    }
    Ok(tracks.iter().filter(|s| !s.present_in_frame0()).map(|s| s.id).collect())
}

/// Disjoint, exhaustive split of surface-cloud indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfacePartition {
    pub movable: Vec<usize>,
    pub fixed: Vec<usize>,
    /// Set when the frame-0 map had no pixel above the threshold.
    pub no_moving_pixels: bool,
}

impl SurfacePartition {
    pub fn len(&self) -> usize {
        self.movable.len() + self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-point flag, true for movable points.
    pub fn is_movable(&self) -> Vec<bool> {
        let mut flags = vec![false; self.len()];
        for &i in &self.movable {
            flags[i] = true;
        }
        flags
    }
}

/// Surface points within the attachment radius of a frame-0 point whose
/// map value exceeds the threshold are movable; the rest are static.
pub fn extract_movable_part(
    surface: &[Vec3],
    map0: &ImageMap,
    frame0: &FrameObservation,
    width: u32,
    height: u32,
    config: &SegmentConfig,
) -> Result<SurfacePartition, SegmentError> {
    if map0.width != width || map0.height != height {
        return Err(SegmentError::MapSize {
            map_width: map0.width,
            map_height: map0.height,
            width,
            height,
        });
    }
    let moving: Vec<Vec3> = frame0
        .points
        .iter()
        .zip(&frame0.pixels)
        .filter(|(_, &px)| map0.get(px) > config.moving_threshold)
        .map(|(p, _)| *p)
        .collect();
    let index = NearestNeighborIndex::new(&moving);
    let mut partition = SurfacePartition {
        movable: Vec::new(),
        fixed: Vec::new(),
        no_moving_pixels: moving.is_empty(),
    };
    for (i, p) in surface.iter().enumerate() {
        match index.nearest(p) {
            Some((_, _, d)) if d <= config.attach_radius => partition.movable.push(i),
            _ => partition.fixed.push(i),
        }
    }
    Ok(partition)
}
