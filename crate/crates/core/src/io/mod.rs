//! On-disk dataset layout, versioned JSON artifacts and the end-to-end
//! pipeline driver.
//!
//! A dataset directory holds `manifest.json` and the files it references:
//!
//! - `surface.ply`: canonical surface cloud (x, y, z)
//! - `frames/frame_TTT.ply`: per-frame points (x, y, z, pixel)
//! - `maps/moving_TTT.bin`: per-frame moving maps
//! - `segments/seg_III_TTT.bin`: per-segment, per-frame masks
//! - `correspondences.txt`: `t t' idx_a idx_b conf` lines
//! - `gt/`: optional ground truth (`truth.json`, `object.ply`, `moving_TTT.bin`)

mod formats;
pub mod pipeline;
mod ply;

pub use formats::{decode_correspondences, decode_map, encode_correspondences, encode_map};
pub use pipeline::{run_pipeline, Failure, PipelineOutput};
pub use ply::{decode_ply, encode_ply, PlyVertices};

use crate::geometry::{JointModel, JointStateSequence, PointCloud, RigidTransform};
use crate::scene::{FrameObservation, GroundTruth, ImageMap, Intrinsics, Observation, SegmentTrack};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Version embedded in every JSON file this crate writes.
pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{file}: {field} is {found}, expected {expected}")]
    DimensionMismatch {
        file: PathBuf,
        field: String,
        expected: u64,
        found: u64,
    },
    #[error("{path}: sha256 {found} does not match manifest {expected}")]
    BadChecksum {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: schema version {found}, this build reads {expected}")]
    SchemaVersion { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            IoError::MissingFile(path.to_path_buf())
        } else {
            IoError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

/// Writes `bytes`, creating parent directories.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let io = |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, bytes).map_err(io)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// JSON body with its schema version and kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    pub kind: String,
    #[serde(flatten)]
    pub body: T,
}

/// Pretty JSON of `body` tagged with the schema version and `kind`.
pub fn to_versioned_json<T: Serialize>(kind: &str, body: &T) -> String {
    let v = Versioned {
        schema_version: SCHEMA_VERSION,
        kind: kind.to_string(),
        body,
    };
    let mut s = serde_json::to_string_pretty(&v).expect("artifact serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, body: &T) -> Result<(), IoError> {
    write_bytes(path, to_versioned_json(kind, body).as_bytes())
}

/// Reads a file written by [`write_json`], checking version and kind.
pub fn read_json<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T, IoError> {
    let bytes = read_bytes(path)?;
    let parse = |message: String| IoError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let v: Versioned<serde_json::Value> = serde_json::from_slice(&bytes).map_err(|e| parse(e.to_string()))?;
    if v.schema_version != SCHEMA_VERSION {
        return Err(IoError::SchemaVersion {
            path: path.to_path_buf(),
            found: v.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    if v.kind != kind {
        return Err(parse(format!("kind {:?}, expected {kind:?}", v.kind)));
    }
    serde_json::from_value(v.body).map_err(|e| parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentFiles {
    pub id: u32,
    /// One mask per frame.
    pub masks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFiles {
    pub truth: String,
    pub object_cloud: String,
    pub moving_maps: Vec<String>,
}

/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    pub intrinsics: Intrinsics,
    pub surface: String,
    pub frames: Vec<String>,
    pub moving_maps: Vec<String>,
    pub segments: Vec<SegmentFiles>,
    pub correspondences: String,
    /// Frame pairs of the correspondence file, in order; a pair may have
    /// no lines.
    pub correspondence_pairs: Vec<[usize; 2]>,
    pub ground_truth: Option<GroundTruthFiles>,
    /// sha256 of referenced files. Files without an entry are not checked.
    pub checksums: BTreeMap<String, String>,
}

/// Ground truth fields stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub joint: JointModel,
    pub states: Vec<f64>,
    pub cameras: Vec<RigidTransform>,
    pub surface_labels: Vec<u16>,
    pub movable_part: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub observation: Observation,
    pub ground_truth: Option<GroundTruth>,
}

fn frame_name(t: usize) -> String {
    format!("{t:03}")
}

/// Writes `dataset` under `dir` and returns the manifest.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<DatasetManifest, IoError> {
    let obs = &dataset.observation;
    let mut checksums = BTreeMap::new();
    let mut put = |rel: String, bytes: Vec<u8>| -> Result<String, IoError> {
        write_bytes(&dir.join(&rel), &bytes)?;
        checksums.insert(rel.clone(), sha256_hex(&bytes));
        Ok(rel)
    };
    let surface = put(
        "surface.ply".into(),
        encode_ply(&PlyVertices {
            points: obs.surface.points.clone(),
            labels: obs.surface.labels.clone(),
            pixels: None,
        }),
    )?;
    let mut frames = Vec::new();
    for (t, f) in obs.frames.iter().enumerate() {
        let bytes = encode_ply(&PlyVertices {
            points: f.points.clone(),
            labels: None,
            pixels: Some(f.pixels.clone()),
        });
        frames.push(put(format!("frames/frame_{}.ply", frame_name(t)), bytes)?);
    }
    let mut moving_maps = Vec::new();
    for (t, m) in obs.moving_maps.iter().enumerate() {
        moving_maps.push(put(format!("maps/moving_{}.bin", frame_name(t)), encode_map(m))?);
    }
    let mut segments = Vec::new();
    for s in &obs.segments {
        let mut masks = Vec::new();
        for (t, m) in s.masks.iter().enumerate() {
            masks.push(put(format!("segments/seg_{:03}_{}.bin", s.id, frame_name(t)), encode_map(m))?);
        }
        segments.push(SegmentFiles { id: s.id, masks });
    }
    let correspondences = put(
        "correspondences.txt".into(),
        encode_correspondences(&obs.correspondences).into_bytes(),
    )?;
    let ground_truth = match &dataset.ground_truth {
        None => None,
        Some(gt) => {
            let record = TruthRecord {
                joint: gt.joint,
                states: gt.states.states.clone(),
                cameras: gt.cameras.clone(),
                surface_labels: gt.surface_labels.clone(),
                movable_part: gt.movable_part,
            };
            let truth = put("gt/truth.json".into(), to_versioned_json("truth", &record).into_bytes())?;
            let object_cloud = put(
                "gt/object.ply".into(),
                encode_ply(&PlyVertices {
                    points: gt.object_cloud.points.clone(),
                    labels: gt.object_cloud.labels.clone(),
                    pixels: None,
                }),
            )?;
            let mut maps = Vec::new();
            for (t, m) in gt.moving_maps.iter().enumerate() {
                maps.push(put(format!("gt/moving_{}.bin", frame_name(t)), encode_map(m))?);
            }
            Some(GroundTruthFiles {
                truth,
                object_cloud,
                moving_maps: maps,
            })
        }
    };
    let manifest = DatasetManifest {
        name: dataset.name.clone(),
        frame_count: obs.frame_count(),
        width: obs.width,
        height: obs.height,
        intrinsics: obs.intrinsics,
        surface,
        frames,
        moving_maps,
        segments,
        correspondences,
        correspondence_pairs: obs.correspondences.iter().map(|c| [c.frame_a, c.frame_b]).collect(),
        ground_truth,
        checksums,
    };
    write_json(&dir.join(MANIFEST_FILE), "manifest", &manifest)?;
    Ok(manifest)
}

/// Reads and validates the dataset whose manifest is `path`, or the
/// `manifest.json` inside `path` when it is a directory.
pub fn read_dataset(path: &Path) -> Result<Dataset, IoError> {
    let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let m: DatasetManifest = read_json(&manifest_path, "manifest")?;
    let t_count = m.frame_count;
    let mismatch = |file: &Path, field: &str, expected: u64, found: u64| IoError::DimensionMismatch {
        file: file.to_path_buf(),
        field: field.into(),
        expected,
        found,
    };
    if t_count < 2 {
        return Err(mismatch(&manifest_path, "frame_count", 2, t_count as u64));
    }
    let load = |rel: &str| -> Result<(PathBuf, Vec<u8>), IoError> {
        let p = dir.join(rel);
        let bytes = read_bytes(&p)?;
        if let Some(expected) = m.checksums.get(rel) {
            let found = sha256_hex(&bytes);
            if &found != expected {
                return Err(IoError::BadChecksum {
                    path: p,
                    expected: expected.clone(),
                    found,
                });
            }
        }
        Ok((p, bytes))
    };
    let n_pixels = u64::from(m.width) * u64::from(m.height);
    let load_map = |rel: &str| -> Result<ImageMap, IoError> {
        let (p, bytes) = load(rel)?;
        let map = decode_map(&bytes, &p)?;
        if map.height != m.height {
            return Err(mismatch(&p, "height", m.height.into(), map.height.into()));
        }
        if map.width != m.width {
            return Err(mismatch(&p, "width", m.width.into(), map.width.into()));
        }
        Ok(map)
    };
    let check_len = |what: &str, n: usize| {
        if n == t_count {
            Ok(())
        } else {
            Err(mismatch(&manifest_path, what, t_count as u64, n as u64))
        }
    };

    let (sp, sb) = load(&m.surface)?;
    let s = decode_ply(&sb, &sp)?;
    let surface = PointCloud {
        points: s.points,
        labels: s.labels,
    };

    check_len("frames", m.frames.len())?;
    let mut frames = Vec::with_capacity(t_count);
    for rel in &m.frames {
        let (p, bytes) = load(rel)?;
        let v = decode_ply(&bytes, &p)?;
        let pixels = v.pixels.ok_or_else(|| IoError::Parse {
            path: p.clone(),
            message: "frame cloud has no pixel property".into(),
        })?;
        if let Some(&bad) = pixels.iter().find(|&&px| u64::from(px) >= n_pixels) {
            return Err(mismatch(&p, "pixel", n_pixels, bad.into()));
        }
        frames.push(FrameObservation { points: v.points, pixels });
    }

    check_len("moving_maps", m.moving_maps.len())?;
    let moving_maps = m.moving_maps.iter().map(|r| load_map(r)).collect::<Result<Vec<_>, _>>()?;

    let mut segments = Vec::with_capacity(m.segments.len());
    for s in &m.segments {
        check_len(&format!("segment {} masks", s.id), s.masks.len())?;
        segments.push(SegmentTrack {
            id: s.id,
            masks: s.masks.iter().map(|r| load_map(r)).collect::<Result<Vec<_>, _>>()?,
        });
    }

    let (cp, cb) = load(&m.correspondences)?;
    let text = String::from_utf8(cb).map_err(|_| IoError::Parse {
        path: cp.clone(),
        message: "not UTF-8".into(),
    })?;
    let correspondences = decode_correspondences(&text, &m.correspondence_pairs, &cp)?;
    for c in &correspondences {
        for (frame, field) in [(c.frame_a, "frame_a"), (c.frame_b, "frame_b")] {
            if frame >= t_count {
                return Err(mismatch(&cp, field, t_count as u64, frame as u64));
            }
        }
        let (na, nb) = (frames[c.frame_a].len() as u64, frames[c.frame_b].len() as u64);
        for x in &c.matches {
            if u64::from(x.a) >= na {
                return Err(mismatch(&cp, "idx_a", na, x.a.into()));
            }
            if u64::from(x.b) >= nb {
                return Err(mismatch(&cp, "idx_b", nb, x.b.into()));
            }
        }
    }

    let ground_truth = match &m.ground_truth {
        None => None,
        Some(g) => {
            let truth_path = dir.join(&g.truth);
            load(&g.truth)?;
            let r: TruthRecord = read_json(&truth_path, "truth")?;
            check_len("ground truth states", r.states.len())?;
            check_len("ground truth cameras", r.cameras.len())?;
            check_len("ground truth moving_maps", g.moving_maps.len())?;
            if r.surface_labels.len() != surface.len() {
                return Err(mismatch(&truth_path, "surface_labels", surface.len() as u64, r.surface_labels.len() as u64));
            }
            let (op, ob) = load(&g.object_cloud)?;
            let o = decode_ply(&ob, &op)?;
            Some(GroundTruth {
                joint: r.joint,
                states: JointStateSequence::new(r.states),
                cameras: r.cameras,
                moving_maps: g.moving_maps.iter().map(|r| load_map(r)).collect::<Result<Vec<_>, _>>()?,
                surface_labels: r.surface_labels,
                object_cloud: PointCloud {
                    points: o.points,
                    labels: o.labels,
                },
                movable_part: r.movable_part,
            })
        }
    };

    Ok(Dataset {
        name: m.name,
        observation: Observation {
            width: m.width,
            height: m.height,
            intrinsics: m.intrinsics,
            surface,
            frames,
            moving_maps,
            segments,
            correspondences,
        },
        ground_truth,
    })
}

#[cfg(test)]
mod tests;
