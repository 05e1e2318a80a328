//! Map binaries and the correspondence text format.

use super::IoError;
use crate::scene::{Correspondence, CorrespondenceSet, ImageMap};
use std::path::Path;

/// `height`, `width` as little-endian u32, then row-major f32 values.
pub fn encode_map(map: &ImageMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * map.data.len());
    out.extend_from_slice(&map.height.to_le_bytes());
    out.extend_from_slice(&map.width.to_le_bytes());
    for v in &map.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_map(bytes: &[u8], path: &Path) -> Result<ImageMap, IoError> {
    if bytes.len() < 8 {
        return Err(IoError::Parse {
            path: path.to_path_buf(),
            message: "shorter than the 8-byte header".into(),
        });
    }
    let height = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let body = &bytes[8..];
    let expected = 4 * width as usize * height as usize;
    if body.len() != expected {
        return Err(IoError::Parse {
            path: path.to_path_buf(),
            message: format!("{} data bytes for a {height}x{width} map, expected {expected}", body.len()),
        });
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ImageMap { width, height, data })
}

/// One `t t' idx_a idx_b conf` line per match.
pub fn encode_correspondences(sets: &[CorrespondenceSet]) -> String {
    let mut out = String::new();
    for s in sets {
        for m in &s.matches {
            out.push_str(&format!("{} {} {} {} {}\n", s.frame_a, s.frame_b, m.a, m.b, m.confidence));
        }
    }
    out
}

/// Groups lines into sets for the listed frame pairs, keeping file order
/// within each pair. Lines for unlisted pairs are an error.
pub fn decode_correspondences(text: &str, pairs: &[[usize; 2]], path: &Path) -> Result<Vec<CorrespondenceSet>, IoError> {
    let mut sets: Vec<CorrespondenceSet> = pairs
        .iter()
        .map(|&[frame_a, frame_b]| CorrespondenceSet {
            frame_a,
            frame_b,
            matches: Vec::new(),
        })
        .collect();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| IoError::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {what}", n + 1),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        let ta: usize = f[0].parse().map_err(|_| bad("bad frame"))?;
        let tb: usize = f[1].parse().map_err(|_| bad("bad frame"))?;
        let m = Correspondence {
            a: f[2].parse().map_err(|_| bad("bad index"))?,
            b: f[3].parse().map_err(|_| bad("bad index"))?,
            confidence: f[4].parse().map_err(|_| bad("bad confidence"))?,
        };
        let set = sets
            .iter_mut()
            .find(|s| s.frame_a == ta && s.frame_b == tb)
            .ok_or_else(|| bad("frame pair not listed in the manifest"))?;
        set.matches.push(m);
    }
    Ok(sets)
}
