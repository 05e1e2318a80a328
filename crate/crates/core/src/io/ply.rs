//! Binary little-endian PLY with one `vertex` element.
//!
//! Written files use `double` coordinates so a write/read round trip is
//! bit-exact. The reader also accepts `float` coordinates and any of the
//! common scalar types for the optional `label` and `pixel` properties.

use super::IoError;
use crate::geometry::Vec3;
use std::path::Path;

/// Vertex data of one PLY file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlyVertices {
    pub points: Vec<Vec3>,
    pub labels: Option<Vec<u16>>,
    pub pixels: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => f64::from(b[0] as i8),
            Self::U8 => f64::from(b[0]),
            Self::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Self::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Self::I32 => f64::from(i32::from_le_bytes(b[..4].try_into().unwrap())),
            Self::U32 => f64::from(u32::from_le_bytes(b[..4].try_into().unwrap())),
            Self::F32 => f64::from(f32::from_le_bytes(b[..4].try_into().unwrap())),
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

pub fn encode_ply(v: &PlyVertices) -> Vec<u8> {
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n",
        v.points.len()
    );
    if v.labels.is_some() {
        header.push_str("property ushort label\n");
    }
    if v.pixels.is_some() {
        header.push_str("property uint pixel\n");
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    for (i, p) in v.points.iter().enumerate() {
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(l) = &v.labels {
            out.extend_from_slice(&l[i].to_le_bytes());
        }
        if let Some(px) = &v.pixels {
            out.extend_from_slice(&px[i].to_le_bytes());
        }
    }
    out
}

pub fn decode_ply(bytes: &[u8], path: &Path) -> Result<PlyVertices, IoError> {
    let bad = |message: String| IoError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let end = b"end_header\n";
    let split = bytes
        .windows(end.len())
        .position(|w| w == end)
        .ok_or_else(|| bad("no end_header".into()))?
        + end.len();
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("header is not UTF-8".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(bad("missing ply magic".into()));
    }
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    for line in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "binary_little_endian", _] => {}
            ["format", f, ..] => return Err(bad(format!("unsupported format {f}"))),
            ["comment", ..] | ["obj_info", ..] | ["end_header"] | [] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| bad(format!("bad vertex count {n}")))?);
                in_vertex = true;
            }
            ["element", name, _] => return Err(bad(format!("unsupported element {name}"))),
            ["property", "list", ..] => return Err(bad("list properties are not supported".into())),
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| bad(format!("unknown type {ty}")))?;
                props.push(((*name).to_string(), s));
            }
            _ => return Err(bad(format!("unexpected header line {line:?}"))),
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element".into()))?;
    for axis in ["x", "y", "z"] {
        if !props.iter().any(|(n, _)| n == axis) {
            return Err(bad(format!("missing property {axis}")));
        }
    }
    let stride: usize = props.iter().map(|(_, s)| s.size()).sum();
    let body = &bytes[split..];
    if body.len() != stride * count {
        return Err(bad(format!("body has {} bytes, header implies {}", body.len(), stride * count)));
    }
    let has = |n: &str| props.iter().any(|(p, _)| p == n);
    let mut out = PlyVertices {
        points: Vec::with_capacity(count),
        labels: has("label").then(|| Vec::with_capacity(count)),
        pixels: has("pixel").then(|| Vec::with_capacity(count)),
    };
    for row in body.chunks_exact(stride.max(1)).take(count) {
        let mut xyz = [0.0; 3];
        let mut off = 0;
        for (name, s) in &props {
            let v = s.read(&row[off..]);
            off += s.size();
            match name.as_str() {
                "x" => xyz[0] = v,
                "y" => xyz[1] = v,
                "z" => xyz[2] = v,
                "label" => out.labels.as_mut().unwrap().push(v as u16),
                "pixel" => out.pixels.as_mut().unwrap().push(v as u32),
                _ => {}
            }
        }
        out.points.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
    }
    Ok(out)
}
