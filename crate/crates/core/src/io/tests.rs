use super::*;
use crate::config::Config;
use crate::scene::{Correspondence, CorrespondenceSet};
use crate::synth::{generate_scene, NoiseSpec, SceneKind, SceneSpec};
use crate::geometry::Vec3;
use std::f64::consts::FRAC_PI_2;

fn dataset(kind: SceneKind, seed: u64, noise: NoiseSpec) -> Dataset {
    let (observation, gt) = generate_scene(&SceneSpec::template(kind, seed, noise)).unwrap();
    Dataset {
        name: format!("{kind:?}-{seed}"),
        observation,
        ground_truth: Some(gt),
    }
}

fn written(ds: &Dataset) -> (tempfile::TempDir, DatasetManifest) {
    let dir = tempfile::tempdir().unwrap();
    let m = write_dataset(dir.path(), ds).unwrap();
    (dir, m)
}

#[test]
fn synth_dataset_round_trips_exactly() {
    let ds = dataset(SceneKind::DrawerWithInterior, 5, NoiseSpec::standard());
    let (dir, _) = written(&ds);
    let back = read_dataset(dir.path()).unwrap();
    let (a, b) = (&back.observation, &ds.observation);
    assert!(a.surface == b.surface, "surface");
    assert!(a.frames == b.frames, "frames");
    assert!(a.moving_maps == b.moving_maps, "maps");
    assert!(a.segments == b.segments, "segments");
    assert!(a.correspondences == b.correspondences, "correspondences");
    assert!(back.ground_truth == ds.ground_truth, "ground truth");
    assert!(back == ds);
    // manifest path works as well as the directory
    assert_eq!(read_dataset(&dir.path().join(MANIFEST_FILE)).unwrap(), ds);
}

#[test]
fn rewriting_is_byte_identical() {
    let ds = dataset(SceneKind::Drawer, 1, NoiseSpec::noiseless());
    let (a, ma) = written(&ds);
    let (b, mb) = written(&ds);
    assert_eq!(ma, mb);
    for rel in ma.checksums.keys().chain(std::iter::once(&MANIFEST_FILE.to_string())) {
        assert_eq!(std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn wrong_map_height_is_a_dimension_mismatch() {
    let ds = dataset(SceneKind::CabinetDoor, 0, NoiseSpec::noiseless());
    let (dir, mut m) = written(&ds);
    let rel = m.moving_maps[3].clone();
    let short = ImageMap::zeros(ds.observation.width, ds.observation.height - 1);
    let bytes = encode_map(&short);
    std::fs::write(dir.path().join(&rel), &bytes).unwrap();
    m.checksums.insert(rel.clone(), sha256_hex(&bytes));
    write_json(&dir.path().join(MANIFEST_FILE), "manifest", &m).unwrap();
    match read_dataset(dir.path()) {
        Err(IoError::DimensionMismatch { file, field, expected, found }) => {
            assert!(file.ends_with(&rel));
            assert_eq!(field, "height");
            assert_eq!((expected, found), (u64::from(ds.observation.height), u64::from(ds.observation.height - 1)));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn tampered_file_fails_checksum() {
    let ds = dataset(SceneKind::CabinetDoor, 0, NoiseSpec::noiseless());
    let (dir, m) = written(&ds);
    let path = dir.path().join(&m.correspondences);
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("0 1 0 0 1\n");
    std::fs::write(&path, text).unwrap();
    assert!(matches!(read_dataset(dir.path()), Err(IoError::BadChecksum { .. })));
}

#[test]
fn deleted_file_is_missing() {
    let ds = dataset(SceneKind::CabinetDoor, 0, NoiseSpec::noiseless());
    let (dir, m) = written(&ds);
    std::fs::remove_file(dir.path().join(&m.segments[2].masks[4])).unwrap();
    match read_dataset(dir.path()) {
        Err(IoError::MissingFile(p)) => assert!(p.ends_with(&m.segments[2].masks[4])),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        read_dataset(&dir.path().join("nope")),
        Err(IoError::MissingFile(_))
    ));
}

#[test]
fn single_frame_manifest_rejected() {
    let ds = dataset(SceneKind::Drawer, 0, NoiseSpec::noiseless());
    let (dir, mut m) = written(&ds);
    m.frame_count = 1;
    m.frames.truncate(1);
    write_json(&dir.path().join(MANIFEST_FILE), "manifest", &m).unwrap();
    match read_dataset(dir.path()) {
        Err(IoError::DimensionMismatch { field, found, .. }) => assert_eq!((field.as_str(), found), ("frame_count", 1)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn frame_count_disagreement_rejected() {
    let ds = dataset(SceneKind::Drawer, 0, NoiseSpec::noiseless());
    let (dir, mut m) = written(&ds);
    m.moving_maps.pop();
    write_json(&dir.path().join(MANIFEST_FILE), "manifest", &m).unwrap();
    assert!(matches!(
        read_dataset(dir.path()),
        Err(IoError::DimensionMismatch { field, .. }) if field == "moving_maps"
    ));
}

#[test]
fn out_of_range_match_rejected() {
    let ds = dataset(SceneKind::Drawer, 0, NoiseSpec::noiseless());
    let (dir, mut m) = written(&ds);
    let path = dir.path().join(&m.correspondences);
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("0 1 999999 0 1\n");
    std::fs::write(&path, &text).unwrap();
    m.checksums.remove(&m.correspondences);
    write_json(&dir.path().join(MANIFEST_FILE), "manifest", &m).unwrap();
    assert!(matches!(
        read_dataset(dir.path()),
        Err(IoError::DimensionMismatch { field, .. }) if field == "idx_a"
    ));
}

#[test]
fn ply_reads_float_coordinates() {
    let mut bytes = b"ply\nformat binary_little_endian 1.0\ncomment external\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar label\nend_header\n".to_vec();
    for (p, l) in [([1.0f32, 2.0, 3.0], 4u8), ([-0.5, 0.25, 8.0], 9)] {
        for c in p {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
        bytes.push(l);
    }
    let v = decode_ply(&bytes, Path::new("x.ply")).unwrap();
    assert_eq!(v.points, vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-0.5, 0.25, 8.0)]);
    assert_eq!(v.labels, Some(vec![4, 9]));
    assert_eq!(v.pixels, None);
}

#[test]
fn ply_rejects_bad_input() {
    let p = Path::new("x.ply");
    assert!(matches!(decode_ply(b"not a ply", p), Err(IoError::Parse { .. })));
    let ascii = b"ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nend_header\n";
    assert!(matches!(decode_ply(ascii, p), Err(IoError::Parse { .. })));
    let mut short = encode_ply(&PlyVertices {
        points: vec![Vec3::x(); 3],
        ..Default::default()
    });
    short.pop();
    assert!(matches!(decode_ply(&short, p), Err(IoError::Parse { .. })));
}

#[test]
fn ply_round_trip_is_bit_exact() {
    let v = PlyVertices {
        points: vec![Vec3::new(0.1, -1e-300, f64::MAX), Vec3::new(1.0 / 3.0, 2.0, -0.0)],
        labels: Some(vec![0, u16::MAX]),
        pixels: Some(vec![7, u32::MAX]),
    };
    let back = decode_ply(&encode_ply(&v), Path::new("x")).unwrap();
    assert_eq!(back.labels, v.labels);
    assert_eq!(back.pixels, v.pixels);
    for (a, b) in back.points.iter().zip(&v.points) {
        for k in 0..3 {
            assert_eq!(a[k].to_bits(), b[k].to_bits());
        }
    }
}

#[test]
fn correspondences_keep_empty_pairs_and_exact_confidence() {
    let sets = vec![
        CorrespondenceSet {
            frame_a: 0,
            frame_b: 1,
            matches: vec![
                Correspondence { a: 3, b: 4, confidence: 0.1 + 0.2 },
                Correspondence { a: 0, b: 9, confidence: 1.0 },
            ],
        },
        CorrespondenceSet { frame_a: 0, frame_b: 2, matches: vec![] },
    ];
    let text = encode_correspondences(&sets);
    assert_eq!(text.lines().count(), 2);
    let back = decode_correspondences(&text, &[[0, 1], [0, 2]], Path::new("c")).unwrap();
    assert_eq!(back, sets);
    assert!(decode_correspondences("0 5 1 1 1\n", &[[0, 1]], Path::new("c")).is_err());
    assert!(decode_correspondences("0 1 1 1\n", &[[0, 1]], Path::new("c")).is_err());
}

#[test]
fn map_header_is_height_then_width() {
    let mut m = ImageMap::zeros(3, 2);
    m.set(4, 0.75);
    let bytes = encode_map(&m);
    assert_eq!(&bytes[..8], &[2, 0, 0, 0, 3, 0, 0, 0]);
    assert_eq!(bytes.len(), 8 + 4 * 6);
    assert_eq!(decode_map(&bytes, Path::new("m")).unwrap(), m);
    assert!(decode_map(&bytes[..10], Path::new("m")).is_err());
}

#[test]
fn versioned_json_checks_version_and_kind() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.json");
    #[derive(Debug, PartialEq, serde::Serialize, serde::Deserialize)]
    struct Body {
        x: u32,
    }
    write_json(&path, "thing", &Body { x: 4 }).unwrap();
    assert_eq!(read_json::<Body>(&path, "thing").unwrap(), Body { x: 4 });
    assert!(matches!(read_json::<Body>(&path, "other"), Err(IoError::Parse { .. })));
    std::fs::write(&path, r#"{"schema_version": 99, "kind": "thing", "x": 4}"#).unwrap();
    assert!(matches!(
        read_json::<Body>(&path, "thing"),
        Err(IoError::SchemaVersion { found: 99, .. })
    ));
}

#[test]
fn noiseless_revolute_pipeline_recovers_axis() {
    let ds = dataset(SceneKind::CabinetDoor, 7, NoiseSpec::noiseless());
    let out = run_pipeline(&ds.name, &ds.observation, ds.ground_truth.as_ref(), &Config::default(), 0);
    assert_eq!(out.failure, None);
    let r = out.report.unwrap();
    assert!(r.refined.axis_error < 1e-3, "{r:?}");
    assert!(r.refined.position_error.unwrap() < 1e-3);
    assert!(!r.refined.type_error);
    assert_eq!(r.partition_iou, Some(1.0));
}

#[test]
fn insufficient_static_matches_becomes_failure_row() {
    let mut ds = dataset(SceneKind::CabinetDoor, 0, NoiseSpec::noiseless());
    for set in ds.observation.correspondences.iter_mut().filter(|s| s.frame_a == 0 && s.frame_b == 1) {
        for m in &mut set.matches {
            m.confidence = 0.5;
        }
    }
    let out = run_pipeline(&ds.name, &ds.observation, ds.ground_truth.as_ref(), &Config::default(), 0);
    let f = out.failure.unwrap();
    assert_eq!(f.stage, "coarse");
    assert!(out.coarse.is_none() && out.refine.is_none() && out.partition.is_none());
    let r = out.report.unwrap();
    assert!(r.failure.is_some());
    for j in [r.coarse, r.refined] {
        assert!(j.failure);
        assert_eq!(j.axis_error, FRAC_PI_2);
        assert_eq!(j.state_error, FRAC_PI_2);
        assert_eq!(j.position_error, Some(1.0));
    }
    assert_eq!(r.geometry.whole, 1.0);
    assert_eq!(r.refined_camera.unwrap().rotation, 1.0);
}

#[test]
fn pipeline_without_truth_has_no_report() {
    let ds = dataset(SceneKind::Drawer, 0, NoiseSpec::noiseless());
    let mut cfg = Config::default();
    cfg.refine.iterations = 5;
    let out = run_pipeline(&ds.name, &ds.observation, None, &cfg, 0);
    assert!(out.report.is_none() && out.failure.is_none());
    assert!(out.partition.is_some());
}

#[test]
fn same_seed_gives_identical_report_bytes() {
    let ds = dataset(SceneKind::Drawer, 2, NoiseSpec::standard());
    let mut cfg = Config::default();
    cfg.refine.iterations = 60;
    let run = || {
        let out = run_pipeline(&ds.name, &ds.observation, ds.ground_truth.as_ref(), &cfg, 3);
        (
            to_versioned_json("report", &out.report.unwrap()),
            to_versioned_json("refine", &out.refine.unwrap()),
        )
    };
    assert_eq!(run(), run());
}
