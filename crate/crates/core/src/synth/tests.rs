use super::*;
use crate::geometry::JointType;

fn two_box_spec() -> SceneSpec {
    let mut spec = SceneSpec::template(SceneKind::CabinetDoor, 11, NoiseSpec::noiseless());
    spec.retarget_interval = None;
    spec
}

#[test]
fn deterministic_in_seed() {
    let spec = SceneSpec::template(SceneKind::Drawer, 5, NoiseSpec::standard());
    let (o1, g1) = generate_scene(&spec).unwrap();
    let (o2, g2) = generate_scene(&spec).unwrap();
    assert_eq!(o1, o2);
    assert_eq!(g1, g2);
}

#[test]
fn fixed_camera_without_retargeting() {
    let (_, gt) = generate_scene(&two_box_spec()).unwrap();
    for c in &gt.cameras {
        assert_eq!(*c, RigidTransform::identity());
    }
}

#[test]
fn schedule_copied_exactly() {
    let spec = SceneSpec::template(SceneKind::CabinetDoor, 2, NoiseSpec::standard());
    let (_, gt) = generate_scene(&spec).unwrap();
    assert_eq!(gt.states.states, spec.states);
    assert_eq!(gt.cameras[0], RigidTransform::identity());
}

/// Independent re-evaluation of the forward model: every observed movable
/// point equals a canonical movable sample moved by the joint and viewed
/// from the frame camera, up to the point noise.
#[test]
fn forward_model_oracle() {
    let mut spec = SceneSpec::template(SceneKind::CabinetDoor, 7, NoiseSpec::noiseless());
    spec.point_noise = 0.002;
    let (obs, gt) = generate_scene(&spec).unwrap();
    let movable: Vec<Vec3> = gt
        .object_cloud
        .points
        .iter()
        .zip(gt.object_cloud.labels.as_ref().unwrap())
        .filter(|(_, l)| **l == gt.movable_part)
        .map(|(p, _)| *p)
        .collect();
    let tol = 3.0 * spec.point_noise * 3f64.sqrt();
    let t = spec.frame_count() - 1;
    let expected: Vec<Vec3> = {
        let k = apply_joint(&gt.joint, gt.states.states[t]);
        let view = gt.cameras[t].inverse();
        movable.iter().map(|p| view.apply(&k.apply(p))).collect()
    };
    let mut checked = 0;
    for (i, &pixel) in obs.frames[t].pixels.iter().enumerate() {
        if gt.moving_maps[t].get(pixel) < 0.5 {
            continue;
        }
        let p = obs.frames[t].points[i];
        let best = expected.iter().map(|e| (e - p).norm()).fold(f64::INFINITY, f64::min);
        assert!(best < tol, "movable point {i} off by {best}");
        checked += 1;
    }
    assert!(checked > 50);
}

#[test]
fn moving_map_matches_joint_motion() {
    let spec = SceneSpec::template(SceneKind::Drawer, 4, NoiseSpec::noiseless());
    let (obs, gt) = generate_scene(&spec).unwrap();
    let canon = PointCloud::new(gt.object_cloud.points.clone());
    for t in 1..spec.frame_count() {
        let k = apply_joint(&gt.joint, gt.states.states[t]);
        let moved: Vec<Vec3> = gt
            .object_cloud
            .points
            .iter()
            .zip(gt.object_cloud.labels.as_ref().unwrap())
            .filter(|(_, l)| **l == gt.movable_part)
            .map(|(p, _)| k.apply(p))
            .collect();
        let index = crate::geometry::NearestNeighborIndex::new(&moved);
        for (p, &pixel) in obs.frames[t].points.iter().zip(&obs.frames[t].pixels) {
            if gt.moving_maps[t].get(pixel) > 0.5 {
                let world = gt.cameras[t].apply(p);
                let (_, _, d) = index.nearest(&world).unwrap();
                assert!(d < 1e-6 + 1e-9, "frame {t}: {d}");
            }
        }
    }
    assert!(!canon.is_empty());
}

#[test]
fn static_correspondences_agree_in_world() {
    let spec = SceneSpec::template(SceneKind::CabinetDoor, 9, NoiseSpec { point_noise: 0.003, ..NoiseSpec::noiseless() });
    let (obs, gt) = generate_scene(&spec).unwrap();
    let tol = 3.0 * spec.point_noise * 2f64.sqrt() * 3f64.sqrt();
    let mut checked = 0;
    for set in &obs.correspondences {
        for m in &set.matches {
            let (fa, fb) = (&obs.frames[set.frame_a], &obs.frames[set.frame_b]);
            let static_a = gt.moving_maps[set.frame_a].get(fa.pixels[m.a as usize]) < 0.5;
            let static_b = gt.moving_maps[set.frame_b].get(fb.pixels[m.b as usize]) < 0.5;
            if !(static_a && static_b) {
                continue;
            }
            let pa = gt.cameras[set.frame_a].apply(&fa.points[m.a as usize]);
            let pb = gt.cameras[set.frame_b].apply(&fb.points[m.b as usize]);
            assert!((pa - pb).norm() < tol);
            checked += 1;
        }
    }
    assert!(checked > 1000);
}

#[test]
fn correspondences_cover_three_step_window() {
    let spec = SceneSpec::template(SceneKind::Drawer, 1, NoiseSpec::noiseless());
    let (obs, _) = generate_scene(&spec).unwrap();
    let pairs: Vec<(usize, usize)> = obs.correspondences.iter().map(|c| (c.frame_a, c.frame_b)).collect();
    let n = spec.frame_count();
    let mut expected = Vec::new();
    for a in 0..n {
        for b in a + 1..(a + 4).min(n) {
            expected.push((a, b));
        }
    }
    assert_eq!(pairs, expected);
    assert!(obs.correspondences.iter().all(|c| c.matches.iter().all(|m| m.confidence == 1.0)));
}

#[test]
fn outlier_count_follows_rate() {
    let clean = generate_scene(&SceneSpec::template(SceneKind::Drawer, 3, NoiseSpec::noiseless())).unwrap().0;
    let spec = SceneSpec::template(SceneKind::Drawer, 3, NoiseSpec { outlier_rate: 0.2, ..NoiseSpec::noiseless() });
    let noisy = generate_scene(&spec).unwrap().0;
    for (c, n) in clean.correspondences.iter().zip(&noisy.correspondences) {
        let inliers = c.matches.len();
        let outliers = n.matches.len() - inliers;
        assert_eq!(outliers, (inliers as f64 * 0.25).round() as usize);
        assert!(n
            .matches
            .iter()
            .filter(|m| m.confidence < 1.0)
            .all(|m| (0.9..1.0).contains(&m.confidence)));
    }
}

#[test]
fn single_cuboid_faces_covered() {
    let cube = Cuboid {
        center: [0.0, 0.0, 1.5],
        half_extents: [0.2, 0.15, 0.1],
        orientation: [0.3, -0.2, 0.1],
        density: 60.0,
    };
    let mut spec = two_box_spec();
    spec.parts = vec![PartSpec { id: 0, cuboids: vec![cube] }];
    spec.movable_part = 0;
    let cloud = fuse_surface_cloud(&spec).unwrap();
    let posed = render::PosedCuboid::new(&cube);
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut local = Vec3::zeros();
            local[axis] = sign * posed.half[axis];
            let center = posed.rotation * local + posed.center;
            let best = cloud.points.iter().map(|p| (p - center).norm()).fold(f64::INFINITY, f64::min);
            // within a jittered half cell diagonal of some sample
            let reach = (0.5 + spec.sample_jitter / 2.0) * 2f64.sqrt() / cube.density;
            assert!(best <= reach + 1e-12, "face {axis}{sign} nearest {best}");
        }
    }
}

#[test]
fn duplicate_views_fuse_identically() {
    let spec = two_box_spec();
    let samples = sample_surfaces(&spec);
    let views = fusion_viewpoints(&samples);
    let doubled: Vec<_> = views.iter().chain(views.iter()).copied().collect();
    assert_eq!(fuse_from_views(&spec, &samples, &views), fuse_from_views(&spec, &samples, &doubled));
}

#[test]
fn voxel_dedup_keeps_every_distinct_sample() {
    let spec = two_box_spec();
    let samples = sample_surfaces(&spec);
    let (kept, seen) = fuse_from_views(&spec, &samples, &fusion_viewpoints(&samples));
    assert_eq!(kept.len(), seen);
}

#[test]
fn empty_parts_rejected() {
    let mut spec = two_box_spec();
    spec.parts.clear();
    assert!(matches!(fuse_surface_cloud(&spec), Err(SynthError::InvalidSpec(_))));
    assert!(matches!(generate_scene(&spec), Err(SynthError::InvalidSpec(_))));
}

#[test]
fn interior_segment_appears_later() {
    let spec = SceneSpec::template(SceneKind::DrawerWithInterior, 5, NoiseSpec::noiseless());
    let (obs, _) = generate_scene(&spec).unwrap();
    let late: Vec<_> = obs.segments.iter().filter(|s| !s.present_in_frame0()).collect();
    let ids: Vec<u32> = late.iter().map(|s| s.id).collect();
    // interior box faces are 18..24; the body front (5) is uncovered by the panel
    assert!(ids.iter().all(|&id| id == 5 || (18..24).contains(&id)), "{ids:?}");
    assert!(late.iter().any(|s| s.id >= 18 && s.total_pixels() > 20), "{ids:?}");
    assert_eq!(spec.joint.joint_type, JointType::Prismatic);
}

#[test]
fn template_frames_nonempty_and_door_visible() {
    for kind in [SceneKind::CabinetDoor, SceneKind::Drawer, SceneKind::DrawerWithInterior] {
        for seed in 0..4 {
            let spec = SceneSpec::template(kind, seed, NoiseSpec::noiseless());
            let (obs, gt) = generate_scene(&spec).unwrap();
            for t in 0..spec.frame_count() {
                assert!(obs.frames[t].len() > 500, "{kind:?} seed {seed} frame {t}");
                assert!(gt.moving_maps[t].count_nonzero() > 100, "{kind:?} seed {seed} frame {t}");
            }
        }
    }
}

#[test]
fn spec_file_accepts_template_or_full_spec() {
    let t: SpecFile = serde_json::from_str(r#"{"template": "drawer", "seed": 4}"#).unwrap();
    assert_eq!(t.clone().into_spec(), SceneSpec::template(SceneKind::Drawer, 4, NoiseSpec::noiseless()));
    let full = SceneSpec::template(SceneKind::CabinetDoor, 2, NoiseSpec::standard());
    let f: SpecFile = serde_json::from_str(&serde_json::to_string(&full).unwrap()).unwrap();
    assert_eq!(f.into_spec(), full);
    assert!(serde_json::from_str::<SpecFile>(r#"{"template": "drawer", "seed": 4, "extra": 1}"#).is_err());
}

#[test]
fn suite_is_half_revolute() {
    let s = suite(NoiseSpec::standard());
    assert_eq!(s.len(), 100);
    let revolute = s.iter().filter(|t| t.spec().joint.joint_type == JointType::Revolute).count();
    assert_eq!(revolute, 50);
    let names: std::collections::BTreeSet<String> = s.iter().map(TemplateRef::name).collect();
    assert_eq!(names.len(), 100);
}
