use super::*;
use crate::coarse::estimate_coarse;
use crate::config::{CoarseConfig, Config};
use crate::synth::{generate_scene, NoiseSpec, SceneKind, SceneSpec};
use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn door() -> JointModel {
    JointModel::revolute(Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.3, 0.0, 1.5))
}

fn unit(v: [f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2]).normalize()
}

#[test]
fn perfect_prediction_scores_zero() {
    let states = [0.0, 0.2, 0.5];
    let m = joint_metrics(Some((&door(), &states)), &door(), &states);
    assert_eq!(m.axis_error, 0.0);
    assert_eq!(m.position_error, Some(0.0));
    assert!(!m.type_error && !m.failure);
    assert_eq!(m.state_error, 0.0);
}

#[test]
fn failure_takes_fixed_values() {
    let m = joint_metrics(None, &door(), &[0.0, 0.3]);
    assert_eq!(m.axis_error, std::f64::consts::FRAC_PI_2);
    assert_eq!(m.position_error, Some(1.0));
    assert_eq!(m.state_error, std::f64::consts::FRAC_PI_2);
    assert!(m.failure && m.type_error);

    let drawer = JointModel::prismatic(Vec3::z());
    let m = joint_metrics(None, &drawer, &[0.0, 0.1]);
    assert_eq!(m.axis_error, std::f64::consts::FRAC_PI_2);
    assert_eq!(m.position_error, None);
    assert_eq!(m.state_error, 1.0);

    // wrong state count
    let m = joint_metrics(Some((&drawer, &[0.0])), &drawer, &[0.0, 0.1]);
    assert!(m.failure);
}

#[test]
fn axis_error_is_undirected() {
    let x = JointModel::prismatic(Vec3::x());
    let y = JointModel::prismatic(Vec3::y());
    let nx = JointModel::prismatic(-Vec3::x());
    let s = [0.0, 0.1];
    assert_abs_diff_eq!(
        joint_metrics(Some((&x, &s)), &y, &s).axis_error,
        std::f64::consts::FRAC_PI_2,
        epsilon = 1e-15
    );
    let flipped = joint_metrics(Some((&nx, &[0.0, -0.1])), &x, &s);
    assert_eq!(flipped.axis_error, 0.0);
    assert_eq!(flipped.state_error, 0.0);
}

#[test]
fn position_error_between_lines() {
    // parallel lines 0.25 apart
    let gt = door();
    let pred = JointModel::revolute(gt.axis, gt.pivot + Vec3::new(0.0, 0.0, 0.25));
    let m = joint_metrics(Some((&pred, &[0.0, 0.1])), &gt, &[0.0, 0.1]);
    assert_abs_diff_eq!(m.position_error.unwrap(), 0.25, epsilon = 1e-12);
    // skew: y-axis through origin vs x-axis through (0, 0, 0.4)
    let a = JointModel::revolute(Vec3::y(), Vec3::zeros());
    let b = JointModel::revolute(Vec3::x(), Vec3::new(0.0, 0.0, 0.4));
    let m = joint_metrics(Some((&a, &[0.0, 0.1])), &b, &[0.0, 0.1]);
    assert_abs_diff_eq!(m.position_error.unwrap(), 0.4, epsilon = 1e-12);
}

#[test]
fn wrong_type_reports_failure_values_for_position_and_state() {
    let pred = JointModel::prismatic(Vec3::y());
    let m = joint_metrics(Some((&pred, &[0.0, 0.3])), &door(), &[0.0, 0.3]);
    assert!(m.type_error && !m.failure);
    assert_eq!(m.axis_error, 0.0);
    assert_eq!(m.position_error, Some(1.0));
    assert_eq!(m.state_error, std::f64::consts::FRAC_PI_2);
}

#[test]
fn state_error_is_mean_and_max() {
    let gt = [0.0, 0.1, 0.2, 0.3];
    let pred = [0.0, 0.12, 0.2, 0.26];
    let m = joint_metrics(Some((&door(), &pred)), &door(), &gt);
    assert_abs_diff_eq!(m.state_error, (0.02 + 0.04) / 4.0, epsilon = 1e-15);
    assert_abs_diff_eq!(m.max_state_error, 0.04, epsilon = 1e-15);
}

fn brute_symmetric(a: &[Vec3], b: &[Vec3]) -> f64 {
    let one = |q: &[Vec3], t: &[Vec3]| {
        q.iter()
            .map(|p| t.iter().map(|x| (x - p).norm()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / q.len() as f64
    };
    0.5 * (one(a, b) + one(b, a))
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

#[test]
fn geometry_identical_and_unit_separated() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cloud = random_cloud(&mut rng, 300);
    let flags: Vec<bool> = (0..300).map(|i| i % 3 == 0).collect();
    for samples in [0, 10_000] {
        let g = geometry_metrics(&cloud, &flags, &cloud, &flags, samples, 7);
        assert_eq!(g, GeometryMetrics { whole: 0.0, movable: 0.0, fixed: 0.0 }, "samples {samples}");
    }
    let a = [Vec3::zeros()];
    let b = [Vec3::new(0.0, 0.0, 1.0)];
    assert_eq!(sampled_chamfer(&a, &b, 0, 0, 0), 1.0);
    assert_eq!(sampled_chamfer(&a, &b, 10_000, 0, 0), 1.0);
}

#[test]
fn geometry_matches_brute_force_without_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random_cloud(&mut rng, 500);
    let b = random_cloud(&mut rng, 500);
    let fa: Vec<bool> = (0..500).map(|i| i < 200).collect();
    let fb: Vec<bool> = (0..500).map(|i| i % 2 == 0).collect();
    let g = geometry_metrics(&a, &fa, &b, &fb, 0, 0);
    let part = |c: &[Vec3], f: &[bool], w: bool| -> Vec<Vec3> {
        c.iter().zip(f).filter(|(_, x)| **x == w).map(|(p, _)| *p).collect()
    };
    assert_abs_diff_eq!(g.whole, brute_symmetric(&a, &b), epsilon = 1e-12);
    assert_abs_diff_eq!(g.movable, brute_symmetric(&part(&a, &fa, true), &part(&b, &fb, true)), epsilon = 1e-12);
    assert_abs_diff_eq!(g.fixed, brute_symmetric(&part(&a, &fa, false), &part(&b, &fb, false)), epsilon = 1e-12);
}

#[test]
fn empty_part_scores_one() {
    let cloud = vec![Vec3::zeros(), Vec3::x()];
    let g = geometry_metrics(&cloud, &[false, false], &cloud, &[true, false], 0, 0);
    assert_eq!(g.movable, 1.0);
    assert_eq!(g.whole, 0.0);
}

#[test]
fn sampled_geometry_is_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_cloud(&mut rng, 2000);
    let b = random_cloud(&mut rng, 1500);
    let f = vec![false; 2000];
    let g = vec![false; 1500];
    assert_eq!(geometry_metrics(&a, &f, &b, &g, 10_000, 4), geometry_metrics(&a, &f, &b, &g, 10_000, 4));
    assert_ne!(geometry_metrics(&a, &f, &b, &g, 10_000, 4), geometry_metrics(&a, &f, &b, &g, 10_000, 5));
}

fn rect(w: u32, h: u32, x0: u32, x1: u32) -> ImageMap {
    let mut m = ImageMap::zeros(w, h);
    for y in 0..h {
        for x in x0..x1 {
            m.set(y * w + x, 1.0);
        }
    }
    m
}

#[test]
fn miou_cases() {
    let a = rect(16, 8, 0, 8);
    assert_eq!(miou(std::slice::from_ref(&a), std::slice::from_ref(&a)), 1.0);
    assert_eq!(miou(std::slice::from_ref(&a), &[rect(16, 8, 8, 16)]), 0.0);
    // half overlap: pixel counts give 32 / 96
    let b = rect(16, 8, 4, 12);
    let inter = a.data.iter().zip(&b.data).filter(|(x, y)| **x > 0.0 && **y > 0.0).count();
    let union = a.data.iter().zip(&b.data).filter(|(x, y)| **x > 0.0 || **y > 0.0).count();
    assert_abs_diff_eq!(miou(std::slice::from_ref(&a), std::slice::from_ref(&b)), inter as f64 / union as f64, epsilon = 1e-15);
    assert_abs_diff_eq!(miou(std::slice::from_ref(&a), &[b]), 1.0 / 3.0, epsilon = 1e-15);
    // empty frame counts 1, averaged with a disjoint frame
    let empty = ImageMap::zeros(16, 8);
    assert_eq!(miou(&[empty.clone(), a.clone()], &[empty, rect(16, 8, 8, 16)]), 0.5);
}

#[test]
fn miou_threshold_is_one_half() {
    let mut p = ImageMap::zeros(2, 1);
    p.set(0, 0.5);
    p.set(1, 0.49);
    let mut g = ImageMap::zeros(2, 1);
    g.set(0, 1.0);
    assert_eq!(miou(&[p], &[g]), 1.0);
}

#[test]
fn partition_iou_counts_points() {
    assert_eq!(partition_iou(&[true, false, true], &[true, false, true]), 1.0);
    assert_eq!(partition_iou(&[true, true, false], &[true, false, true]), 1.0 / 3.0);
    assert_eq!(partition_iou(&[false, false], &[false, false]), 1.0);
}

#[test]
fn camera_metrics_cases() {
    let id = vec![RigidTransform::identity(); 4];
    let m = camera_metrics(&id, &id);
    assert_eq!((m.rotation, m.translation), (0.0, 0.0));
    let mut turned = id.clone();
    turned[2] = RigidTransform::from_axis_angle(&(Vec3::z() * std::f64::consts::FRAC_PI_2), Vec3::new(0.0, 0.4, 0.0));
    let m = camera_metrics(&turned, &id);
    assert_abs_diff_eq!(m.rotation, std::f64::consts::FRAC_PI_2 / 4.0, epsilon = 1e-12);
    assert_abs_diff_eq!(m.translation, 0.1, epsilon = 1e-15);
    assert_abs_diff_eq!(m.max_rotation, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
}

#[test]
fn noiseless_coarse_cameras_match_synth() {
    let (obs, gt) = generate_scene(&SceneSpec::template(SceneKind::CabinetDoor, 4, NoiseSpec::noiseless())).unwrap();
    let c = estimate_coarse(&obs, &CoarseConfig::default(), 0).unwrap();
    let m = camera_metrics(&c.cameras, &gt.cameras);
    assert!(m.rotation < 1e-9 && m.translation < 1e-9, "{m:?}");
}

#[test]
fn mean_std_population() {
    assert_eq!(MeanStd::of(&[2.0]), MeanStd { mean: 2.0, std: 0.0 });
    let m = MeanStd::of(&[1.0, 3.0]);
    assert_eq!((m.mean, m.std), (2.0, 1.0));
}

fn report(axis: f64, miou: Option<f64>) -> SceneReport {
    let j = JointMetrics {
        axis_error: axis,
        position_error: None,
        type_error: false,
        state_error: 0.0,
        max_state_error: 0.0,
        failure: false,
    };
    SceneReport {
        scene: "s".into(),
        failure: None,
        coarse: j,
        refined: j,
        coarse_camera: None,
        refined_camera: None,
        geometry: GeometryMetrics { whole: 0.0, movable: 0.0, fixed: 0.0 },
        miou,
        partition_iou: None,
    }
}

#[test]
fn aggregates_recompute_from_rows() {
    let rows = vec![report(0.1, Some(1.0)), report(0.3, None), report(0.2, Some(0.5))];
    let r = RunReport::new(3, rows.clone());
    let axes: Vec<f64> = rows.iter().map(|s| s.refined.axis_error).collect();
    assert_eq!(r.aggregate["refined_axis_error"], MeanStd::of(&axes));
    assert_eq!(r.aggregate["miou"], MeanStd::of(&[1.0, 0.5]));
    assert!(!r.aggregate.contains_key("refined_position_error"));
    assert_eq!(r.conventions, CONVENTIONS);
}

#[test]
fn cross_seed_statistics() {
    let runs = vec![
        RunReport::new(0, vec![report(0.1, None), report(0.3, None)]),
        RunReport::new(1, vec![report(0.3, None), report(0.5, None)]),
    ];
    let v = VarianceReport::new(runs);
    assert_eq!(v.seeds, vec![0, 1]);
    // per-seed means 0.2 and 0.4
    let s = v.cross_seed["refined_axis_error"];
    assert_abs_diff_eq!(s.mean, 0.3, epsilon = 1e-15);
    assert_abs_diff_eq!(s.std, 0.1, epsilon = 1e-15);
}

fn quick_config() -> Config {
    let mut c = Config::default();
    c.refine.iterations = 20;
    c.eval.geometry_samples = 500;
    c
}

#[test]
fn harness_single_seed_and_repeat() {
    let scenes = vec![(
        "drawer-0".to_string(),
        SceneSpec::template(SceneKind::Drawer, 0, NoiseSpec::standard()),
    )];
    let cfg = quick_config();
    let one = variance_harness(&scenes, &[9], &cfg).unwrap();
    assert!(one.cross_seed.values().all(|s| s.std == 0.0));
    let twice = variance_harness(&scenes, &[9, 9], &cfg).unwrap();
    assert_eq!(twice.runs[0].scenes, twice.runs[1].scenes);
    assert_eq!(twice.runs[0].scenes, one.runs[0].scenes);
    assert!(twice.cross_seed.values().all(|s| s.std == 0.0));
    assert_eq!(variance_harness(&scenes, &[], &cfg), Err(EvalError::NoSeeds));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flip_symmetry(a in prop::array::uniform3(-1.0f64..1.0), g in prop::array::uniform3(-1.0f64..1.0),
                     p in prop::array::uniform3(-1.0f64..1.0), s in prop::collection::vec(-1.0f64..1.0, 3)) {
        prop_assume!(Vec3::from(a).norm() > 0.1 && Vec3::from(g).norm() > 0.1);
        let pred = JointModel::revolute(unit(a), Vec3::from(p));
        let gt = JointModel::revolute(unit(g), Vec3::zeros());
        let gs = [0.0, 0.3, -0.2];
        let m = joint_metrics(Some((&pred, &s)), &gt, &gs);
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        let f = joint_metrics(Some((&pred.flipped(), &neg)), &gt, &gs);
        prop_assert_eq!(m.axis_error, f.axis_error);
        prop_assert!((m.position_error.unwrap() - f.position_error.unwrap()).abs() < 1e-12);
        prop_assert!((m.state_error - f.state_error).abs() < 1e-15);
    }

    #[test]
    fn axis_error_matches_atan2_oracle(a in prop::array::uniform3(-1.0f64..1.0), g in prop::array::uniform3(-1.0f64..1.0)) {
        prop_assume!(Vec3::from(a).norm() > 0.1 && Vec3::from(g).norm() > 0.1);
        let (ua, ug) = (unit(a), unit(g));
        let m = joint_metrics(Some((&JointModel::prismatic(ua), &[0.0, 0.0])), &JointModel::prismatic(ug), &[0.0, 0.0]);
        let oracle = ua.cross(&ug).norm().atan2(ua.dot(&ug).abs());
        prop_assert!((m.axis_error - oracle).abs() < 1e-7);
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&m.axis_error));
    }

    #[test]
    fn metrics_non_negative(s in prop::collection::vec(-2.0f64..2.0, 4), a in prop::array::uniform3(-1.0f64..1.0)) {
        prop_assume!(Vec3::from(a).norm() > 0.1);
        let m = joint_metrics(Some((&JointModel::revolute(unit(a), Vec3::x()), &s)), &door(), &[0.0, 0.1, 0.2, 0.3]);
        prop_assert!(m.axis_error >= 0.0 && m.position_error.unwrap() >= 0.0 && m.state_error >= 0.0);
    }
}
