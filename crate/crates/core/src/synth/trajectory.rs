use super::SceneSpec;
use crate::geometry::{so3, RigidTransform, Vec3};
use crate::rng::{self, domain};
use nalgebra::{Rotation3, UnitQuaternion};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Gaussian random walk of world-from-camera poses.
///
/// A new target is drawn around the current target every `[lo, hi]` frames
/// and the pose is interpolated toward it (linear translation, slerp
/// rotation). Frame 0 is the identity.
pub(crate) fn camera_trajectory(spec: &SceneSpec) -> Vec<RigidTransform> {
    let n = spec.frame_count();
    let mut poses = vec![RigidTransform::identity(); n];
    let Some([lo, hi]) = spec.retarget_interval else {
        return poses;
    };
    let mut rng = rng::stream(spec.seed, domain::CAMERA, 0);
    let pos_noise = Normal::new(0.0, spec.camera_noise.position.max(0.0)).unwrap();
    let rot_noise = Normal::new(0.0, spec.camera_noise.orientation.max(0.0)).unwrap();

    let mut start = RigidTransform::identity();
    let mut frame = 0usize;
    while frame + 1 < n {
        let steps = rng.random_range(lo.max(1)..=hi.max(lo).max(1)) as usize;
        let dp = Vec3::new(pos_noise.sample(&mut rng), pos_noise.sample(&mut rng), pos_noise.sample(&mut rng));
        let dr = Vec3::new(rot_noise.sample(&mut rng), rot_noise.sample(&mut rng), rot_noise.sample(&mut rng));
        let target = RigidTransform::new(start.rotation * so3::exp(&dr), start.translation + dp);
        let q0 = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(start.rotation));
        let q1 = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(target.rotation));
        for k in 1..=steps {
            if frame + k >= n {
                break;
            }
            let a = k as f64 / steps as f64;
            let q = q0.slerp(&q1, a);
            poses[frame + k] = RigidTransform::new(
                q.to_rotation_matrix().into_inner(),
                start.translation * (1.0 - a) + target.translation * a,
            );
        }
        frame += steps;
        start = target;
    }
    poses
}
