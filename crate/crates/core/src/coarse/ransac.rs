use super::CoarseError;
use crate::config::CoarseConfig;
use crate::geometry::{apply_joint, fit_rigid_transform, screw_decompose, JointModel, JointType, Vec3};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Joint hypothesis fitted to one frame pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFit {
    pub joint: JointModel,
    /// Joint motion between the two frames (radians or meters), `>= 0`
    /// along `joint.axis`.
    pub delta: f64,
    /// Mean over all matches of the prediction error truncated at the
    /// inlier radius.
    pub residual: f64,
    /// Mean prediction error over inliers only.
    pub inlier_residual: f64,
    pub inliers: usize,
}

/// Fits one joint hypothesis to aligned dynamic matches `src -> dst` with
/// RANSAC over minimal three-match samples, then refits on the consensus set.
pub fn estimate_joint_pair(
    src: &[Vec3],
    dst: &[Vec3],
    hypothesis: JointType,
    config: &CoarseConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PairFit, CoarseError> {
    assert_eq!(src.len(), dst.len());
    let n = src.len();
    if n < 3 {
        return Err(CoarseError::DegenerateMotion(hypothesis));
    }
    let radius = config.inlier_radius;
    let mut best: Option<(usize, f64, JointModel, f64)> = None;
    let mut idx_src = [Vec3::zeros(); 3];
    let mut idx_dst = [Vec3::zeros(); 3];
    for _ in 0..config.ransac_iterations {
        let picks = sample(rng, n, 3);
        for (k, i) in picks.iter().enumerate() {
            idx_src[k] = src[i];
            idx_dst[k] = dst[i];
        }
        let Some((model, delta)) = fit_model(&idx_src, &idx_dst, hypothesis) else {
            continue;
        };
        let (count, cost) = consensus(src, dst, &model, delta, radius);
        let better = match &best {
            None => true,
            Some((c, s, _, _)) => count > *c || (count == *c && cost < *s),
        };
        if better {
            best = Some((count, cost, model, delta));
        }
    }
    let (_, _, model, delta) = best.ok_or(CoarseError::DegenerateMotion(hypothesis))?;

    let motion = apply_joint(&model, delta);
    let (in_src, in_dst): (Vec<Vec3>, Vec<Vec3>) = src
        .iter()
        .zip(dst)
        .filter(|(s, d)| (motion.apply(s) - *d).norm() < radius)
        .map(|(s, d)| (*s, *d))
        .unzip();
    let (model, delta) = fit_model(&in_src, &in_dst, hypothesis).ok_or(CoarseError::DegenerateMotion(hypothesis))?;

    let motion = apply_joint(&model, delta);
    let mut truncated = 0.0;
    let mut inlier_sum = 0.0;
    let mut inliers = 0;
    for (s, d) in src.iter().zip(dst) {
        let e = (motion.apply(s) - d).norm();
        if e < radius {
            inliers += 1;
            inlier_sum += e;
        }
        truncated += e.min(radius);
    }
    Ok(PairFit {
        joint: model,
        delta,
        residual: truncated / n as f64,
        inlier_residual: if inliers > 0 { inlier_sum / inliers as f64 } else { radius },
        inliers,
    })
}

/// Least-squares model under one hypothesis, `None` when degenerate.
fn fit_model(src: &[Vec3], dst: &[Vec3], hypothesis: JointType) -> Option<(JointModel, f64)> {
    match hypothesis {
        JointType::Revolute => {
            let t = fit_rigid_transform(src, dst, &vec![1.0; src.len()]).ok()?;
            let r = screw_decompose(&t).revolute?;
            Some((JointModel::revolute(r.axis, r.pivot), r.angle))
        }
        JointType::Prismatic => {
            if src.is_empty() {
                return None;
            }
            let shift = dst.iter().zip(src).map(|(d, s)| d - s).sum::<Vec3>() / src.len() as f64;
            let p = screw_decompose(&crate::geometry::RigidTransform::from_translation(shift)).prismatic?;
            Some((JointModel::prismatic(p.axis), p.distance))
        }
    }
}

fn consensus(src: &[Vec3], dst: &[Vec3], model: &JointModel, delta: f64, radius: f64) -> (usize, f64) {
    let motion = apply_joint(model, delta);
    let mut count = 0;
    let mut cost = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let e = (motion.apply(s) - d).norm();
        if e < radius {
            count += 1;
        }
        cost += e.min(radius);
    }
    (count, cost)
}
