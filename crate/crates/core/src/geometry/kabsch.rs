use super::{GeometryError, RigidTransform, Vec3};
use nalgebra::{Matrix3, SymmetricEigen};

/// Weighted least-squares rigid alignment of matched point sets
/// (Kabsch/Umeyama without scale).
///
/// Minimizes `sum_i w_i |T src_i - dst_i|^2`. Fails when the weighted
/// source points are collinear or fewer than three carry weight.
pub fn fit_rigid_transform(
    src: &[Vec3],
    dst: &[Vec3],
    weights: &[f64],
) -> Result<RigidTransform, GeometryError> {
    if src.len() != dst.len() || src.len() != weights.len() {
        return Err(GeometryError::LengthMismatch(format!(
            "src {}, dst {}, weights {}",
            src.len(),
            dst.len(),
            weights.len()
        )));
    }
    let active = weights.iter().filter(|w| **w > 0.0).count();
    if active < 3 {
        return Err(GeometryError::DegenerateConfiguration(format!(
            "{active} weighted correspondences, need 3"
        )));
    }
    let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    let mut cs = Vec3::zeros();
    let mut cd = Vec3::zeros();
    for ((s, d), w) in src.iter().zip(dst).zip(weights) {
        if *w > 0.0 {
            cs += s * *w;
            cd += d * *w;
        }
    }
    cs /= total;
    cd /= total;

    let mut cross = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for ((s, d), w) in src.iter().zip(dst).zip(weights) {
        if *w > 0.0 {
            let a = s - cs;
            let b = d - cd;
            cross += a * b.transpose() * *w;
            scatter += a * a.transpose() * *w;
        }
    }

    let mut eig = SymmetricEigen::new(scatter).eigenvalues;
    eig.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if eig[0] <= 0.0 || eig[1] <= 1e-12 * eig[0] {
        return Err(GeometryError::DegenerateConfiguration(
            "weighted source points are collinear".into(),
        ));
    }

    let svd = cross.svd(true, true);
    let u = svd.u.expect("svd u");
    let v = svd.v_t.expect("svd v_t").transpose();
    let mut correction = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        correction[(2, 2)] = -1.0;
    }
    let rotation = v * correction * u.transpose();
    Ok(RigidTransform {
        rotation,
        translation: cd - rotation * cs,
    })
}
