//! Rotation-matrix helpers: exponential and logarithm maps, the right
//! Jacobian, and projection onto SO(3).

use super::Vec3;
use nalgebra::Matrix3;

#[inline]
pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues formula for the axis-angle vector `omega`.
pub fn exp(omega: &Vec3) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    if theta2 < 1e-16 {
        return Matrix3::identity() + k + k * k * 0.5;
    }
    let theta = theta2.sqrt();
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / theta2;
    Matrix3::identity() + k * a + k * k * b
}

/// Axis-angle vector of a rotation matrix, angle in `[0, pi]`.
///
/// Near `pi` the axis is read from the symmetric part, where the
/// skew-symmetric part loses precision.
pub fn log(r: &Matrix3<f64>) -> Vec3 {
    let s = Vec3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    ) * 0.5;
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = s.norm();
    let theta = sin.atan2(cos);
    if theta < 1e-12 {
        return s;
    }
    if cos > 0.0 {
        return s * (theta / sin);
    }
    // (R + R^T)/2 - cos I = (1 - cos) a a^T
    let b = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos;
    let mut col = 0;
    for i in 1..3 {
        if b[(i, i)] > b[(col, col)] {
            col = i;
        }
    }
    let mut axis = Vec3::new(b[(0, col)], b[(1, col)], b[(2, col)]).normalize();
    if axis.dot(&s) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Right Jacobian `J_r` with `exp(w + d) ~= exp(w) exp(J_r(w) d)`.
pub fn right_jacobian(omega: &Vec3) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    if theta2 < 1e-10 {
        return Matrix3::identity() - k * 0.5 + k * k / 6.0;
    }
    let theta = theta2.sqrt();
    let a = (1.0 - theta.cos()) / theta2;
    let b = (theta - theta.sin()) / (theta2 * theta);
    Matrix3::identity() - k * a + k * k * b
}

/// Closest rotation in the Frobenius sense.
pub fn project_to_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut d = Matrix3::identity();
        d[(2, 2)] = -1.0;
        r = u * d * vt;
    }
    r
}
