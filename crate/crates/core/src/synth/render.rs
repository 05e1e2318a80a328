//! Surface sampling of cuboid parts and point z-buffer rendering.

use super::{Cuboid, SceneSpec};
use crate::geometry::{so3, RigidTransform, Vec3};
use crate::rng::{self, domain};
use crate::scene::Intrinsics;
use nalgebra::Matrix3;
use rand::Rng;

/// One surface sample of the object at the canonical state.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub position: Vec3,
    pub part: u16,
    pub segment: u32,
    pub movable: bool,
}

/// Cuboid placed in the world.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PosedCuboid {
    pub rotation: Matrix3<f64>,
    pub center: Vec3,
    pub half: Vec3,
}

impl PosedCuboid {
    pub fn new(c: &Cuboid) -> Self {
        Self {
            rotation: so3::exp(&Vec3::from(c.orientation)),
            center: Vec3::from(c.center),
            half: Vec3::from(c.half_extents),
        }
    }

    pub fn moved(&self, t: &RigidTransform) -> Self {
        Self {
            rotation: t.rotation * self.rotation,
            center: t.apply(&self.center),
            half: self.half,
        }
    }

    /// True when the open segment `eye -> p` passes through the interior.
    fn blocks(&self, eye: &Vec3, p: &Vec3) -> bool {
        let rt = self.rotation.transpose();
        let o = rt * (eye - self.center);
        let d = rt * (p - eye);
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for k in 0..3 {
            if d[k].abs() < 1e-15 {
                if o[k].abs() >= self.half[k] {
                    return false;
                }
                continue;
            }
            let a = (-self.half[k] - o[k]) / d[k];
            let b = (self.half[k] - o[k]) / d[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        const EPS: f64 = 1e-9;
        t1 - t0 > EPS && t0 < 1.0 - EPS && t1 > EPS
    }
}

/// Face-grid samples for every cuboid, with one segment id per face.
pub(crate) fn sample_surfaces(spec: &SceneSpec) -> Vec<Sample> {
    let mut out = Vec::new();
    let mut segment = 0u32;
    let mut rng = rng::stream(spec.seed, domain::SAMPLE_JITTER, 0);
    let mut jitter = || spec.sample_jitter * (rng.random::<f64>() - 0.5);
    for part in &spec.parts {
        let movable = part.id == spec.movable_part;
        for cuboid in &part.cuboids {
            let posed = PosedCuboid::new(cuboid);
            let h = posed.half;
            for axis in 0..3 {
                let (ua, va) = ((axis + 1) % 3, (axis + 2) % 3);
                let nu = cells(2.0 * h[ua], cuboid.density);
                let nv = cells(2.0 * h[va], cuboid.density);
                for sign in [1.0, -1.0] {
                    for i in 0..nu {
                        for j in 0..nv {
                            let mut local = Vec3::zeros();
                            local[axis] = sign * h[axis];
                            local[ua] = -h[ua] + (i as f64 + 0.5 + jitter()) * 2.0 * h[ua] / nu as f64;
                            local[va] = -h[va] + (j as f64 + 0.5 + jitter()) * 2.0 * h[va] / nv as f64;
                            out.push(Sample {
                                position: posed.rotation * local + posed.center,
                                part: part.id,
                                segment,
                                movable,
                            });
                        }
                    }
                    segment += 1;
                }
            }
        }
    }
    out
}

fn cells(length: f64, density: f64) -> usize {
    ((length * density).floor() as usize).max(1)
}

/// A rendered pixel: which sample it shows and where, in camera coordinates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Hit {
    pub sample: u32,
    pub pixel: u32,
    pub camera_point: Vec3,
}

/// Nearest visible sample per pixel, ordered by pixel index.
///
/// `world` holds the posed sample positions; `cuboids` the posed occluders.
pub(crate) fn render(
    world: &[Vec3],
    cuboids: &[PosedCuboid],
    camera: &RigidTransform,
    intrinsics: &Intrinsics,
    width: u32,
    height: u32,
) -> Vec<Hit> {
    let inv = camera.inverse();
    let eye = camera.translation;
    let mut best: Vec<Option<(f64, u32, Vec3)>> = vec![None; (width * height) as usize];
    for (id, p) in world.iter().enumerate() {
        let pc = inv.apply(p);
        if pc.z <= 1e-3 {
            continue;
        }
        let Some((u, v)) = intrinsics.project(&pc) else { continue };
        if u < 0.0 || v < 0.0 || u >= width as f64 || v >= height as f64 {
            continue;
        }
        let pixel = v.floor() as u32 * width + u.floor() as u32;
        let slot = &mut best[pixel as usize];
        if let Some((z, _, _)) = slot {
            if pc.z >= *z {
                continue;
            }
        }
        if cuboids.iter().any(|c| c.blocks(&eye, p)) {
            continue;
        }
        *slot = Some((pc.z, id as u32, pc));
    }
    best.into_iter()
        .enumerate()
        .filter_map(|(pixel, b)| {
            b.map(|(_, sample, camera_point)| Hit {
                sample,
                pixel: pixel as u32,
                camera_point,
            })
        })
        .collect()
}

/// World-from-camera pose at `eye` looking at `target` (camera +z forward,
/// +y down).
pub(crate) fn look_at(eye: &Vec3, target: &Vec3) -> RigidTransform {
    let z = (target - eye).normalize();
    let mut up = Vec3::new(0.0, -1.0, 0.0);
    if z.cross(&up).norm() < 1e-6 {
        up = Vec3::new(0.0, 0.0, 1.0);
    }
    let x = up.cross(&z).normalize();
    let y = z.cross(&x);
    RigidTransform::new(Matrix3::from_columns(&[x, y, z]), *eye)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> PosedCuboid {
        PosedCuboid {
            rotation: Matrix3::identity(),
            center: Vec3::zeros(),
            half: Vec3::new(0.5, 0.5, 0.5),
        }
    }

    #[test]
    fn front_face_visible_back_face_hidden() {
        let b = unit_box();
        let eye = Vec3::new(0.0, 0.0, -3.0);
        assert!(!b.blocks(&eye, &Vec3::new(0.1, 0.2, -0.5)));
        assert!(b.blocks(&eye, &Vec3::new(0.1, 0.2, 0.5)));
        assert!(b.blocks(&eye, &Vec3::new(0.0, 0.0, 2.0)));
        assert!(!b.blocks(&eye, &Vec3::new(2.0, 0.0, 0.0)));
    }

    #[test]
    fn look_at_points_forward() {
        let pose = look_at(&Vec3::new(1.0, 0.0, 0.0), &Vec3::zeros());
        let p = pose.inverse().apply(&Vec3::zeros());
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && (p.z - 1.0).abs() < 1e-12);
        assert!((pose.rotation.determinant() - 1.0).abs() < 1e-12);
    }
}
