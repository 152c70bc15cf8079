//! Exact ray casting against analytic geometry, independent of the splatter.

use crate::camgeo::CameraFrame;
use crate::image::{Image, Mask};
use crate::linalg::Vec3;
use crate::scalar::Real;
use crate::scene::{AnalyticGeometry, Primitive};

#[derive(Debug, Clone, PartialEq)]
pub struct RaycastOutput<T> {
    /// Camera z of the first hit, 0 on a miss.
    pub depth: Image<T>,
    /// Euclidean distance from the camera centre to the first hit, 0 on a miss.
    pub distance: Image<T>,
    pub hit: Mask,
    /// Index of the primitive hit first, per pixel.
    pub primitive: Vec<Option<usize>>,
}

impl<T: Real> Primitive<T> {
    /// Smallest ray parameter `t > 0` with `origin + t·dir` on the primitive.
    pub fn intersect(&self, origin: Vec3<T>, dir: Vec3<T>) -> Option<T> {
        let eps = T::lit(1e-12);
        match *self {
            Primitive::Rect {
                center,
                axis_u,
                axis_v,
                half_u,
                half_v,
            } => {
                let n = axis_u.cross(axis_v);
                let denom = n.dot(dir);
                if denom.abs() < eps {
                    return None;
                }
                let t = n.dot(center - origin) / denom;
                if !(t > eps) {
                    return None;
                }
                let rel = origin + dir * t - center;
                (rel.dot(axis_u).abs() <= half_u && rel.dot(axis_v).abs() <= half_v).then_some(t)
            }
            Primitive::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.dot(dir);
                let b = oc.dot(dir);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - a * c;
                if disc < T::zero() {
                    return None;
                }
                let s = disc.sqrt();
                [(-b - s) / a, (-b + s) / a].into_iter().find(|t| *t > eps)
            }
        }
    }
}

impl<T: Real> AnalyticGeometry<T> {
    /// First hit along the ray: parameter and primitive index. Ties go to the
    /// lower index.
    pub fn first_hit(&self, origin: Vec3<T>, dir: Vec3<T>) -> Option<(T, usize)> {
        let mut best: Option<(T, usize)> = None;
        for (i, p) in self.primitives.iter().enumerate() {
            if let Some(t) = p.intersect(origin, dir) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, i));
                }
            }
        }
        best
    }
}

/// Casts one ray through every pixel centre.
pub fn raycast_oracle<T: Real>(
    geometry: &AnalyticGeometry<T>,
    frame: &CameraFrame<T>,
) -> RaycastOutput<T> {
    let (w, h) = (frame.width(), frame.height());
    let origin = frame.pose.center();
    let rot = frame.pose.rotation();
    let mut depth = Image::new(w, h, 1);
    let mut distance = Image::new(w, h, 1);
    let mut hit = Mask::filled(w, h, false);
    let mut primitive = vec![None; w * h];
    for y in 0..h {
        for x in 0..w {
            let cam = frame.intrinsics.backproject(
                T::from_usize_lossy(x) + T::half(),
                T::from_usize_lossy(y) + T::half(),
            );
            // cam.z = 1, so the ray parameter is the camera z.
            if let Some((t, i)) = geometry.first_hit(origin, *rot * cam) {
                depth.set(x, y, 0, t);
                distance.set(x, y, 0, t * cam.norm());
                hit.set(x, y, true);
                primitive[y * w + x] = Some(i);
            }
        }
    }
    RaycastOutput {
        depth,
        distance,
        hit,
        primitive,
    }
}
