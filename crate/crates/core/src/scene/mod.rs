//! 3D Gaussian scenes and pixel-aligned lifting along camera rays.

mod format;
mod synth;

pub use format::{
    read_scene, read_scene_file, write_scene, write_scene_file, SCENE_MAGIC, SCENE_VERSION,
};
pub use synth::{
    default_trajectory, recolored, synth_scene, AnalyticGeometry, LayoutKind, Primitive,
    SyntheticSceneSpec,
};

use crate::camgeo::CameraFrame;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg::{Mat3, Quat, Vec3};
use crate::scalar::Real;

/// One anisotropic Gaussian with view-independent RGB colour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian3D<T> {
    pub mean: Vec3<T>,
    /// Per-axis standard deviations in world units.
    pub scale: Vec3<T>,
    pub rotation: Quat<T>,
    pub opacity: T,
    pub color: [T; 3],
}

impl<T: Real> Gaussian3D<T> {
    pub fn isotropic(mean: Vec3<T>, sigma: T, opacity: T, color: [T; 3]) -> Self {
        Self {
            mean,
            scale: Vec3::new(sigma, sigma, sigma),
            rotation: Quat::identity(),
            opacity,
            color,
        }
    }

    /// World covariance `R diag(s²) Rᵀ`.
    pub fn covariance(&self) -> Mat3<T> {
        let r = self.rotation.to_matrix();
        let s2 = Vec3::new(
            self.scale.x * self.scale.x,
            self.scale.y * self.scale.y,
            self.scale.z * self.scale.z,
        );
        r * Mat3::diagonal(s2) * r.transpose()
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidGaussian { index, reason });
        if !self.mean.is_finite() {
            return bad("non-finite mean".into());
        }
        if !(self.scale.x > T::zero() && self.scale.y > T::zero() && self.scale.z > T::zero())
            || !self.scale.is_finite()
        {
            return bad(format!("scales must be positive, got {:?}", self.scale));
        }
        let qn = self.rotation.norm();
        if !((qn - T::one()).abs() <= T::lit(1e-9).max(T::epsilon() * T::lit(16.0))) {
            return bad(format!("quaternion norm {qn} is not 1"));
        }
        if !(self.opacity > T::zero() && self.opacity <= T::one()) {
            return bad(format!("opacity {} outside (0, 1]", self.opacity));
        }
        if self
            .color
            .iter()
            .any(|c| !(*c >= T::zero() && *c <= T::one()))
        {
            return bad(format!("colour {:?} outside [0, 1]", self.color));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Gaussian3D<U> {
        let q = self.rotation.to_array();
        Gaussian3D {
            mean: self.mean.cast(),
            scale: self.scale.cast(),
            rotation: Quat::from_array(q.map(|v| U::lit(v.to_f64_lossy()))),
            opacity: U::lit(self.opacity.to_f64_lossy()),
            color: self.color.map(|v| U::lit(v.to_f64_lossy())),
        }
    }
}

/// Where a lifted Gaussian came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub frame: u32,
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScene<T> {
    gaussians: Vec<Gaussian3D<T>>,
    provenance: Option<Vec<Provenance>>,
}

impl<T: Real> GaussianScene<T> {
    /// Validates every member. An empty scene is allowed here; rendering rejects it.
    pub fn new(gaussians: Vec<Gaussian3D<T>>) -> Result<Self> {
        for (i, g) in gaussians.iter().enumerate() {
            g.validate(i)?;
        }
        Ok(Self {
            gaussians,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, provenance: Vec<Provenance>) -> Result<Self> {
        if provenance.len() != self.gaussians.len() {
            return Err(Error::shape(
                "provenance",
                self.gaussians.len(),
                provenance.len(),
            ));
        }
        self.provenance = Some(provenance);
        Ok(self)
    }

    #[inline]
    pub fn gaussians(&self) -> &[Gaussian3D<T>] {
        &self.gaussians
    }

    pub fn provenance(&self) -> Option<&[Provenance]> {
        self.provenance.as_deref()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Mean of all Gaussian centres.
    pub fn centroid(&self) -> Vec3<T> {
        if self.gaussians.is_empty() {
            return Vec3::zero();
        }
        let sum = self
            .gaussians
            .iter()
            .fold(Vec3::zero(), |acc, g| acc + g.mean);
        sum * (T::one() / T::from_usize_lossy(self.gaussians.len()))
    }

    /// Replaces the members, re-validating them; provenance is kept when the count matches.
    pub fn with_gaussians(&self, gaussians: Vec<Gaussian3D<T>>) -> Result<Self> {
        let provenance = match &self.provenance {
            Some(p) if p.len() == gaussians.len() => Some(p.clone()),
            _ => None,
        };
        let mut s = Self::new(gaussians)?;
        s.provenance = provenance;
        Ok(s)
    }

    pub fn cast<U: Real>(&self) -> GaussianScene<U> {
        GaussianScene {
            gaussians: self.gaussians.iter().map(|g| g.cast()).collect(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Per-pixel Gaussian parameters, the output a feed-forward decoder would predict.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelParamMaps<T> {
    /// Distance along the unit pixel ray (not camera z).
    pub ray_distance: Image<T>,
    pub opacity: Image<T>,
    pub scale: Image<T>,
    /// Quaternion `(w, x, y, z)` per pixel.
    pub rotation: Image<T>,
    pub color: Image<T>,
}

impl<T: Real> PixelParamMaps<T> {
    pub fn width(&self) -> usize {
        self.ray_distance.width()
    }

    pub fn height(&self) -> usize {
        self.ray_distance.height()
    }

    /// Constant maps; handy for tests and fixtures.
    pub fn uniform(
        width: usize,
        height: usize,
        ray_distance: T,
        opacity: T,
        sigma: T,
        color: [T; 3],
    ) -> Self {
        let q = Quat::<T>::identity().to_array();
        Self {
            ray_distance: Image::filled(width, height, 1, ray_distance),
            opacity: Image::filled(width, height, 1, opacity),
            scale: Image::filled(width, height, 3, sigma),
            rotation: Image::from_fn(width, height, 4, |_, _, c| q[c]),
            color: Image::from_fn(width, height, 3, |_, _, c| color[c]),
        }
    }

    pub fn validate_shapes(&self) -> Result<()> {
        let (w, h) = (self.width(), self.height());
        let check = |img: &Image<T>, ch: usize, what: &'static str| {
            if img.width() != w || img.height() != h || img.channels() != ch {
                Err(Error::shape(
                    what,
                    format!("{w}x{h}x{ch}"),
                    img.shape_string(),
                ))
            } else {
                Ok(())
            }
        };
        check(&self.ray_distance, 1, "ray_distance map")?;
        check(&self.opacity, 1, "opacity map")?;
        check(&self.scale, 3, "scale map")?;
        check(&self.rotation, 4, "rotation map")?;
        check(&self.color, 3, "color map")
    }
}

/// Camera-z depth of the point at ray distance `t` through the centre of pixel `(x, y)`.
pub fn ray_distance_to_depth<T: Real>(frame: &CameraFrame<T>, x: usize, y: usize, t: T) -> T {
    let u = T::from_usize_lossy(x) + T::half();
    let v = T::from_usize_lossy(y) + T::half();
    let d = frame.intrinsics.backproject(u, v);
    t / d.norm()
}

/// One Gaussian per pixel with mean `origin + t · direction` along the pixel's Plücker ray.
pub fn lift_to_gaussians<T: Real>(
    maps: &PixelParamMaps<T>,
    frame: &CameraFrame<T>,
) -> Result<GaussianScene<T>> {
    lift(maps, frame, 0, false)
}

/// Lift tagged with a frame index in the provenance.
pub fn lift_frame<T: Real>(
    maps: &PixelParamMaps<T>,
    frame: &CameraFrame<T>,
    frame_index: u32,
) -> Result<GaussianScene<T>> {
    lift(maps, frame, frame_index, false)
}

fn lift<T: Real>(
    maps: &PixelParamMaps<T>,
    frame: &CameraFrame<T>,
    frame_index: u32,
    allow_zero_distance: bool,
) -> Result<GaussianScene<T>> {
    maps.validate_shapes()?;
    let (w, h) = (maps.width(), maps.height());
    if w != frame.width() || h != frame.height() {
        return Err(Error::shape(
            "parameter maps vs frame",
            format!("{}x{}", frame.width(), frame.height()),
            format!("{w}x{h}"),
        ));
    }
    let mut gaussians = Vec::with_capacity(w * h);
    let mut provenance = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let t = maps.ray_distance.get(x, y, 0);
            let ok = if allow_zero_distance {
                t >= T::zero()
            } else {
                t > T::zero()
            };
            if !ok || !t.is_finite() {
                return Err(Error::NonPositiveRayDistance {
                    x,
                    y,
                    value: t.to_f64_lossy(),
                });
            }
            let ray = frame.pixel_ray(x, y);
            let s = maps.scale.pixel(x, y);
            let q = maps.rotation.pixel(x, y);
            let c = maps.color.pixel(x, y);
            gaussians.push(Gaussian3D {
                mean: ray.at(t),
                scale: Vec3::new(s[0], s[1], s[2]),
                rotation: Quat::new(q[0], q[1], q[2], q[3]),
                opacity: maps.opacity.get(x, y, 0),
                color: [c[0], c[1], c[2]],
            });
            provenance.push(Provenance {
                frame: frame_index,
                x: x as u32,
                y: y as u32,
            });
        }
    }
    GaussianScene::new(gaussians)?.with_provenance(provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camgeo::{unproject, CameraIntrinsics, CameraPose};
    use crate::linalg::so3_exp;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn frame() -> CameraFrame<f64> {
        let k = CameraIntrinsics::new(40.0, 42.0, 8.5, 6.5, 16, 12).unwrap();
        CameraFrame::new(k, CameraPose::identity())
    }

    #[test]
    fn zero_distance_puts_every_mean_at_origin() {
        let mut f = frame();
        f.pose = CameraPose::from_translation(Vec3::new(0.5, -1.0, 2.0));
        let maps = PixelParamMaps::uniform(16, 12, 0.0, 0.5, 0.1, [0.2, 0.4, 0.6]);
        assert!(matches!(
            lift_to_gaussians(&maps, &f),
            Err(Error::NonPositiveRayDistance { .. })
        ));
        let scene = lift(&maps, &f, 0, true).unwrap();
        assert!(scene.gaussians().iter().all(|g| g.mean == f.pose.center()));
    }

    #[test]
    fn principal_pixel_lifts_on_axis() {
        let maps = PixelParamMaps::uniform(16, 12, 3.0, 0.5, 0.1, [0.2, 0.4, 0.6]);
        let scene = lift_to_gaussians(&maps, &frame()).unwrap();
        assert_eq!(scene.len(), 16 * 12);
        assert_eq!(scene.gaussians()[6 * 16 + 8].mean, Vec3::new(0.0, 0.0, 3.0));
    }

    #[test]
    fn lift_matches_unproject_oracle() {
        let mut rng = rng_from_seed(3);
        let mut f = frame();
        f.pose = CameraPose::new(
            so3_exp(Vec3::new(0.3, -0.5, 0.2)),
            Vec3::new(1.0, 2.0, -0.5),
        )
        .unwrap();
        let mut maps = PixelParamMaps::uniform(16, 12, 1.0, 0.5, 0.1, [0.2, 0.4, 0.6]);
        for v in maps.ray_distance.data_mut() {
            *v = rng.gen_range(0.1..20.0);
        }
        let scene = lift_to_gaussians(&maps, &f).unwrap();
        for y in 0..12 {
            for x in 0..16 {
                let t = maps.ray_distance.get(x, y, 0);
                let z = ray_distance_to_depth(&f, x, y, t);
                let expect = unproject(x as f64 + 0.5, y as f64 + 0.5, z, &f).unwrap();
                let got = scene.gaussians()[y * 16 + x].mean;
                assert!((got - expect).max_abs() < 1e-9, "pixel ({x},{y})");
            }
        }
        let p = scene.provenance().unwrap()[5 * 16 + 3];
        assert_eq!((p.x, p.y), (3, 5));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let maps = PixelParamMaps::uniform(8, 12, 1.0, 0.5, 0.1, [0.2, 0.4, 0.6]);
        assert!(matches!(
            lift_to_gaussians(&maps, &frame()),
            Err(Error::ShapeMismatch { .. })
        ));
        let mut bad = PixelParamMaps::uniform(16, 12, 1.0, 0.5, 0.1, [0.2, 0.4, 0.6]);
        bad.color = Image::new(16, 12, 1);
        assert!(lift_to_gaussians(&bad, &frame()).is_err());
    }

    #[test]
    fn invalid_gaussians_rejected() {
        let g = Gaussian3D::isotropic(Vec3::zero(), 0.1, 0.5, [0.1, 0.2, 0.3]);
        assert!(GaussianScene::new(vec![g]).is_ok());
        let mut bad = g;
        bad.opacity = 0.0;
        assert!(GaussianScene::new(vec![bad]).is_err());
        let mut bad = g;
        bad.scale.y = -1.0;
        assert!(GaussianScene::new(vec![bad]).is_err());
        let mut bad = g;
        bad.color[2] = 1.5;
        assert!(GaussianScene::new(vec![bad]).is_err());
        let mut bad = g;
        bad.rotation = Quat::new(1.0, 0.1, 0.0, 0.0);
        assert!(GaussianScene::new(vec![bad]).is_err());
    }
}
