//! Deterministic synthetic scenes with exact analytic geometry.
//!
//! Every layout is built in front of the canonical camera (centre at the
//! origin, looking down `+z`). Plane layouts tile each rectangle with flat
//! Gaussians whose colours follow a smooth procedural texture.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::{Gaussian3D, GaussianScene};
use crate::camgeo::{CameraFrame, CameraIntrinsics, CameraPose, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Quat, Vec3};
use crate::rng::{rng_from_seed, unit_vector, SeededRng};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayoutKind {
    TexturedPlanes,
    GaussianCloud,
    OccluderPair,
}

impl LayoutKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LayoutKind::TexturedPlanes => "textured-planes",
            LayoutKind::GaussianCloud => "gaussian-cloud",
            LayoutKind::OccluderPair => "occluder-pair",
        }
    }
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "textured-planes" => Ok(LayoutKind::TexturedPlanes),
            "gaussian-cloud" => Ok(LayoutKind::GaussianCloud),
            "occluder-pair" => Ok(LayoutKind::OccluderPair),
            other => Err(Error::UnknownLayoutKind(other.to_string())),
        }
    }
}

/// Parameters of a synthetic scene; identical specs give identical scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneSpec {
    pub seed: u64,
    pub layout: LayoutKind,
    /// Planes for `textured-planes`, Gaussians for `gaussian-cloud`; ignored for `occluder-pair`.
    pub count: usize,
    /// Half-size of the main (back) plane, or of the cloud's lateral extent.
    pub extent: f64,
    /// Camera-z of the main plane or cloud centre.
    pub depth: f64,
    /// Spacing between neighbouring plane Gaussians.
    pub spacing: f64,
    pub opacity: f64,
}

impl SyntheticSceneSpec {
    pub fn new(layout: LayoutKind, seed: u64) -> Self {
        let count = match layout {
            LayoutKind::TexturedPlanes => 3,
            LayoutKind::GaussianCloud => 400,
            LayoutKind::OccluderPair => 2,
        };
        Self {
            seed,
            layout,
            count,
            extent: 4.0,
            depth: 5.0,
            spacing: 0.08,
            opacity: 0.9,
        }
    }

    pub fn with_count(mut self, count: usize) -> Self {
        self.count = count;
        self
    }

    pub fn with_spacing(mut self, spacing: f64) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn with_extent(mut self, extent: f64) -> Self {
        self.extent = extent;
        self
    }

    pub fn with_depth(mut self, depth: f64) -> Self {
        self.depth = depth;
        self
    }

    fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive(self.extent, "extent")?;
        positive(self.depth, "depth")?;
        positive(self.spacing, "spacing")?;
        if !(self.opacity > 0.0 && self.opacity <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "opacity {} outside (0, 1]",
                self.opacity
            )));
        }
        if self.count == 0 && self.layout != LayoutKind::OccluderPair {
            return Err(Error::InvalidSpec("count must be at least 1".into()));
        }
        let cells = (2.0 * self.extent / self.spacing).powi(2);
        if cells > 4.0e6 {
            return Err(Error::InvalidSpec(format!(
                "spacing {} too fine for extent {}",
                self.spacing, self.extent
            )));
        }
        Ok(())
    }
}

/// Exact primitive consumed by the ray-cast oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive<T> {
    /// Rectangle `center + a·axis_u + b·axis_v`, `|a| ≤ half_u`, `|b| ≤ half_v`.
    Rect {
        center: Vec3<T>,
        axis_u: Vec3<T>,
        axis_v: Vec3<T>,
        half_u: T,
        half_v: T,
    },
    Sphere {
        center: Vec3<T>,
        radius: T,
    },
}

impl<T: Real> Primitive<T> {
    pub fn normal(&self) -> Option<Vec3<T>> {
        match self {
            Primitive::Rect { axis_u, axis_v, .. } => Some(axis_u.cross(*axis_v).normalize()),
            Primitive::Sphere { .. } => None,
        }
    }
}

/// Analytic description of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalyticGeometry<T> {
    pub primitives: Vec<Primitive<T>>,
}

/// Smooth RGB texture: a few random sinusoids per channel.
struct Texture {
    terms: [[(f64, f64, f64, f64); 3]; 3],
}

impl Texture {
    fn random(rng: &mut SeededRng) -> Self {
        let mut terms = [[(0.0, 0.0, 0.0, 0.0); 3]; 3];
        for channel in terms.iter_mut() {
            for (k, term) in channel.iter_mut().enumerate() {
                let amp = [0.22, 0.14, 0.08][k];
                let freq = rng.gen_range(1.5..5.0);
                let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                *term = (amp, freq * angle.cos(), freq * angle.sin(), phase);
            }
        }
        Self { terms }
    }

    fn sample(&self, a: f64, b: f64) -> [f64; 3] {
        let mut out = [0.5; 3];
        for (c, channel) in self.terms.iter().enumerate() {
            for &(amp, fa, fb, phase) in channel {
                out[c] += amp * (fa * a + fb * b + phase).sin();
            }
            out[c] = out[c].clamp(0.0, 1.0);
        }
        out
    }
}

struct Builder<T> {
    gaussians: Vec<Gaussian3D<T>>,
    geometry: AnalyticGeometry<T>,
}

impl<T: Real> Builder<T> {
    /// Tiles a rectangle with flat Gaussians and records the exact rectangle.
    #[allow(clippy::too_many_arguments)]
    fn plane(
        &mut self,
        rng: &mut SeededRng,
        center: Vec3<f64>,
        axis_u: Vec3<f64>,
        axis_v: Vec3<f64>,
        half_u: f64,
        half_v: f64,
        spacing: f64,
        opacity: f64,
    ) {
        let texture = Texture::random(rng);
        let normal = axis_u.cross(axis_v);
        let rot = Mat3::from_rows([
            [axis_u.x, axis_v.x, normal.x],
            [axis_u.y, axis_v.y, normal.y],
            [axis_u.z, axis_v.z, normal.z],
        ]);
        let q = Quat::from_matrix(&rot).to_array().map(T::lit);
        let nu = (2.0 * half_u / spacing).round().max(1.0) as usize;
        let nv = (2.0 * half_v / spacing).round().max(1.0) as usize;
        let du = 2.0 * half_u / nu as f64;
        let dv = 2.0 * half_v / nv as f64;
        let sigma = Vec3::new(0.6 * du, 0.6 * dv, 0.05 * du.min(dv));
        for j in 0..nv {
            for i in 0..nu {
                let a = -half_u + (i as f64 + 0.5) * du;
                let b = -half_v + (j as f64 + 0.5) * dv;
                // Offsets along the normal keep coplanar splats out of exact depth ties.
                let lift = rng.gen_range(-0.3..0.3) * du.min(dv);
                let p = center + axis_u * a + axis_v * b + normal * lift;
                self.gaussians.push(Gaussian3D {
                    mean: p.cast(),
                    scale: sigma.cast(),
                    rotation: Quat::from_array(q),
                    opacity: T::lit(opacity),
                    color: texture.sample(a, b).map(T::lit),
                });
            }
        }
        self.geometry.primitives.push(Primitive::Rect {
            center: center.cast(),
            axis_u: axis_u.cast(),
            axis_v: axis_v.cast(),
            half_u: T::lit(half_u),
            half_v: T::lit(half_v),
        });
    }
}

fn fronto_axes() -> (Vec3<f64>, Vec3<f64>) {
    (Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0))
}

/// Builds the scene and its analytic geometry for `spec`.
pub fn synth_scene<T: Real>(
    spec: &SyntheticSceneSpec,
) -> Result<(GaussianScene<T>, AnalyticGeometry<T>)> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let mut b = Builder {
        gaussians: Vec::new(),
        geometry: AnalyticGeometry::default(),
    };
    let (ex, ey) = fronto_axes();
    match spec.layout {
        LayoutKind::TexturedPlanes => {
            b.plane(
                &mut rng,
                Vec3::new(0.0, 0.0, spec.depth),
                ex,
                ey,
                spec.extent,
                spec.extent,
                spec.spacing,
                spec.opacity,
            );
            for _ in 1..spec.count {
                let z = spec.depth * rng.gen_range(0.55..0.85);
                let reach = 0.35 * spec.extent * z / spec.depth;
                let center = Vec3::new(
                    rng.gen_range(-reach..reach),
                    rng.gen_range(-reach..reach),
                    z,
                );
                let tilt = crate::linalg::so3_exp(
                    unit_vector::<f64, _>(&mut rng) * rng.gen_range(0.0..25f64.to_radians()),
                );
                let half = spec.extent * rng.gen_range(0.15..0.3);
                let half_v = half * rng.gen_range(0.6..1.0);
                b.plane(
                    &mut rng,
                    center,
                    tilt * ex,
                    tilt * ey,
                    half,
                    half_v,
                    spec.spacing,
                    spec.opacity,
                );
            }
        }
        LayoutKind::OccluderPair => {
            b.plane(
                &mut rng,
                Vec3::new(0.0, 0.0, spec.depth),
                ex,
                ey,
                spec.extent,
                spec.extent,
                spec.spacing,
                spec.opacity,
            );
            let z = spec.depth * rng.gen_range(0.45..0.6);
            let reach = 0.15 * spec.extent * z / spec.depth;
            let center = Vec3::new(
                rng.gen_range(-reach..reach),
                rng.gen_range(-reach..reach),
                z,
            );
            let half_u = spec.extent * z / spec.depth * rng.gen_range(0.18..0.3);
            let half_v = spec.extent * z / spec.depth * rng.gen_range(0.18..0.3);
            b.plane(
                &mut rng,
                center,
                ex,
                ey,
                half_u,
                half_v,
                spec.spacing * z / spec.depth,
                spec.opacity,
            );
        }
        LayoutKind::GaussianCloud => {
            for _ in 0..spec.count {
                let center = Vec3::new(
                    rng.gen_range(-0.5..0.5) * spec.extent,
                    rng.gen_range(-0.5..0.5) * spec.extent,
                    spec.depth + rng.gen_range(-1.0..1.0) * 0.25 * spec.extent,
                );
                let sigma = rng.gen_range(0.02..0.05) * spec.extent;
                let color = [
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                ];
                b.gaussians.push(Gaussian3D::isotropic(
                    center.cast(),
                    T::lit(sigma),
                    T::lit(spec.opacity),
                    color.map(T::lit),
                ));
                b.geometry.primitives.push(Primitive::Sphere {
                    center: center.cast(),
                    radius: T::lit(sigma),
                });
            }
        }
    }
    Ok((GaussianScene::new(b.gaussians)?, b.geometry))
}

/// Copy of `scene` with every colour redrawn uniformly from the seeded stream.
pub fn recolored<T: Real>(scene: &GaussianScene<T>, seed: u64) -> Result<GaussianScene<T>> {
    let mut rng = rng_from_seed(seed);
    let gs = scene
        .gaussians()
        .iter()
        .map(|g| Gaussian3D {
            color: [(); 3].map(|_| T::lit(rng.gen_range(0.0..1.0))),
            ..*g
        })
        .collect();
    scene.with_gaussians(gs)
}

/// A short camera path suited to a layout: frame 0 is the canonical camera.
///
/// Plane layouts get a lateral slide with a slight yaw so that parallax
/// reveals and hides regions; the cloud gets a gentle orbit.
pub fn default_trajectory<T: Real>(
    layout: LayoutKind,
    width: usize,
    height: usize,
    frames: usize,
) -> Result<Trajectory<T>> {
    let k = CameraIntrinsics::from_fov(width, height, T::lit(60.0))?;
    let mut out = Vec::with_capacity(frames.max(1));
    for i in 0..frames.max(1) {
        let s = if frames > 1 {
            i as f64 / (frames - 1) as f64
        } else {
            0.0
        };
        let pose = match layout {
            LayoutKind::TexturedPlanes | LayoutKind::OccluderPair => {
                let eye = Vec3::new(0.6 * s, -0.15 * s, 0.3 * s);
                let r = crate::linalg::so3_exp(Vec3::new(0.0, -0.06 * s, 0.0));
                CameraPose::new(r, eye)?
            }
            LayoutKind::GaussianCloud => {
                let angle = 0.25 * s;
                let eye = Vec3::new(5.0 * angle.sin(), 0.0, 5.0 - 5.0 * angle.cos());
                CameraPose::look_at(eye, Vec3::new(0.0, 0.0, 5.0), Vec3::new(0.0, -1.0, 0.0))?
            }
        };
        out.push(CameraFrame::new(k, pose.cast()).with_timestamp(i as i64 * 33_333));
    }
    Trajectory::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_names_parse() {
        for k in [
            LayoutKind::TexturedPlanes,
            LayoutKind::GaussianCloud,
            LayoutKind::OccluderPair,
        ] {
            assert_eq!(k.as_str().parse::<LayoutKind>().unwrap(), k);
        }
        assert!(matches!(
            "spiral".parse::<LayoutKind>(),
            Err(Error::UnknownLayoutKind(_))
        ));
    }

    #[test]
    fn deterministic_in_seed() {
        for layout in [
            LayoutKind::TexturedPlanes,
            LayoutKind::GaussianCloud,
            LayoutKind::OccluderPair,
        ] {
            let spec = SyntheticSceneSpec::new(layout, 11).with_spacing(0.2);
            let a = synth_scene::<f64>(&spec).unwrap();
            let b = synth_scene::<f64>(&spec).unwrap();
            assert_eq!(a, b);
            let c = synth_scene::<f64>(&SyntheticSceneSpec { seed: 12, ..spec }).unwrap();
            assert_ne!(a.0, c.0);
        }
    }

    #[test]
    fn occluder_pair_has_two_fronto_planes() {
        let (scene, geo) =
            synth_scene::<f64>(&SyntheticSceneSpec::new(LayoutKind::OccluderPair, 1)).unwrap();
        assert_eq!(geo.primitives.len(), 2);
        let zs: Vec<f64> = geo
            .primitives
            .iter()
            .map(|p| match p {
                Primitive::Rect { center, .. } => center.z,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(zs[0], 5.0);
        assert!(zs[1] < 3.1 && zs[1] > 2.2);
        assert!(scene.len() > 1000);
    }

    #[test]
    fn default_trajectory_starts_canonical() {
        let t = default_trajectory::<f64>(LayoutKind::OccluderPair, 64, 48, 4).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.frames()[0].pose, CameraPose::identity());
        assert!(t.path_length() > 0.0);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = SyntheticSceneSpec::new(LayoutKind::TexturedPlanes, 0);
        s.spacing = 0.0;
        assert!(synth_scene::<f64>(&s).is_err());
        let s = SyntheticSceneSpec::new(LayoutKind::GaussianCloud, 0).with_count(0);
        assert!(synth_scene::<f64>(&s).is_err());
    }
}
