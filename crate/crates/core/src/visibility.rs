//! Depth-based warping into the reference view and visibility masks.
//!
//! A target pixel is visible when its back-projected surface point lands
//! inside the reference frustum and its reprojected depth agrees with the
//! reference depth map there.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camgeo::{project, unproject, CameraFrame, Trajectory};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::scalar::Real;

/// Fractional parts this close to an integer are snapped to it.
const SNAP: f64 = 1e-9;

/// Target pixels mapped into the reference view.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpField<T> {
    pub width: usize,
    pub height: usize,
    /// Continuous reference pixel coordinates, row-major over target pixels.
    pub coords: Vec<(T, T)>,
    /// Camera z of the surface point in the reference view.
    pub depth: Vec<T>,
    /// Point has positive target depth, lies in front of the reference camera
    /// and projects inside the reference image.
    pub in_frustum: Vec<bool>,
    pub ref_width: usize,
    pub ref_height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum ToleranceSpec {
    /// World units.
    Absolute(f64),
    /// Fraction of the sampled reference depth.
    Relative(f64),
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec::Relative(0.01)
    }
}

impl ToleranceSpec {
    pub fn value(&self) -> f64 {
        match *self {
            ToleranceSpec::Absolute(v) | ToleranceSpec::Relative(v) => v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.value();
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidTolerance(v));
        }
        Ok(())
    }

    fn effective<T: Real>(&self, reference_depth: T) -> T {
        match *self {
            ToleranceSpec::Absolute(v) => T::lit(v),
            ToleranceSpec::Relative(v) => T::lit(v) * reference_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMask {
    pub mask: Mask,
    /// Fraction of ones in `mask`.
    pub coverage: f64,
    pub tolerance: ToleranceSpec,
}

impl VisibilityMask {
    fn new(mask: Mask, tolerance: ToleranceSpec) -> Self {
        Self {
            coverage: mask.coverage(),
            mask,
            tolerance,
        }
    }
}

fn ensure_depth<T: Real>(
    depth: &Image<T>,
    frame: &CameraFrame<T>,
    what: &'static str,
) -> Result<()> {
    if depth.width() != frame.width() || depth.height() != frame.height() || depth.channels() != 1 {
        return Err(Error::shape(
            what,
            format!("{}x{}x1", frame.width(), frame.height()),
            depth.shape_string(),
        ));
    }
    Ok(())
}

/// Back-projects every target pixel with positive depth and projects it into
/// the reference camera.
pub fn warp_to_reference<T: Real>(
    depth_t: &Image<T>,
    frame_t: &CameraFrame<T>,
    frame_0: &CameraFrame<T>,
) -> Result<WarpField<T>> {
    ensure_depth(depth_t, frame_t, "target depth")?;
    let (w, h) = (frame_t.width(), frame_t.height());
    let mut coords = vec![(T::nan(), T::nan()); w * h];
    let mut depth = vec![T::zero(); w * h];
    let mut in_frustum = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let d = depth_t.get(x, y, 0);
            if !(d > T::zero()) {
                continue;
            }
            let u = T::from_usize_lossy(x) + T::half();
            let v = T::from_usize_lossy(y) + T::half();
            let world = unproject(u, v, d, frame_t)?;
            let p = project(world, frame_0);
            let i = y * w + x;
            coords[i] = (p.u, p.v);
            depth[i] = p.depth;
            in_frustum[i] = p.in_front() && frame_0.intrinsics.contains(p.u, p.v);
        }
    }
    Ok(WarpField {
        width: w,
        height: h,
        coords,
        depth,
        in_frustum,
        ref_width: frame_0.width(),
        ref_height: frame_0.height(),
    })
}

/// Splits an index-space coordinate into a base index and fraction, clamped
/// to the image and with near-integer fractions snapped.
fn split<T: Real>(c: T, size: usize) -> (usize, usize, T) {
    let max = T::from_usize_lossy(size - 1);
    let c = c.max(T::zero()).min(max);
    let mut i0 = c.floor();
    let mut f = c - i0;
    if f < T::lit(SNAP) {
        f = T::zero();
    } else if f > T::one() - T::lit(SNAP) {
        i0 += T::one();
        f = T::zero();
    }
    let i0 = i0.to_usize().unwrap_or(0).min(size - 1);
    (i0, (i0 + 1).min(size - 1), f)
}

/// Bilinear sample of a single-channel image at continuous pixel `(u, v)`
/// (pixel centres at half-integers). `None` when any neighbour with non-zero
/// weight has no geometry.
pub fn sample_depth<T: Real>(depth: &Image<T>, u: T, v: T) -> Option<T> {
    let (x0, x1, fx) = split(u - T::half(), depth.width());
    let (y0, y1, fy) = split(v - T::half(), depth.height());
    let taps = [
        (x0, y0, (T::one() - fx) * (T::one() - fy)),
        (x1, y0, fx * (T::one() - fy)),
        (x0, y1, (T::one() - fx) * fy),
        (x1, y1, fx * fy),
    ];
    let mut sum = T::zero();
    for (x, y, wgt) in taps {
        if wgt == T::zero() {
            continue;
        }
        let d = depth.get(x, y, 0);
        if !(d > T::zero()) {
            return None;
        }
        sum += wgt * d;
    }
    Some(sum)
}

/// Marks target pixels whose reprojected depth matches the reference depth.
pub fn visibility_mask<T: Real>(
    warp: &WarpField<T>,
    depth_0: &Image<T>,
    tolerance: ToleranceSpec,
) -> Result<VisibilityMask> {
    tolerance.validate()?;
    if depth_0.width() != warp.ref_width
        || depth_0.height() != warp.ref_height
        || depth_0.channels() != 1
    {
        return Err(Error::shape(
            "reference depth",
            format!("{}x{}x1", warp.ref_width, warp.ref_height),
            depth_0.shape_string(),
        ));
    }
    let data = (0..warp.width * warp.height)
        .map(|i| {
            if !warp.in_frustum[i] {
                return false;
            }
            let (u, v) = warp.coords[i];
            match sample_depth(depth_0, u, v) {
                Some(d0) if d0 > T::zero() => (warp.depth[i] - d0).abs() < tolerance.effective(d0),
                _ => false,
            }
        })
        .collect();
    Ok(VisibilityMask::new(
        Mask::from_vec(warp.width, warp.height, data)?,
        tolerance,
    ))
}

/// One mask per trajectory frame against frame 0.
pub fn mask_sequence<T: Real>(
    trajectory: &Trajectory<T>,
    depths: &[Image<T>],
    tolerance: ToleranceSpec,
) -> Result<Vec<VisibilityMask>> {
    tolerance.validate()?;
    if depths.len() != trajectory.len() {
        return Err(Error::shape("depth maps", trajectory.len(), depths.len()));
    }
    let frames = trajectory.frames();
    for (d, f) in depths.iter().zip(frames) {
        ensure_depth(d, f, "depth map")?;
    }
    (0..frames.len())
        .into_par_iter()
        .map(|k| {
            if k == 0 {
                let d = &depths[0];
                let m = Mask::from_fn(d.width(), d.height(), |x, y| d.get(x, y, 0) > T::zero());
                return Ok(VisibilityMask::new(m, tolerance));
            }
            let warp = warp_to_reference(&depths[k], &frames[k], &frames[0])?;
            visibility_mask(&warp, &depths[0], tolerance)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camgeo::{CameraIntrinsics, CameraPose};
    use crate::linalg::{so3_exp, Vec3};

    fn frame(pose: CameraPose<f64>) -> CameraFrame<f64> {
        let k = CameraIntrinsics::new(40.0, 42.0, 20.3, 15.7, 40, 30).unwrap();
        CameraFrame::new(k, pose)
    }

    fn plane_depth(f: &CameraFrame<f64>, z: f64) -> Image<f64> {
        // World plane z = const seen by a camera with identity rotation.
        let c = f.pose.center();
        Image::from_fn(f.width(), f.height(), 1, |_, _, _| z - c.z)
    }

    #[test]
    fn identity_warp() {
        let f = frame(CameraPose::identity());
        let d = Image::from_fn(40, 30, 1, |x, y, _| 2.0 + 0.05 * x as f64 + 0.01 * y as f64);
        let warp = warp_to_reference(&d, &f, &f).unwrap();
        for y in 0..30 {
            for x in 0..40 {
                let (u, v) = warp.coords[y * 40 + x];
                assert!((u - x as f64 - 0.5).abs() < 1e-6 && (v - y as f64 - 0.5).abs() < 1e-6);
                assert!((warp.depth[y * 40 + x] - d.get(x, y, 0)).abs() < 1e-6);
            }
        }
        let m = visibility_mask(&warp, &d, ToleranceSpec::default()).unwrap();
        assert_eq!(m.coverage, 1.0);
    }

    #[test]
    fn looking_away_is_out_of_frustum() {
        let f0 = frame(CameraPose::identity());
        let back = CameraPose::new(
            so3_exp(Vec3::new(0.0, std::f64::consts::PI, 0.0)),
            Vec3::zero(),
        )
        .unwrap();
        let ft = frame(back);
        let d = Image::filled(40, 30, 1, 3.0);
        let warp = warp_to_reference(&d, &ft, &f0).unwrap();
        assert!(warp.in_frustum.iter().all(|f| !f));
    }

    #[test]
    fn translated_camera_matches_plane_homography() {
        // Plane z = 6, reference at the origin, target shifted by t with the
        // same orientation: the induced map is u0 = u + fx·tx/z0, v0 = v + fy·ty/z0.
        let t = Vec3::new(0.3, -0.2, 0.5);
        let f0 = frame(CameraPose::identity());
        let ft = frame(CameraPose::from_translation(t));
        let d = plane_depth(&ft, 6.0);
        let warp = warp_to_reference(&d, &ft, &f0).unwrap();
        let k = &f0.intrinsics;
        for y in (0..30).step_by(3) {
            for x in (0..40).step_by(3) {
                let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
                // Homography H = K (I + t nᵀ / d_t) K⁻¹ with n = ẑ, d_t = 6 − t_z.
                let ray = k.backproject(u, v);
                let s = 1.0 / (6.0 - t.z);
                let p = ray + t * s;
                let (eu, ev) = (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
                let (gu, gv) = warp.coords[y * 40 + x];
                assert!((gu - eu).abs() < 1e-5 && (gv - ev).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn tolerance_monotone_and_validated() {
        let f0 = frame(CameraPose::identity());
        let ft = frame(CameraPose::from_translation(Vec3::new(0.2, 0.0, 0.0)));
        let d0 = Image::from_fn(40, 30, 1, |x, _, _| 4.0 + 0.02 * x as f64);
        let dt = Image::from_fn(40, 30, 1, |x, y, _| 4.0 + 0.03 * x as f64 - 0.01 * y as f64);
        let warp = warp_to_reference(&dt, &ft, &f0).unwrap();
        let mut prev: Option<Mask> = None;
        for tau in [0.001, 0.01, 0.05, 0.2] {
            let m = visibility_mask(&warp, &d0, ToleranceSpec::Relative(tau)).unwrap();
            if let Some(p) = &prev {
                assert!(p.data().iter().zip(m.mask.data()).all(|(a, b)| !a || *b));
            }
            prev = Some(m.mask);
        }
        assert!(matches!(
            visibility_mask(&warp, &d0, ToleranceSpec::Absolute(0.0)),
            Err(Error::InvalidTolerance(_))
        ));
    }

    #[test]
    fn holes_block_interpolation() {
        let mut d = Image::filled(4, 4, 1, 2.0);
        d.set(2, 1, 0, 0.0);
        assert_eq!(sample_depth(&d, 1.5, 1.5), Some(2.0));
        assert_eq!(sample_depth(&d, 2.0, 1.5), None);
        assert_eq!(sample_depth(&d, 2.5, 1.5), None);
        assert_eq!(sample_depth(&d, 3.5, 1.5), Some(2.0));
        // Border clamp.
        assert_eq!(sample_depth(&d, 0.1, 0.2), Some(2.0));
    }

    #[test]
    fn sequence_first_frame_is_valid_depth() {
        let f0 = frame(CameraPose::identity());
        let mut d = Image::filled(40, 30, 1, 3.0);
        d.set(0, 0, 0, 0.0);
        let traj = Trajectory::new(vec![f0]).unwrap();
        let masks = mask_sequence(&traj, &[d], ToleranceSpec::default()).unwrap();
        assert_eq!(masks.len(), 1);
        assert_eq!(masks[0].mask.count(), 40 * 30 - 1);
        assert_eq!(masks[0].coverage, (40.0 * 30.0 - 1.0) / 1200.0);
    }
}
