//! Pinhole cameras, camera-to-world poses, Plücker ray maps and trajectories.
//!
//! Conventions used throughout the crate:
//!
//! * Poses are camera-to-world: `X_world = R · X_cam + t`, so `t` is the
//!   camera centre in world coordinates.
//! * Cameras look down `+z`; `x` points right and `y` down in the image.
//! * Continuous pixel coordinates put the centre of pixel `(i, j)` at
//!   `(i + 0.5, j + 0.5)`. Ray generation always uses pixel centres.

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

fn rotation_tolerance<T: Real>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(64.0))
}

/// Pinhole intrinsics in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Intrinsics with the given horizontal field of view and the principal
    /// point at the image centre.
    pub fn from_fov(width: usize, height: usize, fov_x_deg: T) -> Result<Self> {
        let half = (fov_x_deg.to_radians() * T::half()).tan();
        let f = T::from_usize_lossy(width) * T::half() / half;
        Self::new(
            f,
            f,
            T::from_usize_lossy(width) * T::half(),
            T::from_usize_lossy(height) * T::half(),
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics(format!(
                "image size {}x{} must be positive",
                self.width, self.height
            )));
        }
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        let w = T::from_usize_lossy(self.width);
        let h = T::from_usize_lossy(self.height);
        if !(self.cx >= T::zero() && self.cx < w && self.cy >= T::zero() && self.cy < h) {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Mat3<T> {
        let (z, o) = (T::zero(), T::one());
        Mat3::from_rows([[self.fx, z, self.cx], [z, self.fy, self.cy], [z, z, o]])
    }

    /// `K⁻¹ · [u, v, 1]ᵀ`: the camera-space point at unit depth.
    #[inline]
    pub fn backproject(&self, u: T, v: T) -> Vec3<T> {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, T::one())
    }

    /// Pixel coordinates of a camera-space point (no depth check).
    #[inline]
    pub fn to_pixel(&self, p: Vec3<T>) -> (T, T) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Whether continuous pixel coordinates fall inside `[0, w) × [0, h)`.
    pub fn contains(&self, u: T, v: T) -> bool {
        u >= T::zero()
            && v >= T::zero()
            && u < T::from_usize_lossy(self.width)
            && v < T::from_usize_lossy(self.height)
    }

    pub fn cast<U: Real>(&self) -> CameraIntrinsics<U> {
        CameraIntrinsics {
            fx: U::lit(self.fx.to_f64_lossy()),
            fy: U::lit(self.fy.to_f64_lossy()),
            cx: U::lit(self.cx.to_f64_lossy()),
            cy: U::lit(self.cy.to_f64_lossy()),
            width: self.width,
            height: self.height,
        }
    }
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose<T> {
    rotation: Mat3<T>,
    translation: Vec3<T>,
}

impl<T: Real> CameraPose<T> {
    /// Builds a pose, checking `RᵀR = I` and `det R = +1` to 1e-9.
    pub fn new(rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self> {
        let tol = rotation_tolerance::<T>();
        if !rotation.is_finite() || !translation.is_finite() {
            return Err(Error::InvalidPose("non-finite entries".into()));
        }
        let ortho = rotation.orthonormality_error();
        if ortho > tol {
            return Err(Error::InvalidPose(format!(
                "rotation not orthonormal (|RᵀR − I| = {:e})",
                ortho.to_f64_lossy()
            )));
        }
        let det = rotation.determinant();
        if (det - T::one()).abs() > tol {
            return Err(Error::InvalidPose(format!("det(R) = {det}, expected +1")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
        }
    }

    pub fn from_translation(t: Vec3<T>) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: t,
        }
    }

    /// Pose from a world-to-camera transform `X_cam = R_wc · X_world + t_wc`.
    pub fn from_world_to_camera(r_wc: Mat3<T>, t_wc: Vec3<T>) -> Result<Self> {
        let r = r_wc.transpose();
        Self::new(r, -(r * t_wc))
    }

    /// The world-to-camera `(R_wc, t_wc)` pair.
    pub fn world_to_camera(&self) -> (Mat3<T>, Vec3<T>) {
        let r_wc = self.rotation.transpose();
        (r_wc, -(r_wc * self.translation))
    }

    /// Camera whose centre sits at `eye` looking towards `target`, with image
    /// `y` pointing along `-up` as far as possible.
    pub fn look_at(eye: Vec3<T>, target: Vec3<T>, up: Vec3<T>) -> Result<Self> {
        let z = (target - eye).normalize();
        let x = z.cross(up).normalize();
        if x.norm() < T::lit(0.5) {
            return Err(Error::InvalidPose("look_at: up is parallel to view".into()));
        }
        let y = z.cross(x);
        let r = Mat3::from_rows([[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]]);
        Self::new(r, eye)
    }

    #[inline]
    pub fn rotation(&self) -> &Mat3<T> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> Vec3<T> {
        self.translation
    }

    /// Camera centre in world coordinates.
    #[inline]
    pub fn center(&self) -> Vec3<T> {
        self.translation
    }

    #[inline]
    pub fn camera_to_world(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn world_to_camera_point(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation.tr_mul_vec(p - self.translation)
    }

    /// `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn with_translation(&self, t: Vec3<T>) -> Self {
        Self {
            rotation: self.rotation,
            translation: t,
        }
    }

    /// Left-multiplies the rotation by `delta` (a rotation about the camera
    /// centre expressed in world axes) and re-orthonormalizes.
    pub fn rotated_about_center(&self, delta: &Mat3<T>) -> Result<Self> {
        let r = (*delta * self.rotation)
            .orthonormalized()
            .ok_or_else(|| Error::InvalidPose("singular rotation update".into()))?;
        Self::new(r, self.translation)
    }

    pub fn cast<U: Real>(&self) -> CameraPose<U> {
        CameraPose {
            rotation: self.rotation.cast(),
            translation: self.translation.cast(),
        }
    }
}

/// One view: intrinsics plus camera-to-world pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame<T> {
    pub intrinsics: CameraIntrinsics<T>,
    pub pose: CameraPose<T>,
    /// Source timestamp in microseconds, carried through file round trips.
    pub timestamp: Option<i64>,
}

impl<T: Real> CameraFrame<T> {
    pub fn new(intrinsics: CameraIntrinsics<T>, pose: CameraPose<T>) -> Self {
        Self {
            intrinsics,
            pose,
            timestamp: None,
        }
    }

    pub fn with_timestamp(mut self, timestamp: i64) -> Self {
        self.timestamp = Some(timestamp);
        self
    }

    pub fn with_pose(&self, pose: CameraPose<T>) -> Self {
        Self { pose, ..*self }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    /// World-space unit ray through continuous pixel coordinates `(u, v)`.
    #[inline]
    pub fn ray_direction(&self, u: T, v: T) -> Vec3<T> {
        (*self.pose.rotation() * self.intrinsics.backproject(u, v)).normalize()
    }

    /// Plücker ray through the centre of pixel `(x, y)`.
    pub fn pixel_ray(&self, x: usize, y: usize) -> PluckerRay<T> {
        let u = T::from_usize_lossy(x) + T::half();
        let v = T::from_usize_lossy(y) + T::half();
        PluckerRay::new(self.pose.center(), self.ray_direction(u, v))
    }

    pub fn cast<U: Real>(&self) -> CameraFrame<U> {
        CameraFrame {
            intrinsics: self.intrinsics.cast(),
            pose: self.pose.cast(),
            timestamp: self.timestamp,
        }
    }
}

/// Ordered camera frames sharing one image size.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    frames: Vec<CameraFrame<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(frames: Vec<CameraFrame<T>>) -> Result<Self> {
        let first = frames.first().ok_or_else(|| {
            Error::InvalidTrajectory("a trajectory needs at least one frame".into())
        })?;
        let (w, h) = (first.width(), first.height());
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.width() != w || f.height() != h)
        {
            return Err(Error::InvalidTrajectory(format!(
                "frame {i} is {}x{}, frame 0 is {w}x{h}",
                f.width(),
                f.height()
            )));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[CameraFrame<T>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    /// Sum of distances between consecutive camera centres.
    pub fn path_length(&self) -> T {
        self.frames
            .windows(2)
            .map(|w| (w[1].pose.center() - w[0].pose.center()).norm())
            .sum()
    }
}

/// Line through `origin` along unit `direction`, with moment `origin × direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluckerRay<T> {
    pub origin: Vec3<T>,
    pub direction: Vec3<T>,
    pub moment: Vec3<T>,
}

impl<T: Real> PluckerRay<T> {
    /// `direction` is normalized here.
    pub fn new(origin: Vec3<T>, direction: Vec3<T>) -> Self {
        let direction = direction.normalize();
        Self {
            origin,
            direction,
            moment: origin.cross(direction),
        }
    }

    /// Point at distance `t` along the ray.
    #[inline]
    pub fn at(&self, t: T) -> Vec3<T> {
        self.origin + self.direction * t
    }

    /// The six-vector `(moment, direction)`.
    pub fn to_six(&self) -> [T; 6] {
        [
            self.moment.x,
            self.moment.y,
            self.moment.z,
            self.direction.x,
            self.direction.y,
            self.direction.z,
        ]
    }
}

/// Per-pixel Plücker rays of one frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PluckerMap<T> {
    width: usize,
    height: usize,
    rays: Vec<PluckerRay<T>>,
}

impl<T: Real> PluckerMap<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &PluckerRay<T> {
        &self.rays[y * self.width + x]
    }

    pub fn rays(&self) -> &[PluckerRay<T>] {
        &self.rays
    }

    /// Channel-major `6 × h × w` tensor: three moment planes then three direction planes.
    pub fn to_channels(&self) -> Vec<T> {
        let n = self.rays.len();
        let mut out = vec![T::zero(); 6 * n];
        for (i, r) in self.rays.iter().enumerate() {
            for (c, v) in r.to_six().into_iter().enumerate() {
                out[c * n + i] = v;
            }
        }
        out
    }
}

/// One Plücker ray per pixel centre of `frame`.
pub fn plucker_embedding<T: Real>(frame: &CameraFrame<T>) -> PluckerMap<T> {
    let (w, h) = (frame.width(), frame.height());
    let mut rays = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            rays.push(frame.pixel_ray(x, y));
        }
    }
    PluckerMap {
        width: w,
        height: h,
        rays,
    }
}

/// Back-projects continuous pixel `(u, v)` at camera-z `depth` into world space.
pub fn unproject<T: Real>(u: T, v: T, depth: T, frame: &CameraFrame<T>) -> Result<Vec3<T>> {
    if !(depth > T::zero()) {
        return Err(Error::NonPositiveDepth(depth.to_f64_lossy()));
    }
    let cam = frame.intrinsics.backproject(u, v) * depth;
    Ok(frame.pose.camera_to_world(cam))
}

/// Result of projecting a world point into a camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<T> {
    pub u: T,
    pub v: T,
    /// Camera-space z; `≤ 0` means the point is behind the camera.
    pub depth: T,
}

impl<T: Real> Projection<T> {
    pub fn in_front(&self) -> bool {
        self.depth > T::zero()
    }
}

/// Projects a world point; behind-camera points are reported through `depth ≤ 0`.
pub fn project<T: Real>(point: Vec3<T>, frame: &CameraFrame<T>) -> Projection<T> {
    let cam = frame.pose.world_to_camera_point(point);
    let (u, v) = frame.intrinsics.to_pixel(cam);
    Projection { u, v, depth: cam.z }
}

/// Multiplies every camera translation by `s`; rotations and intrinsics are untouched.
pub fn scale_trajectory<T: Real>(traj: &Trajectory<T>, s: T) -> Result<Trajectory<T>> {
    if !(s > T::zero()) || !s.is_finite() {
        return Err(Error::NonPositiveScale(s.to_f64_lossy()));
    }
    let frames = traj
        .frames()
        .iter()
        .map(|f| f.with_pose(f.pose.with_translation(f.pose.translation() * s)))
        .collect();
    Trajectory::new(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::so3_exp;

    fn frame_64() -> CameraFrame<f64> {
        // Principal point on the centre of pixel (32, 24).
        let k = CameraIntrinsics::new(50.0, 55.0, 32.5, 24.5, 64, 48).unwrap();
        CameraFrame::new(k, CameraPose::identity())
    }

    #[test]
    fn principal_ray_identity_pose() {
        let map = plucker_embedding(&frame_64());
        let r = map.get(32, 24);
        assert_eq!(r.direction, Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(r.moment, Vec3::zero());
    }

    #[test]
    fn principal_ray_translated_pose() {
        let mut f = frame_64();
        f.pose = CameraPose::from_translation(Vec3::new(1.0, 0.0, 0.0));
        let r = *plucker_embedding(&f).get(32, 24);
        assert_eq!(r.direction, Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(r.moment, Vec3::new(0.0, -1.0, 0.0));
    }

    #[test]
    fn channel_layout() {
        let f = frame_64();
        let map = plucker_embedding(&f);
        let t = map.to_channels();
        let n = 64 * 48;
        let r = map.get(5, 7);
        let i = 7 * 64 + 5;
        assert_eq!(t[3 * n + i], r.direction.x);
        assert_eq!(t[5 * n + i], r.direction.z);
        assert_eq!(t[i], r.moment.x);
    }

    #[test]
    fn unproject_examples() {
        let f = frame_64();
        let p = unproject(32.5, 24.5, 5.0, &f).unwrap();
        assert_eq!(p, Vec3::new(0.0, 0.0, 5.0));
        let g = f.with_pose(CameraPose::from_translation(Vec3::new(0.0, 1.0, 0.0)));
        assert_eq!(
            unproject(32.5, 24.5, 2.0, &g).unwrap(),
            Vec3::new(0.0, 1.0, 2.0)
        );
        assert!(matches!(
            unproject(1.0, 1.0, 0.0, &f),
            Err(Error::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn project_examples() {
        let f = frame_64();
        let p = project(Vec3::new(0.0, 0.0, 5.0), &f);
        assert_eq!((p.u, p.v, p.depth), (32.5, 24.5, 5.0));
        let behind = project(Vec3::new(0.0, 0.0, -1.0), &f);
        assert_eq!(behind.depth, -1.0);
        assert!(!behind.in_front());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.9, 0.0, 4, 4).is_ok());
        assert!(CameraIntrinsics::<f64>::new(1.0, 1.0, 0.0, 0.0, 0, 4).is_err());
    }

    #[test]
    fn pose_validation() {
        let mut r = so3_exp(Vec3::new(0.1, 0.2, 0.3));
        assert!(CameraPose::new(r, Vec3::zero()).is_ok());
        r.m[0][0] += 1e-6;
        assert!(CameraPose::new(r, Vec3::zero()).is_err());
        let reflect = Mat3::diagonal(Vec3::new(1.0, 1.0, -1.0));
        assert!(CameraPose::new(reflect, Vec3::zero()).is_err());
    }

    #[test]
    fn world_to_camera_round_trip() {
        let pose =
            CameraPose::new(so3_exp(Vec3::new(0.4, -0.2, 0.9)), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        let (r, t) = pose.world_to_camera();
        let back = CameraPose::from_world_to_camera(r, t).unwrap();
        assert!((*back.rotation() - *pose.rotation()).max_abs() < 1e-15);
        assert!((back.translation() - pose.translation()).max_abs() < 1e-15);
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let eye = Vec3::new(1.0_f64, -2.0, 0.5);
        let target = Vec3::new(0.0, 0.0, 6.0);
        let pose = CameraPose::look_at(eye, target, Vec3::new(0.0, -1.0, 0.0)).unwrap();
        let cam = pose.world_to_camera_point(target);
        assert!(cam.x.abs() < 1e-12 && cam.y.abs() < 1e-12 && cam.z > 0.0);
    }

    #[test]
    fn scale_trajectory_examples() {
        let k = frame_64().intrinsics;
        let pose = CameraPose::from_translation(Vec3::new(1.0, 2.0, 3.0));
        let traj = Trajectory::new(vec![CameraFrame::new(k, pose)]).unwrap();
        assert_eq!(scale_trajectory(&traj, 1.0).unwrap(), traj);
        let s = scale_trajectory(&traj, 2.0).unwrap();
        assert_eq!(s.frames()[0].pose.translation(), Vec3::new(2.0, 4.0, 6.0));
        assert!(matches!(
            scale_trajectory(&traj, 0.0),
            Err(Error::NonPositiveScale(_))
        ));
    }

    #[test]
    fn trajectory_requires_consistent_size() {
        let a = frame_64();
        let mut b = a;
        b.intrinsics.width = 32;
        b.intrinsics.cx = 16.0;
        assert!(Trajectory::new(vec![a, b]).is_err());
        assert!(Trajectory::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn f32_frames_work() {
        let f = frame_64().cast::<f32>();
        let r = f.pixel_ray(3, 40);
        assert!((r.direction.norm() - 1.0).abs() < 1e-6);
        let p = unproject(10.25_f32, 3.5, 7.0, &f).unwrap();
        let q = project(p, &f);
        assert!((q.u - 10.25).abs() < 1e-4 && (q.depth - 7.0).abs() < 1e-5);
    }
}
