//! Camera pose refinement against a fixed scene.

use super::{descend, Objective, OptimReport, OptimSettings};
use crate::camgeo::{CameraFrame, CameraPose};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::linalg::{rotation_angle_between, so3_exp, Mat3, Vec3};
use crate::raster::{render_with, render_with_grad, LossSpec};
use crate::reward::{cro_loss, RewardReport};
use crate::rng::{child_rng, unit_vector};
use crate::scalar::Real;
use crate::scene::GaussianScene;

/// Tangent update of a camera-to-world pose: `R ← exp(ω) R` (a rotation about
/// the camera centre in world axes) and `t ← t + ν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseIncrement<T: Real> {
    pub omega: Vec3<T>,
    pub nu: Vec3<T>,
}

impl<T: Real> PoseIncrement<T> {
    pub fn zero() -> Self {
        Self {
            omega: Vec3::zero(),
            nu: Vec3::zero(),
        }
    }

    pub fn from_slice(v: &[T]) -> Self {
        Self {
            omega: Vec3::new(v[0], v[1], v[2]),
            nu: Vec3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_array(&self) -> [T; 6] {
        let (w, n) = (self.omega, self.nu);
        [w.x, w.y, w.z, n.x, n.y, n.z]
    }

    pub fn apply(&self, pose: &CameraPose<T>) -> Result<CameraPose<T>> {
        if !self.omega.is_finite() || !self.nu.is_finite() {
            return Err(Error::InvalidPose("non-finite pose increment".into()));
        }
        let rotated = pose.rotated_about_center(&so3_exp(self.omega))?;
        Ok(rotated.with_translation(rotated.translation() + self.nu))
    }
}

/// `|t_est − t_gt|` relative to the true camera's distance from `centroid`.
pub fn translation_error<T: Real>(
    estimate: &CameraPose<T>,
    truth: &CameraPose<T>,
    centroid: Vec3<T>,
) -> T {
    (estimate.translation() - truth.translation()).norm() / (truth.translation() - centroid).norm()
}

/// Random stream of [`perturbed_start`].
const START_STREAM: u64 = 99;

/// `pose` rotated by `rotation_deg` about a random axis through its centre,
/// then shifted in a random direction by `translation_frac` of its distance
/// to `centroid`. Axis and direction come from `seed`.
pub fn perturbed_start<T: Real>(
    pose: &CameraPose<T>,
    centroid: Vec3<T>,
    rotation_deg: T,
    translation_frac: T,
    seed: u64,
) -> Result<CameraPose<T>> {
    let mut rng = child_rng(seed, START_STREAM);
    let axis = unit_vector::<T, _>(&mut rng);
    let dir = unit_vector::<T, _>(&mut rng);
    let shift = translation_frac * (pose.center() - centroid).norm();
    let p = pose.rotated_about_center(&so3_exp(axis * rotation_deg.to_radians()))?;
    Ok(p.with_translation(p.translation() + dir * shift))
}

/// Reward at `frame` and its gradient with respect to a pose increment at zero.
pub fn pose_gradient<T: Real>(
    scene: &GaussianScene<T>,
    frame: &CameraFrame<T>,
    target: &Image<T>,
    mask: &Mask,
    settings: &OptimSettings<T>,
) -> Result<(RewardReport<T>, PoseIncrement<T>)> {
    let spec = LossSpec {
        target,
        mask,
        reward: settings.reward,
    };
    let (_, report, g) = render_with_grad(scene, frame, &spec, &settings.render)?;
    let rot = *frame.pose.rotation();
    let t = frame.pose.translation();
    let mut d_omega = Vec3::zero();
    let mut d_nu = Vec3::zero();
    for (i, gauss) in scene.gaussians().iter().enumerate() {
        let gp = g.mean[i];
        let gc = g.cov_cam[i];
        if gp.max_abs() == T::zero() && gc.max_abs() == T::zero() {
            continue;
        }
        let a = gauss.mean - t;
        d_omega += gp.cross(a);
        d_nu -= gp;
        // dΣc/dω_k = Rᵀ(Σ[e_k]× − [e_k]×Σ)R
        let cov = gauss.covariance();
        let gw = rot * gc * rot.transpose();
        for k in 0..3 {
            let e = Mat3::skew(Vec3::axis(k));
            d_omega[k] += gw.frobenius_dot(&(cov * e - e * cov));
        }
    }
    Ok((
        report,
        PoseIncrement {
            omega: d_omega,
            nu: d_nu,
        },
    ))
}

struct PoseObjective<'a, T: Real> {
    scene: &'a GaussianScene<T>,
    frame: &'a CameraFrame<T>,
    target: &'a Image<T>,
    mask: &'a Mask,
    settings: &'a OptimSettings<T>,
    translation_scale: T,
}

impl<T: Real> Objective<T> for PoseObjective<'_, T> {
    type State = CameraPose<T>;

    fn value(&self, pose: &CameraPose<T>) -> Result<T> {
        let frame = self.frame.with_pose(*pose);
        let out = render_with(self.scene, &frame, &self.settings.render)?;
        Ok(cro_loss(&out.color, self.target, self.mask, &self.settings.reward)?.combined)
    }

    fn value_grad(&self, pose: &CameraPose<T>) -> Result<(T, Vec<T>)> {
        let frame = self.frame.with_pose(*pose);
        let (report, g) = pose_gradient(self.scene, &frame, self.target, self.mask, self.settings)?;
        Ok((report.combined, g.to_array().to_vec()))
    }

    fn apply(&self, pose: &CameraPose<T>, delta: &[T]) -> Result<CameraPose<T>> {
        PoseIncrement::from_slice(delta).apply(pose)
    }

    fn preconditioner(&self, _: &CameraPose<T>) -> Vec<T> {
        let s2 = self.translation_scale * self.translation_scale;
        vec![T::one(), T::one(), T::one(), s2, s2, s2]
    }
}

/// Refines the pose of `initial` so that rendering `scene` reproduces
/// `target` inside `mask`. Rotation and translation errors are reported when
/// `truth` is given.
pub fn pose_refine<T: Real>(
    scene: &GaussianScene<T>,
    target: &Image<T>,
    mask: &Mask,
    initial: &CameraFrame<T>,
    settings: &OptimSettings<T>,
    truth: Option<&CameraPose<T>>,
) -> Result<(CameraFrame<T>, OptimReport)> {
    let centroid = scene.centroid();
    // Translations are measured in units of the camera's distance to the scene.
    let dist = (initial.pose.center() - centroid).norm();
    let obj = PoseObjective {
        scene,
        frame: initial,
        target,
        mask,
        settings,
        translation_scale: if dist > T::zero() { dist } else { T::one() },
    };
    let d = descend(&obj, initial.pose, &settings.policy)?;
    let refined = initial.with_pose(d.state);
    let report = OptimReport {
        iterations: d.iterations,
        accepted_steps: d.accepted,
        initial_loss: d.initial_loss,
        final_loss: d.final_loss,
        rotation_error: truth
            .map(|gt| rotation_angle_between(gt.rotation(), d.state.rotation()).to_f64_lossy()),
        translation_error: truth.map(|gt| translation_error(&d.state, gt, centroid).to_f64_lossy()),
        heldout_initial_loss: None,
        heldout_final_loss: None,
        stop_reason: d.stop,
        converged: d.converged(&settings.policy),
        trace: d.trace,
    };
    Ok((refined, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increment_keeps_rotation_orthonormal() {
        let mut pose = CameraPose::<f64>::identity();
        let inc = PoseIncrement {
            omega: Vec3::new(1e-3, -2e-3, 7e-4),
            nu: Vec3::new(1e-3, 0.0, -1e-3),
        };
        for _ in 0..10_000 {
            pose = inc.apply(&pose).unwrap();
        }
        assert!(pose.rotation().orthonormality_error() < 1e-9);
    }

    #[test]
    fn increment_rotates_about_centre() {
        let pose = CameraPose::new(Mat3::identity(), Vec3::new(1.0_f64, 2.0, 3.0)).unwrap();
        let inc = PoseIncrement {
            omega: Vec3::new(0.0, 0.3, 0.0),
            nu: Vec3::zero(),
        };
        let p = inc.apply(&pose).unwrap();
        assert_eq!(p.center(), pose.center());
        assert!((rotation_angle_between(pose.rotation(), p.rotation()) - 0.3).abs() < 1e-12);
    }
}
