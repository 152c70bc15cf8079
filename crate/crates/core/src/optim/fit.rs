//! Fitting Gaussian means, colours and opacities to posed images.

use super::{descend, Objective, OptimReport, OptimSettings};
use crate::camgeo::CameraFrame;
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::raster::{render_with, render_with_grad, LossSpec};
use crate::reward::cro_loss;
use crate::scalar::Real;
use crate::scene::GaussianScene;

pub const MIN_OPACITY: f64 = 1e-3;
const PARAMS: usize = 7;

/// A posed supervision image; no mask means every pixel counts.
#[derive(Debug, Clone, PartialEq)]
pub struct View<T> {
    pub frame: CameraFrame<T>,
    pub image: Image<T>,
    pub mask: Option<Mask>,
}

impl<T: Real> View<T> {
    pub fn new(frame: CameraFrame<T>, image: Image<T>) -> Self {
        Self {
            frame,
            image,
            mask: None,
        }
    }

    pub fn with_mask(mut self, mask: Mask) -> Self {
        self.mask = Some(mask);
        self
    }

    fn mask(&self) -> Mask {
        self.mask
            .clone()
            .unwrap_or_else(|| Mask::full(self.frame.width(), self.frame.height()))
    }
}

struct FitObjective<'a, T: Real> {
    views: &'a [View<T>],
    masks: Vec<Mask>,
    settings: &'a OptimSettings<T>,
    mean_scale: T,
}

impl<T: Real> FitObjective<'_, T> {
    fn loss(&self, scene: &GaussianScene<T>) -> Result<T> {
        let mut total = T::zero();
        for (v, m) in self.views.iter().zip(&self.masks) {
            let out = render_with(scene, &v.frame, &self.settings.render)?;
            total += cro_loss(&out.color, &v.image, m, &self.settings.reward)?.combined;
        }
        Ok(total / T::from_usize_lossy(self.views.len()))
    }
}

impl<T: Real> Objective<T> for FitObjective<'_, T> {
    type State = GaussianScene<T>;

    fn value(&self, scene: &GaussianScene<T>) -> Result<T> {
        self.loss(scene)
    }

    fn value_grad(&self, scene: &GaussianScene<T>) -> Result<(T, Vec<T>)> {
        let n = T::from_usize_lossy(self.views.len());
        let mut total = T::zero();
        let mut grad = vec![T::zero(); scene.len() * PARAMS];
        for (v, m) in self.views.iter().zip(&self.masks) {
            let spec = LossSpec {
                target: &v.image,
                mask: m,
                reward: self.settings.reward,
            };
            let (_, report, g) = render_with_grad(scene, &v.frame, &spec, &self.settings.render)?;
            total += report.combined;
            for i in 0..scene.len() {
                let dst = &mut grad[i * PARAMS..(i + 1) * PARAMS];
                for a in 0..3 {
                    dst[a] += g.mean[i][a] / n;
                    dst[3 + a] += g.color[i][a] / n;
                }
                dst[6] += g.opacity[i] / n;
            }
        }
        Ok((total / n, grad))
    }

    fn apply(&self, scene: &GaussianScene<T>, delta: &[T]) -> Result<GaussianScene<T>> {
        let lo = T::lit(MIN_OPACITY);
        let gs = scene
            .gaussians()
            .iter()
            .zip(delta.chunks(PARAMS))
            .map(|(g, d)| {
                let mut g = *g;
                for a in 0..3 {
                    g.mean[a] += d[a];
                    g.color[a] = (g.color[a] + d[3 + a]).max(T::zero()).min(T::one());
                }
                g.opacity = (g.opacity + d[6]).max(lo).min(T::one());
                g
            })
            .collect();
        scene.with_gaussians(gs)
    }

    fn preconditioner(&self, scene: &GaussianScene<T>) -> Vec<T> {
        let s2 = self.mean_scale * self.mean_scale;
        let mut p = Vec::with_capacity(scene.len() * PARAMS);
        for _ in 0..scene.len() {
            p.extend_from_slice(&[s2, s2, s2, T::one(), T::one(), T::one(), T::one()]);
        }
        p
    }

    fn restrict(&self, scene: &GaussianScene<T>, dir: &mut [T]) {
        let lo = T::lit(MIN_OPACITY);
        for (g, d) in scene.gaussians().iter().zip(dir.chunks_mut(PARAMS)) {
            for a in 0..3 {
                let c = g.color[a];
                if (c <= T::zero() && d[3 + a] < T::zero())
                    || (c >= T::one() && d[3 + a] > T::zero())
                {
                    d[3 + a] = T::zero();
                }
            }
            if (g.opacity <= lo && d[6] < T::zero()) || (g.opacity >= T::one() && d[6] > T::zero())
            {
                d[6] = T::zero();
            }
        }
    }
}

fn objective<'a, T: Real>(
    views: &'a [View<T>],
    settings: &'a OptimSettings<T>,
    mean_scale: T,
) -> FitObjective<'a, T> {
    FitObjective {
        views,
        masks: views.iter().map(View::mask).collect(),
        settings,
        mean_scale,
    }
}

/// Descends the mean reward over `seen` views. Losses on `heldout` views are
/// evaluated before and after and reported separately; they never enter the
/// objective.
pub fn scene_fit<T: Real>(
    initial: &GaussianScene<T>,
    seen: &[View<T>],
    heldout: &[View<T>],
    settings: &OptimSettings<T>,
) -> Result<(GaussianScene<T>, OptimReport)> {
    if seen.is_empty() {
        return Err(Error::InvalidSpec(
            "scene fitting needs at least one view".into(),
        ));
    }
    if initial.is_empty() {
        return Err(Error::EmptyScene);
    }
    // Mean steps are measured in units of the average Gaussian extent.
    let mean_scale = initial
        .gaussians()
        .iter()
        .map(|g| (g.scale.x + g.scale.y + g.scale.z) / T::lit(3.0))
        .sum::<T>()
        / T::from_usize_lossy(initial.len());
    let obj = objective(seen, settings, mean_scale);
    let held = objective(heldout, settings, mean_scale);
    let heldout_initial = if heldout.is_empty() {
        None
    } else {
        Some(held.loss(initial)?.to_f64_lossy())
    };
    let d = descend(&obj, initial.clone(), &settings.policy)?;
    let heldout_final = if heldout.is_empty() {
        None
    } else {
        Some(held.loss(&d.state)?.to_f64_lossy())
    };
    let report = OptimReport {
        iterations: d.iterations,
        accepted_steps: d.accepted,
        initial_loss: d.initial_loss,
        final_loss: d.final_loss,
        rotation_error: None,
        translation_error: None,
        heldout_initial_loss: heldout_initial,
        heldout_final_loss: heldout_final,
        stop_reason: d.stop,
        converged: d.converged(&settings.policy),
        trace: d.trace,
    };
    Ok((d.state, report))
}
