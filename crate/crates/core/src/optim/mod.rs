//! Gradient descent on the masked reward: camera pose refinement, Gaussian
//! scene fitting, and the truncated-normal timestep sampler.

mod fit;
mod pose;
mod timestep;

pub use fit::{scene_fit, View};
pub use pose::{perturbed_start, pose_gradient, pose_refine, translation_error, PoseIncrement};
pub use timestep::{sample_timestep, truncated_normal_cdf, TruncNormalSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RenderOptions;
use crate::reward::RewardConfig;
use crate::scalar::Real;

/// Line search and stopping rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub max_iterations: usize,
    pub initial_step: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub shrink: f64,
    /// Step multiplier after an accepted step.
    pub grow: f64,
    pub max_backtracks: usize,
    /// Stop when the preconditioned gradient norm falls below this.
    pub grad_tol: f64,
    /// Relative decrease regarded as no progress.
    pub plateau_rel: f64,
    /// Consecutive no-progress steps before stopping.
    pub plateau_patience: usize,
    /// A run only counts as converged if it ends at or below this loss.
    pub converged_loss: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            initial_step: 1e-2,
            armijo: 1e-4,
            shrink: 0.5,
            grow: 2.0,
            max_backtracks: 40,
            grad_tol: 1e-8,
            plateau_rel: 1e-9,
            plateau_patience: 10,
            converged_loss: 1e-4,
        }
    }
}

impl StepPolicy {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_step > 0.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.grow >= 1.0
            && self.grad_tol >= 0.0
            && self.plateau_rel >= 0.0;
        if !ok {
            return Err(Error::InvalidSpec(format!("invalid step policy {self:?}")));
        }
        Ok(())
    }
}

/// Everything an optimization run needs besides its data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimSettings<T: Real> {
    pub reward: RewardConfig<T>,
    pub render: RenderOptions<T>,
    pub policy: StepPolicy,
}

impl<T: Real> Default for OptimSettings<T> {
    fn default() -> Self {
        Self {
            reward: RewardConfig::default(),
            render: RenderOptions::default(),
            policy: StepPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientNorm,
    Plateau,
    LineSearch,
    Budget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimReport {
    pub iterations: usize,
    pub accepted_steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Radians, when the ground truth pose is known.
    pub rotation_error: Option<f64>,
    /// Relative to the camera's distance from the scene centroid.
    pub translation_error: Option<f64>,
    /// Held-out views, scene fitting only.
    pub heldout_initial_loss: Option<f64>,
    pub heldout_final_loss: Option<f64>,
    pub stop_reason: StopReason,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

/// A differentiable objective over an abstract state updated by parameter
/// increments.
pub(crate) trait Objective<T: Real> {
    type State: Clone;

    fn value(&self, state: &Self::State) -> Result<T>;
    fn value_grad(&self, state: &Self::State) -> Result<(T, Vec<T>)>;
    fn apply(&self, state: &Self::State, delta: &[T]) -> Result<Self::State>;
    /// Diagonal preconditioner: the descent direction is `−P g`.
    fn preconditioner(&self, state: &Self::State) -> Vec<T>;
    /// Zeroes direction components that would leave the feasible set.
    fn restrict(&self, _state: &Self::State, _dir: &mut [T]) {}
}

pub(crate) struct Descent<S> {
    pub state: S,
    pub iterations: usize,
    pub accepted: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub stop: StopReason,
    pub trace: Vec<TraceRow>,
}

impl<S> Descent<S> {
    pub fn converged(&self, policy: &StepPolicy) -> bool {
        matches!(
            self.stop,
            StopReason::GradientNorm | StopReason::Plateau | StopReason::LineSearch
        ) && self.final_loss <= policy.converged_loss
            && self.final_loss <= self.initial_loss
    }
}

/// Preconditioned gradient descent with Armijo backtracking. Accepted steps
/// never increase the loss.
pub(crate) fn descend<T: Real, O: Objective<T>>(
    obj: &O,
    start: O::State,
    policy: &StepPolicy,
) -> Result<Descent<O::State>> {
    policy.validate()?;
    let mut state = start;
    let (mut f, mut g) = obj.value_grad(&state)?;
    if !f.is_finite() {
        return Err(Error::DivergedLoss { iteration: 0 });
    }
    let initial = f.to_f64_lossy();
    let mut trace = Vec::new();
    let mut step = T::lit(policy.initial_step);
    let mut accepted = 0;
    let mut stall = 0;
    let mut iteration = 0;
    let stop = loop {
        let pre = obj.preconditioner(&state);
        let mut dir: Vec<T> = g.iter().zip(&pre).map(|(gi, p)| -*gi * *p).collect();
        obj.restrict(&state, &mut dir);
        let slope: T = g.iter().zip(&dir).map(|(a, b)| *a * *b).sum();
        let grad_norm = (-slope).max(T::zero()).sqrt().to_f64_lossy();
        trace.push(TraceRow {
            iteration,
            loss: f.to_f64_lossy(),
            grad_norm,
            step: step.to_f64_lossy(),
        });
        if grad_norm < policy.grad_tol {
            break StopReason::GradientNorm;
        }
        if iteration >= policy.max_iterations {
            break StopReason::Budget;
        }
        iteration += 1;
        let mut next = None;
        for _ in 0..=policy.max_backtracks {
            let delta: Vec<T> = dir.iter().map(|d| *d * step).collect();
            let cand = obj.apply(&state, &delta)?;
            let fc = obj.value(&cand)?;
            if fc.is_finite() && fc <= f + T::lit(policy.armijo) * step * slope {
                next = Some((cand, fc));
                break;
            }
            step *= T::lit(policy.shrink);
        }
        let Some((cand, fc)) = next else {
            break StopReason::LineSearch;
        };
        state = cand;
        accepted += 1;
        let prev = f;
        (f, g) = obj.value_grad(&state)?;
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedLoss { iteration });
        }
        debug_assert!(f == fc);
        if prev - f <= T::lit(policy.plateau_rel) * prev.abs() {
            stall += 1;
            if stall >= policy.plateau_patience {
                break StopReason::Plateau;
            }
        } else {
            stall = 0;
        }
        step *= T::lit(policy.grow);
    };
    Ok(Descent {
        state,
        iterations: iteration,
        accepted,
        initial_loss: initial,
        final_loss: f.to_f64_lossy(),
        stop,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Anisotropic quadratic with a box constraint on the first coordinate.
    struct Quadratic;

    impl Objective<f64> for Quadratic {
        type State = Vec<f64>;
        fn value(&self, s: &Vec<f64>) -> Result<f64> {
            Ok((s[0] - 3.0).powi(2) + 10.0 * (s[1] + 1.0).powi(2))
        }
        fn value_grad(&self, s: &Vec<f64>) -> Result<(f64, Vec<f64>)> {
            Ok((
                self.value(s)?,
                vec![2.0 * (s[0] - 3.0), 20.0 * (s[1] + 1.0)],
            ))
        }
        fn apply(&self, s: &Vec<f64>, d: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![(s[0] + d[0]).min(2.0), s[1] + d[1]])
        }
        fn preconditioner(&self, _: &Vec<f64>) -> Vec<f64> {
            vec![1.0, 1.0]
        }
        fn restrict(&self, s: &Vec<f64>, dir: &mut [f64]) {
            if s[0] >= 2.0 && dir[0] > 0.0 {
                dir[0] = 0.0;
            }
        }
    }

    #[test]
    fn monotone_descent_to_constrained_minimum() {
        let policy = StepPolicy {
            max_iterations: 200,
            converged_loss: 1.5,
            ..StepPolicy::default()
        };
        let d = descend(&Quadratic, vec![0.0, 0.0], &policy).unwrap();
        assert!((d.state[0] - 2.0).abs() < 1e-12);
        assert!((d.state[1] + 1.0).abs() < 1e-6);
        for w in d.trace.windows(2) {
            assert!(w[1].loss <= w[0].loss);
        }
        assert!(d.converged(&policy));
    }

    #[test]
    fn starting_at_minimum_stops_immediately() {
        struct Bowl;
        impl Objective<f64> for Bowl {
            type State = f64;
            fn value(&self, s: &f64) -> Result<f64> {
                Ok(s * s)
            }
            fn value_grad(&self, s: &f64) -> Result<(f64, Vec<f64>)> {
                Ok((s * s, vec![2.0 * s]))
            }
            fn apply(&self, s: &f64, d: &[f64]) -> Result<f64> {
                Ok(s + d[0])
            }
            fn preconditioner(&self, _: &f64) -> Vec<f64> {
                vec![1.0]
            }
        }
        let d = descend(&Bowl, 0.0, &StepPolicy::default()).unwrap();
        assert_eq!(d.iterations, 0);
        assert_eq!(d.stop, StopReason::GradientNorm);
    }
}
