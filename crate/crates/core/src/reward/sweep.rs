//! Reward as a function of camera pose error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cro_loss_batch, RewardConfig};
use crate::camgeo::{CameraFrame, CameraPose, Trajectory};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::linalg::so3_exp;
use crate::raster::{render_with, RenderOptions};
use crate::rng::{child_rng, derive_seed, unit_vector};
use crate::scalar::Real;
use crate::scene::GaussianScene;

/// Perturbation levels. The two lists are paired element-wise; a list of
/// length one is repeated to the length of the other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub rotation_deg: Vec<f64>,
    /// Fractions of the trajectory path length.
    pub translation_frac: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self {
            rotation_deg: vec![0.0, 0.5, 1.0, 2.0, 5.0],
            translation_frac: vec![0.0],
            trials: 3,
            seed: 0,
        }
    }
}

impl PerturbSpec {
    pub fn levels(&self) -> Result<Vec<(f64, f64)>> {
        let (r, t) = (&self.rotation_deg, &self.translation_frac);
        let n = r.len().max(t.len());
        let ok = |len: usize| len == n || len == 1;
        if r.is_empty() || t.is_empty() || !ok(r.len()) || !ok(t.len()) {
            return Err(Error::InvalidSpec(format!(
                "rotation list has {} entries and translation list {}; lengths must match or be 1",
                r.len(),
                t.len()
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidSpec("trials must be at least 1".into()));
        }
        if r.iter().chain(t).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidSpec(
                "magnitudes must be finite and non-negative".into(),
            ));
        }
        Ok((0..n)
            .map(|i| (r[i.min(r.len() - 1)], t[i.min(t.len() - 1)]))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rotation_deg: f64,
    pub translation_frac: f64,
    pub mean: f64,
    pub std: f64,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
    /// Rank correlation between level order and mean loss.
    pub spearman: f64,
}

impl SweepCurve {
    /// Whether the unperturbed level (if any) has the smallest mean loss.
    pub fn minimum_at_zero(&self) -> bool {
        let Some(zero) = self
            .points
            .iter()
            .find(|p| p.rotation_deg == 0.0 && p.translation_frac == 0.0)
        else {
            return false;
        };
        self.points.iter().all(|p| zero.mean <= p.mean)
    }
}

/// Perturbs a pose by a rotation of `angle_deg` about `axis` through the
/// camera centre and a translation of length `shift` along `dir`.
pub fn perturb_pose<T: Real>(
    pose: &CameraPose<T>,
    axis: crate::linalg::Vec3<T>,
    angle_deg: T,
    dir: crate::linalg::Vec3<T>,
    shift: T,
) -> Result<CameraPose<T>> {
    let mut p = *pose;
    if angle_deg != T::zero() {
        p = p.rotated_about_center(&so3_exp(axis * angle_deg.to_radians()))?;
    }
    if shift != T::zero() {
        p = p.with_translation(p.translation() + dir * shift);
    }
    Ok(p)
}

fn perturbed_frames<T: Real>(
    trajectory: &Trajectory<T>,
    rot_deg: f64,
    trans: T,
    seed: u64,
) -> Result<Vec<CameraFrame<T>>> {
    trajectory
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut rng = child_rng(seed, i as u64);
            let axis = unit_vector::<T, _>(&mut rng);
            let dir = unit_vector::<T, _>(&mut rng);
            Ok(f.with_pose(perturb_pose(&f.pose, axis, T::lit(rot_deg), dir, trans)?))
        })
        .collect()
}

/// Renders the scene at randomly perturbed poses and scores each render
/// against the ground-truth frames.
#[allow(clippy::too_many_arguments)]
pub fn perturbation_sweep<T: Real>(
    scene: &GaussianScene<T>,
    trajectory: &Trajectory<T>,
    gt_frames: &[Image<T>],
    masks: Option<&[Mask]>,
    spec: &PerturbSpec,
    cfg: &RewardConfig<T>,
    options: &RenderOptions<T>,
) -> Result<SweepCurve> {
    let levels = spec.levels()?;
    if gt_frames.len() != trajectory.len() {
        return Err(Error::shape(
            "ground-truth frames",
            trajectory.len(),
            gt_frames.len(),
        ));
    }
    let full: Vec<Mask>;
    let masks = match masks {
        Some(m) => m,
        None => {
            full = vec![Mask::full(trajectory.width(), trajectory.height()); trajectory.len()];
            &full
        }
    };
    let path = trajectory.path_length();
    let jobs: Vec<(usize, usize)> = (0..levels.len())
        .flat_map(|l| (0..spec.trials).map(move |t| (l, t)))
        .collect();
    let losses: Vec<f64> = jobs
        .par_iter()
        .map(|&(l, t)| {
            let (rot, frac) = levels[l];
            let seed = derive_seed(spec.seed, (l * spec.trials + t) as u64);
            let frames = perturbed_frames(trajectory, rot, path * T::lit(frac), seed)?;
            let renders = frames
                .iter()
                .map(|f| render_with(scene, f, options).map(|o| o.color))
                .collect::<Result<Vec<_>>>()?;
            Ok(cro_loss_batch(&renders, gt_frames, masks, cfg)?
                .combined
                .to_f64_lossy())
        })
        .collect::<Result<_>>()?;
    let points: Vec<SweepPoint> = levels
        .iter()
        .enumerate()
        .map(|(l, &(rot, frac))| {
            let ls = losses[l * spec.trials..(l + 1) * spec.trials].to_vec();
            let n = ls.len() as f64;
            let mean = ls.iter().sum::<f64>() / n;
            let var = ls.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            SweepPoint {
                rotation_deg: rot,
                translation_frac: frac,
                mean,
                std: var.sqrt(),
                losses: ls,
            }
        })
        .collect();
    let order: Vec<f64> = (0..points.len()).map(|i| i as f64).collect();
    let means: Vec<f64> = points.iter().map(|p| p.mean).collect();
    Ok(SweepCurve {
        spearman: spearman(&order, &means),
        points,
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties; NaN when either
/// input is constant or shorter than two.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.len() < 2 {
        return f64::NAN;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    cov / (va * vb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        // One adjacent swap among five: 1 − 6·2/120.
        let r = spearman(&[0.0, 1.0, 2.0, 3.0, 4.0], &[0.0, 2.0, 1.0, 3.0, 4.0]);
        assert!((r - 0.9).abs() < 1e-12);
        assert!(spearman(&[1.0, 2.0], &[5.0, 5.0]).is_nan());
    }

    #[test]
    fn ties_get_average_rank() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn levels_broadcast() {
        let spec = PerturbSpec {
            rotation_deg: vec![0.0, 1.0, 2.0],
            translation_frac: vec![0.01],
            trials: 1,
            seed: 0,
        };
        assert_eq!(
            spec.levels().unwrap(),
            vec![(0.0, 0.01), (1.0, 0.01), (2.0, 0.01)]
        );
        let bad = PerturbSpec {
            translation_frac: vec![0.0, 0.1],
            ..spec
        };
        assert!(bad.levels().is_err());
    }
}
