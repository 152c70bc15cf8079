//! Visibility-masked photometric reward, quality metrics and the pose
//! perturbation sweep.
//!
//! The reward is `mse + λ · perceptual`, where the perceptual term is
//! `1 − SSIM` over windows lying fully inside the mask (or absent).

mod ssim;
mod sweep;

pub use sweep::{perturbation_sweep, spearman, PerturbSpec, SweepCurve, SweepPoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::scalar::Real;

pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_SSIM_WINDOW: usize = 11;
pub const DEFAULT_SSIM_SIGMA: f64 = 1.5;
pub const DEFAULT_MIN_COVERAGE: f64 = 0.01;
/// Reported PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerceptualKind {
    Ssim,
    None,
}

impl std::str::FromStr for PerceptualKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ssim" => Ok(Self::Ssim),
            "none" => Ok(Self::None),
            other => Err(Error::InvalidRewardConfig(format!(
                "unknown perceptual kind `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RewardConfig<T: Real> {
    pub lambda: T,
    pub perceptual: PerceptualKind,
    pub ssim_window: usize,
    pub ssim_sigma: T,
    /// Masks covering less than this fraction of the image are rejected.
    pub min_coverage: f64,
}

impl<T: Real> Default for RewardConfig<T> {
    fn default() -> Self {
        Self {
            lambda: T::lit(DEFAULT_LAMBDA),
            perceptual: PerceptualKind::Ssim,
            ssim_window: DEFAULT_SSIM_WINDOW,
            ssim_sigma: T::lit(DEFAULT_SSIM_SIGMA),
            min_coverage: DEFAULT_MIN_COVERAGE,
        }
    }
}

impl<T: Real> RewardConfig<T> {
    pub fn mse_only() -> Self {
        Self {
            perceptual: PerceptualKind::None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= T::zero()) || !self.lambda.is_finite() {
            return Err(Error::InvalidRewardConfig(format!(
                "lambda must be ≥ 0, got {}",
                self.lambda
            )));
        }
        ssim::check_window(self.ssim_window)?;
        if !(self.ssim_sigma > T::zero()) {
            return Err(Error::InvalidRewardConfig(format!(
                "SSIM sigma must be positive, got {}",
                self.ssim_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.min_coverage) {
            return Err(Error::InvalidRewardConfig(format!(
                "min_coverage must lie in [0, 1], got {}",
                self.min_coverage
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FrameReward<T: Real> {
    pub frame: usize,
    pub masked_mse: T,
    pub masked_perceptual: T,
    pub combined: T,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RewardReport<T: Real> {
    pub masked_mse: T,
    /// `1 − SSIM`, or 0 when the perceptual term is disabled.
    pub masked_perceptual: T,
    /// `masked_mse + lambda · masked_perceptual`.
    pub combined: T,
    pub lambda: T,
    pub coverage: f64,
    pub frames: Vec<FrameReward<T>>,
}

fn check_coverage(mask: &Mask, min: f64) -> Result<()> {
    let coverage = mask.coverage();
    if mask.count() == 0 || coverage < min {
        return Err(Error::EmptyMask { coverage, min });
    }
    Ok(())
}

fn check_inputs<T: Real>(rendered: &Image<T>, target: &Image<T>, mask: &Mask) -> Result<()> {
    rendered.ensure_shape(target, "rendered vs target")?;
    mask.ensure_size(rendered, "mask")
}

/// Mean of `(Î − I)²` over masked pixels and all channels, and optionally its
/// gradient with respect to `Î`.
pub(crate) fn mse_eval<T: Real>(
    rendered: &Image<T>,
    target: &Image<T>,
    mask: &Mask,
    with_grad: bool,
) -> (T, Option<Image<T>>) {
    let ch = rendered.channels();
    let n = T::from_usize_lossy(mask.count() * ch);
    let mut sum = T::zero();
    let mut grad = with_grad.then(|| Image::new(rendered.width(), rendered.height(), ch));
    let scale = T::two() / n;
    for (p, &inside) in mask.data().iter().enumerate() {
        if !inside {
            continue;
        }
        for c in 0..ch {
            let i = p * ch + c;
            let d = rendered.data()[i] - target.data()[i];
            sum += d * d;
            if let Some(g) = grad.as_mut() {
                g.data_mut()[i] = scale * d;
            }
        }
    }
    (sum / n, grad)
}

/// Masked mean squared error with the default coverage threshold.
pub fn masked_mse<T: Real>(rendered: &Image<T>, target: &Image<T>, mask: &Mask) -> Result<T> {
    check_inputs(rendered, target, mask)?;
    check_coverage(mask, DEFAULT_MIN_COVERAGE)?;
    Ok(mse_eval(rendered, target, mask, false).0)
}

/// Masked SSIM (not the loss) with the default window.
pub fn masked_ssim<T: Real>(rendered: &Image<T>, target: &Image<T>, mask: &Mask) -> Result<T> {
    masked_ssim_with(rendered, target, mask, &RewardConfig::default())
}

pub fn masked_ssim_with<T: Real>(
    rendered: &Image<T>,
    target: &Image<T>,
    mask: &Mask,
    cfg: &RewardConfig<T>,
) -> Result<T> {
    cfg.validate()?;
    check_inputs(rendered, target, mask)?;
    check_coverage(mask, cfg.min_coverage)?;
    Ok(ssim::masked_ssim_eval(
        rendered,
        target,
        mask,
        cfg.ssim_window,
        cfg.ssim_sigma,
        false,
    )?
    .ssim)
}

/// Reward value and, on request, `d combined / d Î`.
pub struct RewardEval<T: Real> {
    pub report: RewardReport<T>,
    pub grad: Option<Image<T>>,
}

pub fn evaluate<T: Real>(
    rendered: &Image<T>,
    target: &Image<T>,
    mask: &Mask,
    cfg: &RewardConfig<T>,
    with_grad: bool,
) -> Result<RewardEval<T>> {
    cfg.validate()?;
    check_inputs(rendered, target, mask)?;
    check_coverage(mask, cfg.min_coverage)?;
    let (mse, mut grad) = mse_eval(rendered, target, mask, with_grad);
    let perceptual = match cfg.perceptual {
        PerceptualKind::None => T::zero(),
        PerceptualKind::Ssim => {
            let s = ssim::masked_ssim_eval(
                rendered,
                target,
                mask,
                cfg.ssim_window,
                cfg.ssim_sigma,
                with_grad,
            )?;
            if let (Some(g), Some(gs)) = (grad.as_mut(), s.grad) {
                for (a, b) in g.data_mut().iter_mut().zip(gs.data()) {
                    *a -= cfg.lambda * *b;
                }
            }
            T::one() - s.ssim
        }
    };
    let coverage = mask.coverage();
    let combined = mse + cfg.lambda * perceptual;
    Ok(RewardEval {
        report: RewardReport {
            masked_mse: mse,
            masked_perceptual: perceptual,
            combined,
            lambda: cfg.lambda,
            coverage,
            frames: vec![FrameReward {
                frame: 0,
                masked_mse: mse,
                masked_perceptual: perceptual,
                combined,
                coverage,
            }],
        },
        grad,
    })
}

/// Camera reward for one frame.
pub fn cro_loss<T: Real>(
    rendered: &Image<T>,
    target: &Image<T>,
    mask: &Mask,
    cfg: &RewardConfig<T>,
) -> Result<RewardReport<T>> {
    Ok(evaluate(rendered, target, mask, cfg, false)?.report)
}

/// Coverage-weighted mean of per-frame rewards.
pub fn cro_loss_batch<T: Real>(
    rendered: &[Image<T>],
    targets: &[Image<T>],
    masks: &[Mask],
    cfg: &RewardConfig<T>,
) -> Result<RewardReport<T>> {
    if rendered.len() != targets.len() || rendered.len() != masks.len() {
        return Err(Error::shape(
            "reward batch",
            format!("{} frames", rendered.len()),
            format!("{} targets, {} masks", targets.len(), masks.len()),
        ));
    }
    if rendered.is_empty() {
        return Err(Error::EmptyMask {
            coverage: 0.0,
            min: cfg.min_coverage,
        });
    }
    let frames: Vec<FrameReward<T>> = rendered
        .iter()
        .zip(targets)
        .zip(masks)
        .enumerate()
        .map(|(i, ((r, t), m))| {
            let mut f = cro_loss(r, t, m, cfg)?.frames.remove(0);
            f.frame = i;
            Ok(f)
        })
        .collect::<Result<_>>()?;
    Ok(combine_frames(frames, cfg.lambda))
}

pub(crate) fn combine_frames<T: Real>(frames: Vec<FrameReward<T>>, lambda: T) -> RewardReport<T> {
    if frames.len() == 1 {
        let f = &frames[0];
        return RewardReport {
            masked_mse: f.masked_mse,
            masked_perceptual: f.masked_perceptual,
            combined: f.combined,
            lambda,
            coverage: f.coverage,
            frames,
        };
    }
    let total: f64 = frames.iter().map(|f| f.coverage).sum();
    let wsum = T::lit(total);
    let mut mse = T::zero();
    let mut perc = T::zero();
    for f in &frames {
        let w = T::lit(f.coverage);
        mse += w * f.masked_mse;
        perc += w * f.masked_perceptual;
    }
    mse /= wsum;
    perc /= wsum;
    RewardReport {
        masked_mse: mse,
        masked_perceptual: perc,
        combined: mse + lambda * perc,
        lambda,
        coverage: total / frames.len() as f64,
        frames,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psnr {
    pub db: f64,
    /// Set when the images agree exactly; `db` is then [`PSNR_CAP_DB`].
    pub exact_match: bool,
}

/// PSNR for images with values in `[0, 1]`, optionally restricted to a mask.
pub fn psnr<T: Real>(rendered: &Image<T>, target: &Image<T>, mask: Option<&Mask>) -> Result<Psnr> {
    let full;
    let mask = match mask {
        Some(m) => m,
        None => {
            full = Mask::full(rendered.width(), rendered.height());
            &full
        }
    };
    check_inputs(rendered, target, mask)?;
    check_coverage(mask, 0.0)?;
    let mse = mse_eval(rendered, target, mask, false).0.to_f64_lossy();
    if mse == 0.0 {
        return Ok(Psnr {
            db: PSNR_CAP_DB,
            exact_match: true,
        });
    }
    Ok(Psnr {
        db: -10.0 * mse.log10(),
        exact_match: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image<f64> {
        let mut rng = rng_from_seed(seed);
        Image::from_fn(w, h, 3, |_, _, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn mse_constant_offset() {
        let a = Image::filled(16, 16, 3, 0.25);
        let b = Image::filled(16, 16, 3, 0.75);
        assert_eq!(masked_mse(&a, &b, &Mask::full(16, 16)).unwrap(), 0.25);
        assert_eq!(masked_mse(&a, &a, &Mask::full(16, 16)).unwrap(), 0.0);
    }

    #[test]
    fn mse_matches_loop_oracle() {
        let a = random_image(20, 12, 1);
        let b = random_image(20, 12, 2);
        let mut rng = rng_from_seed(3);
        let mask = Mask::from_fn(20, 12, |_, _| rng.gen_bool(0.6));
        let mut sum = 0.0;
        let mut n = 0;
        for y in 0..12 {
            for x in 0..20 {
                if mask.get(x, y) {
                    for c in 0..3 {
                        sum += (a.get(x, y, c) - b.get(x, y, c)).powi(2);
                    }
                    n += 1;
                }
            }
        }
        let got = masked_mse(&a, &b, &mask).unwrap();
        assert!((got - sum / (3 * n) as f64).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_rejected() {
        let a = random_image(32, 32, 1);
        let m = Mask::filled(32, 32, false);
        assert!(matches!(
            masked_mse(&a, &a, &m),
            Err(Error::EmptyMask { .. })
        ));
        // 5 of 1024 pixels is below the 1% threshold.
        let m = Mask::from_fn(32, 32, |x, y| y == 0 && x < 5);
        assert!(matches!(
            masked_mse(&a, &a, &m),
            Err(Error::EmptyMask { .. })
        ));
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let a = Image::from_fn(32, 32, 3, |x, y, c| {
            0.5 + 0.4 * ((x as f64 * 0.7 + c as f64).sin() * (y as f64 * 0.45).cos())
        });
        let m = Mask::full(32, 32);
        assert_eq!(masked_ssim(&a, &a, &m).unwrap(), 1.0);
        let inv = a.map(|v| 1.0 - v);
        assert!(masked_ssim(&inv, &a, &m).unwrap() < 0.2);
    }

    #[test]
    fn ssim_rectangle_mask_equals_crop() {
        let a = random_image(40, 36, 5);
        let b = random_image(40, 36, 6);
        let mask = Mask::from_fn(40, 36, |x, y| (5..30).contains(&x) && (3..27).contains(&y));
        let masked = masked_ssim(&a, &b, &mask).unwrap();
        let crop = masked_ssim(
            &a.crop(5, 3, 25, 24),
            &b.crop(5, 3, 25, 24),
            &Mask::full(25, 24),
        )
        .unwrap();
        assert!((masked - crop).abs() < 1e-12);
    }

    #[test]
    fn combined_arithmetic() {
        let frames = vec![FrameReward {
            frame: 0,
            masked_mse: 0.04_f64,
            masked_perceptual: 0.2,
            combined: 0.04 + 0.5 * 0.2,
            coverage: 1.0,
        }];
        let r = combine_frames(frames, 0.5);
        assert!((r.combined - 0.14).abs() < 1e-15);
    }

    #[test]
    fn single_frame_batch_equals_direct() {
        let a = random_image(24, 24, 7);
        let b = random_image(24, 24, 8);
        let m = Mask::from_fn(24, 24, |x, _| x > 3);
        let cfg = RewardConfig::default();
        let direct = cro_loss(&a, &b, &m, &cfg).unwrap();
        let batch = cro_loss_batch(&[a], &[b], &[m], &cfg).unwrap();
        assert_eq!(direct, batch);
    }

    #[test]
    fn reward_gradient_matches_finite_differences() {
        let a = random_image(16, 16, 9);
        let b = random_image(16, 16, 10);
        let m = Mask::from_fn(16, 16, |x, y| x + y < 24);
        let cfg = RewardConfig {
            ssim_window: 5,
            ..RewardConfig::default()
        };
        let g = evaluate(&a, &b, &m, &cfg, true).unwrap().grad.unwrap();
        let h = 1e-6;
        for &(x, y, c) in &[(1, 1, 0), (7, 9, 2), (15, 15, 1), (10, 3, 0)] {
            let mut p = a.clone();
            p.set(x, y, c, a.get(x, y, c) + h);
            let fp = cro_loss(&p, &b, &m, &cfg).unwrap().combined;
            p.set(x, y, c, a.get(x, y, c) - h);
            let fm = cro_loss(&p, &b, &m, &cfg).unwrap().combined;
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g.get(x, y, c)).abs() < 1e-8, "({x},{y},{c})");
        }
    }

    #[test]
    fn psnr_values() {
        let a = random_image(8, 8, 1);
        let p = psnr(&a, &a, None).unwrap();
        assert!(p.exact_match && p.db == PSNR_CAP_DB);
        let z = Image::filled(8, 8, 3, 0.3);
        let o = Image::filled(8, 8, 3, 0.4);
        let p = psnr(&z, &o, None).unwrap();
        assert!(!p.exact_match);
        assert!((p.db - 20.0).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        let mut c = RewardConfig::<f64> {
            ssim_window: 10,
            ..RewardConfig::default()
        };
        assert!(c.validate().is_err());
        c.ssim_window = 11;
        c.lambda = -1.0;
        assert!(c.validate().is_err());
    }
}
