//! Masked SSIM and its gradient.
//!
//! SSIM is evaluated on every window position that lies entirely inside the
//! image ("valid" filtering) and entirely inside the mask, then averaged over
//! those windows and the colour channels. Windows touching a masked-out
//! pixel are skipped, so unmasked pixels never influence the value.

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::scalar::Real;

const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Normalized 1D Gaussian taps.
pub(crate) fn gaussian_taps<T: Real>(window: usize, sigma: T) -> Vec<T> {
    let r = (window / 2) as f64;
    let s = sigma.to_f64_lossy();
    let raw: Vec<f64> = (0..window)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * s * s)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::lit(v / sum)).collect()
}

/// Valid-mode separable correlation of a single-channel plane.
fn filter_valid<T: Real>(plane: &[T], w: usize, h: usize, taps: &[T]) -> (Vec<T>, usize, usize) {
    let n = taps.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut horiz = vec![T::zero(); ow * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            let mut s = T::zero();
            for (k, t) in taps.iter().enumerate() {
                s += *t * row[x + k];
            }
            horiz[y * ow + x] = s;
        }
    }
    let mut out = vec![T::zero(); ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = T::zero();
            for (k, t) in taps.iter().enumerate() {
                s += *t * horiz[(y + k) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    (out, ow, oh)
}

/// Adjoint of [`filter_valid`]: spreads a valid-grid map back onto the full plane.
fn filter_adjoint<T: Real>(coef: &[T], ow: usize, oh: usize, taps: &[T]) -> Vec<T> {
    let n = taps.len();
    let (w, h) = (ow + n - 1, oh + n - 1);
    let mut vert = vec![T::zero(); ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let c = coef[y * ow + x];
            if c == T::zero() {
                continue;
            }
            for (k, t) in taps.iter().enumerate() {
                vert[(y + k) * ow + x] += *t * c;
            }
        }
    }
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..ow {
            let c = vert[y * ow + x];
            if c == T::zero() {
                continue;
            }
            for (k, t) in taps.iter().enumerate() {
                out[y * w + x + k] += *t * c;
            }
        }
    }
    out
}

/// Window positions (on the valid grid) whose window is entirely masked-in.
fn valid_windows(mask: &Mask, window: usize) -> (Vec<bool>, usize) {
    let (w, h) = (mask.width(), mask.height());
    // Summed-area table of masked-out pixels.
    let mut sat = vec![0usize; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            let out = usize::from(!mask.get(x, y));
            sat[(y + 1) * (w + 1) + x + 1] =
                out + sat[y * (w + 1) + x + 1] + sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
        }
    }
    let (ow, oh) = (w + 1 - window, h + 1 - window);
    let mut valid = vec![false; ow * oh];
    let mut count = 0;
    for y in 0..oh {
        for x in 0..ow {
            let (x1, y1) = (x + window, y + window);
            let outside = sat[y1 * (w + 1) + x1] + sat[y * (w + 1) + x]
                - sat[y * (w + 1) + x1]
                - sat[y1 * (w + 1) + x];
            if outside == 0 {
                valid[y * ow + x] = true;
                count += 1;
            }
        }
    }
    (valid, count)
}

fn channel_plane<T: Real>(img: &Image<T>, c: usize) -> Vec<T> {
    img.data()
        .iter()
        .skip(c)
        .step_by(img.channels())
        .copied()
        .collect()
}

pub(crate) struct SsimEval<T> {
    pub ssim: T,
    /// `d ssim / d rendered`, present when requested.
    pub grad: Option<Image<T>>,
}

pub(crate) fn check_window(window: usize) -> Result<()> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidRewardConfig(format!(
            "SSIM window must be odd and at least 3, got {window}"
        )));
    }
    Ok(())
}

pub(crate) fn masked_ssim_eval<T: Real>(
    rendered: &Image<T>,
    target: &Image<T>,
    mask: &Mask,
    window: usize,
    sigma: T,
    with_grad: bool,
) -> Result<SsimEval<T>> {
    check_window(window)?;
    rendered.ensure_shape(target, "rendered vs target")?;
    mask.ensure_size(rendered, "mask")?;
    let (w, h) = (rendered.width(), rendered.height());
    if w < window || h < window {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            window,
        });
    }
    let (valid, n_windows) = valid_windows(mask, window);
    if n_windows == 0 {
        return Err(Error::EmptyMask {
            coverage: mask.coverage(),
            min: 0.0,
        });
    }
    let taps = gaussian_taps(window, sigma);
    let c1 = T::lit(K1 * K1);
    let c2 = T::lit(K2 * K2);
    let channels = rendered.channels();
    let norm = T::one() / T::from_usize_lossy(n_windows * channels);
    let mut total = T::zero();
    let mut grad = with_grad.then(|| Image::new(w, h, channels));
    for ch in 0..channels {
        let x = channel_plane(rendered, ch);
        let y = channel_plane(target, ch);
        let xx: Vec<T> = x.iter().map(|v| *v * *v).collect();
        let yy: Vec<T> = y.iter().map(|v| *v * *v).collect();
        let xy: Vec<T> = x.iter().zip(&y).map(|(a, b)| *a * *b).collect();
        let (mx, ow, oh) = filter_valid(&x, w, h, &taps);
        let (my, _, _) = filter_valid(&y, w, h, &taps);
        let (sxx, _, _) = filter_valid(&xx, w, h, &taps);
        let (syy, _, _) = filter_valid(&yy, w, h, &taps);
        let (sxy, _, _) = filter_valid(&xy, w, h, &taps);
        let mut alpha = vec![T::zero(); ow * oh];
        let mut beta = vec![T::zero(); ow * oh];
        let mut gamma = vec![T::zero(); ow * oh];
        for i in 0..ow * oh {
            if !valid[i] {
                continue;
            }
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            let a1 = T::two() * ux * uy + c1;
            let a2 = T::two() * cxy + c2;
            let b1 = ux * ux + uy * uy + c1;
            let b2 = vx + vy + c2;
            let s = (a1 * a2) / (b1 * b2);
            total += s;
            if with_grad {
                let d_mu = T::two() * uy * a2 / (b1 * b2) - s * T::two() * ux / b1;
                let d_var = -s / b2;
                let d_cov = T::two() * a1 / (b1 * b2);
                alpha[i] = (d_mu - T::two() * ux * d_var - uy * d_cov) * norm;
                beta[i] = T::two() * d_var * norm;
                gamma[i] = d_cov * norm;
            }
        }
        if let Some(g) = grad.as_mut() {
            let ga = filter_adjoint(&alpha, ow, oh, &taps);
            let gb = filter_adjoint(&beta, ow, oh, &taps);
            let gc = filter_adjoint(&gamma, ow, oh, &taps);
            for i in 0..w * h {
                let v = ga[i] + gb[i] * x[i] + gc[i] * y[i];
                g.data_mut()[i * channels + ch] = v;
            }
        }
    }
    Ok(SsimEval {
        ssim: total / T::from_usize_lossy(n_windows * channels),
        grad,
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

    /// Direct per-window evaluation with 2D weights, no separable filtering.
    fn brute_ssim(a: &Image<f64>, b: &Image<f64>, mask: &Mask, window: usize, sigma: f64) -> f64 {
        let taps = gaussian_taps(window, sigma);
        let (w, h) = (a.width(), a.height());
        let (mut total, mut n) = (0.0, 0usize);
        for y0 in 0..=h - window {
            for x0 in 0..=w - window {
                let inside = (0..window).all(|j| (0..window).all(|i| mask.get(x0 + i, y0 + j)));
                if !inside {
                    continue;
                }
                for c in 0..3 {
                    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for j in 0..window {
                        for i in 0..window {
                            let g = taps[i] * taps[j];
                            let x = a.get(x0 + i, y0 + j, c);
                            let y = b.get(x0 + i, y0 + j, c);
                            mx += g * x;
                            my += g * y;
                            sxx += g * x * x;
                            syy += g * y * y;
                            sxy += g * x * y;
                        }
                    }
                    let (c1, c2) = (1e-4, 9e-4);
                    let vx = sxx - mx * mx;
                    let vy = syy - my * my;
                    let cv = sxy - mx * my;
                    total += (2.0 * mx * my + c1) * (2.0 * cv + c2)
                        / ((mx * mx + my * my + c1) * (vx + vy + c2));
                }
                n += 3;
            }
        }
        total / n as f64
    }

    #[test]
    fn separable_matches_brute_force() {
        let a = random_image(24, 20, 1);
        let b = random_image(24, 20, 2);
        let mask = Mask::from_fn(24, 20, |x, y| !(x > 15 && y < 6));
        let got = masked_ssim_eval(&a, &b, &mask, 7, 1.5, false).unwrap().ssim;
        let expect = brute_ssim(&a, &b, &mask, 7, 1.5);
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = random_image(16, 14, 3);
        let b = random_image(16, 14, 4);
        let mask = Mask::from_fn(16, 14, |x, _| x < 13);
        let eval = masked_ssim_eval(&a, &b, &mask, 5, 1.0, true).unwrap();
        let grad = eval.grad.unwrap();
        let h = 1e-6;
        for &(x, y, c) in &[(0, 0, 0), (5, 7, 1), (12, 13, 2), (14, 3, 0), (8, 8, 2)] {
            let mut p = a.clone();
            p.set(x, y, c, a.get(x, y, c) + h);
            let fp = masked_ssim_eval(&p, &b, &mask, 5, 1.0, false).unwrap().ssim;
            p.set(x, y, c, a.get(x, y, c) - h);
            let fm = masked_ssim_eval(&p, &b, &mask, 5, 1.0, false).unwrap().ssim;
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (fd - grad.get(x, y, c)).abs() < 1e-8,
                "({x},{y},{c}): {fd} vs {}",
                grad.get(x, y, c)
            );
        }
        // Outside every valid window the gradient vanishes.
        assert_eq!(grad.get(14, 3, 0), 0.0);
    }

    #[test]
    fn window_checks() {
        let a = random_image(8, 8, 1);
        let m = Mask::full(8, 8);
        assert!(matches!(
            masked_ssim_eval(&a, &a, &m, 11, 1.5, false),
            Err(Error::ImageTooSmall { .. })
        ));
        assert!(masked_ssim_eval(&a, &a, &m, 4, 1.5, false).is_err());
    }
}
