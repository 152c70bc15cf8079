//! Reverse-mode gradients of an image loss through the splatter.

use rayon::prelude::*;

use super::kernel::{footprint, footprint_dq};
use super::{
    composite, prepare, projection_jacobian, tile_bounds, Prepared, RenderOptions, RenderOutput,
};
use crate::camgeo::CameraFrame;
use crate::error::Result;
use crate::image::{Image, Mask};
use crate::linalg::{Mat3, Vec3};
use crate::reward::{evaluate, RewardConfig, RewardReport};
use crate::scalar::Real;
use crate::scene::GaussianScene;

/// Target, mask and reward weights of the loss being differentiated.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec<'a, T: Real> {
    pub target: &'a Image<T>,
    pub mask: &'a Mask,
    pub reward: RewardConfig<T>,
}

/// Per-Gaussian loss gradients, indexed like the scene. Gaussians that were
/// culled or dropped get zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGradients<T> {
    pub mean: Vec<Vec3<T>>,
    pub color: Vec<[T; 3]>,
    pub opacity: Vec<T>,
    /// Gradient with respect to the camera-space mean.
    pub mean_cam: Vec<Vec3<T>>,
    /// Gradient with respect to the camera-space covariance (symmetric).
    pub cov_cam: Vec<Mat3<T>>,
}

impl<T: Real> RenderGradients<T> {
    fn zeros(n: usize) -> Self {
        Self {
            mean: vec![Vec3::zero(); n],
            color: vec![[T::zero(); 3]; n],
            opacity: vec![T::zero(); n],
            mean_cam: vec![Vec3::zero(); n],
            cov_cam: vec![Mat3::zero(); n],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite())
            && self.color.iter().flatten().all(|v| v.is_finite())
            && self.opacity.iter().all(|v| v.is_finite())
    }

    /// Largest absolute component over means, colours and opacities.
    pub fn max_abs(&self) -> T {
        let m = self.mean.iter().map(|v| v.max_abs());
        let c = self.color.iter().flatten().map(|v| v.abs());
        let o = self.opacity.iter().map(|v| v.abs());
        m.chain(c).chain(o).fold(T::zero(), T::max)
    }
}

// Screen-space partials per splat: u, v, conic (a, b, c), opacity, colour.
const ACC: usize = 9;

struct Contribution<T> {
    splat: usize,
    alpha: T,
    k: T,
    q: T,
    dx: T,
    dy: T,
    trans: T,
}

fn tile_backward<T: Real>(
    prep: &Prepared<T>,
    tile: usize,
    width: usize,
    height: usize,
    dl_dcolor: &Image<T>,
    background: &[T; 3],
) -> Vec<T> {
    let (x0, x1, y0, y1) = tile_bounds(tile, prep.tiles_x, width, height);
    let list = &prep.tiles[tile];
    let mut acc = vec![T::zero(); list.len() * ACC];
    let mut contribs: Vec<Contribution<T>> = Vec::new();
    for py in y0..y1 {
        for px in x0..x1 {
            let g = dl_dcolor.pixel(px, py);
            if g.iter().all(|v| *v == T::zero()) {
                continue;
            }
            contribs.clear();
            let mut trans = T::one();
            for (li, &si) in list.iter().enumerate() {
                let s = &prep.splats[si as usize];
                if !s.covers(px, py) {
                    continue;
                }
                let (q, dx, dy) = s.offset(px, py);
                let k = footprint(q);
                if k <= T::zero() {
                    continue;
                }
                let alpha = s.opacity * k;
                contribs.push(Contribution {
                    splat: li,
                    alpha,
                    k,
                    q,
                    dx,
                    dy,
                    trans,
                });
                trans *= T::one() - alpha;
            }
            // Colour seen behind the current splat, starting from the background.
            let mut behind = *background;
            for ct in contribs.iter().rev() {
                let s = &prep.splats[list[ct.splat] as usize];
                let base = ct.splat * ACC;
                let w = ct.alpha * ct.trans;
                let mut d_alpha = T::zero();
                for c in 0..3 {
                    acc[base + 6 + c] += g[c] * w;
                    d_alpha += g[c] * (s.color[c] - behind[c]);
                }
                d_alpha *= ct.trans;
                acc[base + 5] += d_alpha * ct.k;
                let d_q = d_alpha * s.opacity * footprint_dq(ct.q);
                let [a, b, c] = s.conic;
                acc[base] -= d_q * T::two() * (a * ct.dx + b * ct.dy);
                acc[base + 1] -= d_q * T::two() * (b * ct.dx + c * ct.dy);
                acc[base + 2] += d_q * ct.dx * ct.dx;
                acc[base + 3] += d_q * T::two() * ct.dx * ct.dy;
                acc[base + 4] += d_q * ct.dy * ct.dy;
                for c in 0..3 {
                    behind[c] = s.color[c] * ct.alpha + (T::one() - ct.alpha) * behind[c];
                }
            }
        }
    }
    acc
}

/// Back-propagates `dL/d colour` (an H×W×3 image) to the Gaussian parameters.
pub fn render_backward<T: Real>(
    scene: &GaussianScene<T>,
    frame: &CameraFrame<T>,
    options: &RenderOptions<T>,
    dl_dcolor: &Image<T>,
) -> Result<RenderGradients<T>> {
    let prep = prepare(scene, frame)?;
    backward_prepared(&prep, scene.len(), frame, options, dl_dcolor)
}

pub(crate) fn backward_prepared<T: Real>(
    prep: &Prepared<T>,
    count: usize,
    frame: &CameraFrame<T>,
    options: &RenderOptions<T>,
    dl_dcolor: &Image<T>,
) -> Result<RenderGradients<T>> {
    let (w, h) = (frame.width(), frame.height());
    dl_dcolor.ensure_shape(&Image::<T>::new(w, h, 3), "colour gradient")?;
    let per_tile: Vec<Vec<T>> = (0..prep.tiles.len())
        .into_par_iter()
        .map(|t| tile_backward(prep, t, w, h, dl_dcolor, &options.background))
        .collect();
    let mut screen = vec![[T::zero(); ACC]; prep.splats.len()];
    for (tile, acc) in per_tile.iter().enumerate() {
        for (li, &si) in prep.tiles[tile].iter().enumerate() {
            let dst = &mut screen[si as usize];
            for (d, s) in dst.iter_mut().zip(&acc[li * ACC..(li + 1) * ACC]) {
                *d += *s;
            }
        }
    }

    let mut grads = RenderGradients::zeros(count);
    let k = &frame.intrinsics;
    let rot = *frame.pose.rotation();
    for (s, g) in prep.splats.iter().zip(&screen) {
        let [du, dv, da, db, dc, dop, c0, c1, c2] = *g;
        let i = s.index;
        grads.color[i] = [c0, c1, c2];
        grads.opacity[i] = dop;

        // Conic → projected covariance: dL/dΣ₂ = −Q G_Q Q.
        let [qa, qb, qc] = s.conic;
        let gq = [[da, db * T::half()], [db * T::half(), dc]];
        let qm = [[qa, qb], [qb, qc]];
        let mut tmp = [[T::zero(); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                tmp[r][c] = qm[r][0] * gq[0][c] + qm[r][1] * gq[1][c];
            }
        }
        let mut g2 = [[T::zero(); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                g2[r][c] = -(tmp[r][0] * qm[0][c] + tmp[r][1] * qm[1][c]);
            }
        }

        let p = s.p_cam;
        let j = projection_jacobian(k.fx, k.fy, p);
        // dL/dΣc = Jᵀ G J
        let mut gcov = Mat3::zero();
        for r in 0..3 {
            for c in 0..3 {
                let mut v = T::zero();
                for a in 0..2 {
                    for b in 0..2 {
                        v += j[a][r] * g2[a][b] * j[b][c];
                    }
                }
                gcov.m[r][c] = v;
            }
        }
        // dL/dJ = 2 G J Σc
        let mut jc = [[T::zero(); 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                jc[r][c] = (0..3).map(|m| j[r][m] * s.cov_cam.m[m][c]).sum();
            }
        }
        let gj =
            |r: usize, c: usize| -> T { T::two() * (g2[r][0] * jc[0][c] + g2[r][1] * jc[1][c]) };

        let iz = T::one() / p.z;
        let iz2 = iz * iz;
        let iz3 = iz2 * iz;
        let gx = du * k.fx * iz - gj(0, 2) * k.fx * iz2;
        let gy = dv * k.fy * iz - gj(1, 2) * k.fy * iz2;
        let gz = -du * k.fx * p.x * iz2 - dv * k.fy * p.y * iz2 - gj(0, 0) * k.fx * iz2
            + gj(0, 2) * T::two() * k.fx * p.x * iz3
            - gj(1, 1) * k.fy * iz2
            + gj(1, 2) * T::two() * k.fy * p.y * iz3;
        let gp = Vec3::new(gx, gy, gz);
        grads.mean_cam[i] = gp;
        grads.cov_cam[i] = gcov;
        grads.mean[i] = rot * gp;
    }
    Ok(grads)
}

/// Renders, scores the colour image against the loss target and returns the
/// gradients of the combined reward.
pub fn render_with_grad<T: Real>(
    scene: &GaussianScene<T>,
    frame: &CameraFrame<T>,
    loss: &LossSpec<'_, T>,
    options: &RenderOptions<T>,
) -> Result<(RenderOutput<T>, RewardReport<T>, RenderGradients<T>)> {
    let prep = prepare(scene, frame)?;
    let out = composite(&prep, frame, options);
    let eval = evaluate(&out.color, loss.target, loss.mask, &loss.reward, true)?;
    let dl = eval.grad.expect("gradient requested");
    let grads = backward_prepared(&prep, scene.len(), frame, options, &dl)?;
    Ok((out, eval.report, grads))
}
