//! CPU Gaussian splatting with expected depth and analytic gradients.
//!
//! Each Gaussian's world covariance is carried into camera space and pushed
//! through the local affine approximation of the pinhole projection (EWA).
//! Pixels composite splats front to back in increasing camera z, ties broken
//! by scene index. Work is split into 16×16 tiles rendered in parallel; every
//! pixel's arithmetic is independent of the tile schedule, and gradient
//! partials are merged in tile order, so results do not depend on the thread
//! count.

mod backward;
pub mod kernel;
mod raycast;

pub use backward::{render_backward, render_with_grad, LossSpec, RenderGradients};
pub use raycast::{raycast_oracle, RaycastOutput};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camgeo::CameraFrame;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;
use crate::scene::GaussianScene;
use kernel::{footprint, CUTOFF_Q};

pub const TILE_SIZE: usize = 16;
/// Gaussians closer than this camera z are culled.
pub const NEAR_PLANE: f64 = 1e-4;
/// Projected covariances more anisotropic than this are dropped.
pub const MAX_CONDITION: f64 = 1e8;
/// Screen-space low-pass added to the projected covariance diagonal (px²).
pub const LOW_PASS: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions<T> {
    pub background: [T; 3],
}

impl<T: Real> Default for RenderOptions<T> {
    fn default() -> Self {
        Self {
            background: [T::zero(); 3],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderStats {
    /// Splats that reached at least one tile.
    pub rendered: usize,
    /// Behind the near plane or entirely off screen.
    pub culled: usize,
    /// Dropped for an ill-conditioned projected covariance.
    pub ill_conditioned: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput<T> {
    /// RGB, completed with the background where alpha < 1.
    pub color: Image<T>,
    /// Expected camera z of the composited splats, 0 where nothing accumulated.
    pub depth: Image<T>,
    /// Accumulated opacity `1 − Π(1 − αᵢ)`.
    pub alpha: Image<T>,
    pub background: [T; 3],
    pub stats: RenderStats,
}

/// A Gaussian after projection into one camera.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Splat<T> {
    pub index: usize,
    pub p_cam: Vec3<T>,
    pub cov_cam: Mat3<T>,
    pub u: T,
    pub v: T,
    /// Inverse of the projected covariance (low-pass term included), upper triangle.
    pub conic: [T; 3],
    pub opacity: T,
    pub color: [T; 3],
    /// Pixel index ranges `[x0, x1) × [y0, y1)` covered by the 3σ box.
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl<T: Real> Splat<T> {
    /// Squared Mahalanobis distance and offsets from the centre of pixel `(px, py)`.
    #[inline]
    pub fn offset(&self, px: usize, py: usize) -> (T, T, T) {
        let dx = T::from_usize_lossy(px) + T::half() - self.u;
        let dy = T::from_usize_lossy(py) + T::half() - self.v;
        let [a, b, c] = self.conic;
        (a * dx * dx + T::two() * b * dx * dy + c * dy * dy, dx, dy)
    }

    #[inline]
    fn covers(&self, px: usize, py: usize) -> bool {
        px >= self.x0 && px < self.x1 && py >= self.y0 && py < self.y1
    }
}

/// Splats sorted front to back, and per-tile lists of indices into them.
pub(crate) struct Prepared<T> {
    pub splats: Vec<Splat<T>>,
    pub tiles: Vec<Vec<u32>>,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub stats: RenderStats,
}

/// Jacobian of `(u, v)` with respect to the camera-space point.
#[inline]
pub(crate) fn projection_jacobian<T: Real>(fx: T, fy: T, p: Vec3<T>) -> [[T; 3]; 2] {
    let iz = T::one() / p.z;
    let iz2 = iz * iz;
    [
        [fx * iz, T::zero(), -fx * p.x * iz2],
        [T::zero(), fy * iz, -fy * p.y * iz2],
    ]
}

fn pixel_range<T: Real>(center: T, radius: T, size: usize) -> (usize, usize) {
    // Pixel i is covered when |i + 0.5 − center| ≤ radius.
    let lo = (center - radius - T::half()).ceil();
    let hi = (center + radius - T::half()).floor();
    let size_t = T::from_usize_lossy(size);
    if hi < T::zero() || lo >= size_t || hi < lo {
        return (0, 0);
    }
    let lo = lo.max(T::zero()).to_usize().unwrap_or(0);
    let hi = hi.min(size_t - T::one()).to_usize().unwrap_or(0);
    (lo, hi + 1)
}

pub(crate) fn prepare<T: Real>(
    scene: &GaussianScene<T>,
    frame: &CameraFrame<T>,
) -> Result<Prepared<T>> {
    if scene.is_empty() {
        return Err(Error::EmptyScene);
    }
    let k = &frame.intrinsics;
    let (w, h) = (frame.width(), frame.height());
    let rot = frame.pose.rotation();
    let w2c = rot.transpose();
    let mut stats = RenderStats::default();
    let mut splats = Vec::with_capacity(scene.len());
    for (index, g) in scene.gaussians().iter().enumerate() {
        let p = frame.pose.world_to_camera_point(g.mean);
        if !(p.z >= T::lit(NEAR_PLANE)) {
            stats.culled += 1;
            continue;
        }
        let cov_cam = w2c * g.covariance() * *rot;
        let j = projection_jacobian(k.fx, k.fy, p);
        // Σ₂ = J Σc Jᵀ
        let mut jc = [[T::zero(); 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                jc[r][c] = (0..3).map(|m| j[r][m] * cov_cam.m[m][c]).sum();
            }
        }
        let s = |r: usize, c: usize| -> T { (0..3).map(|m| jc[r][m] * j[c][m]).sum() };
        let lp = T::lit(LOW_PASS);
        let cov2d = [s(0, 0) + lp, s(0, 1), s(1, 1) + lp];
        if cov2d.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateCovariance { index });
        }
        let det = cov2d[0] * cov2d[2] - cov2d[1] * cov2d[1];
        let mid = (cov2d[0] + cov2d[2]) * T::half();
        let disc = (mid * mid - det).max(T::zero()).sqrt();
        let (l_max, l_min) = (mid + disc, mid - disc);
        if !(det > T::zero()) || !(l_min > T::zero()) || l_max / l_min > T::lit(MAX_CONDITION) {
            stats.ill_conditioned += 1;
            continue;
        }
        let u = k.fx * p.x / p.z + k.cx;
        let v = k.fy * p.y / p.z + k.cy;
        let cut = T::lit(CUTOFF_Q);
        let (x0, x1) = pixel_range(u, (cut * cov2d[0]).sqrt(), w);
        let (y0, y1) = pixel_range(v, (cut * cov2d[2]).sqrt(), h);
        if x0 >= x1 || y0 >= y1 {
            stats.culled += 1;
            continue;
        }
        let inv_det = T::one() / det;
        splats.push(Splat {
            index,
            p_cam: p,
            cov_cam,
            u,
            v,
            conic: [cov2d[2] * inv_det, -cov2d[1] * inv_det, cov2d[0] * inv_det],
            opacity: g.opacity,
            color: g.color,
            x0,
            x1,
            y0,
            y1,
        });
    }
    splats.sort_by(|a, b| {
        a.p_cam
            .z
            .partial_cmp(&b.p_cam.z)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
    let tiles_x = w.div_ceil(TILE_SIZE);
    let tiles_y = h.div_ceil(TILE_SIZE);
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    for (si, s) in splats.iter().enumerate() {
        for ty in s.y0 / TILE_SIZE..=(s.y1 - 1) / TILE_SIZE {
            for tx in s.x0 / TILE_SIZE..=(s.x1 - 1) / TILE_SIZE {
                tiles[ty * tiles_x + tx].push(si as u32);
            }
        }
    }
    stats.rendered = splats.len();
    Ok(Prepared {
        splats,
        tiles,
        tiles_x,
        tiles_y,
        stats,
    })
}

pub(crate) fn tile_bounds(
    tile: usize,
    tiles_x: usize,
    w: usize,
    h: usize,
) -> (usize, usize, usize, usize) {
    let tx = tile % tiles_x;
    let ty = tile / tiles_x;
    let x0 = tx * TILE_SIZE;
    let y0 = ty * TILE_SIZE;
    (x0, (x0 + TILE_SIZE).min(w), y0, (y0 + TILE_SIZE).min(h))
}

struct PixelResult<T> {
    color: [T; 3],
    depth: T,
    alpha: T,
}

#[inline]
fn shade_pixel<T: Real>(
    splats: &[Splat<T>],
    list: &[u32],
    px: usize,
    py: usize,
    background: &[T; 3],
) -> PixelResult<T> {
    let mut trans = T::one();
    let mut color = [T::zero(); 3];
    let mut w_sum = T::zero();
    let mut wz_sum = T::zero();
    for &si in list {
        let s = &splats[si as usize];
        if !s.covers(px, py) {
            continue;
        }
        let (q, _, _) = s.offset(px, py);
        let k = footprint(q);
        if k <= T::zero() {
            continue;
        }
        let alpha = s.opacity * k;
        let w = alpha * trans;
        for c in 0..3 {
            color[c] += w * s.color[c];
        }
        w_sum += w;
        wz_sum += w * s.p_cam.z;
        trans *= T::one() - alpha;
    }
    for c in 0..3 {
        color[c] += trans * background[c];
    }
    PixelResult {
        color,
        depth: if w_sum > T::zero() {
            wz_sum / w_sum
        } else {
            T::zero()
        },
        alpha: T::one() - trans,
    }
}

/// Renders with a black background.
pub fn render<T: Real>(
    scene: &GaussianScene<T>,
    frame: &CameraFrame<T>,
) -> Result<RenderOutput<T>> {
    render_with(scene, frame, &RenderOptions::default())
}

pub fn render_with<T: Real>(
    scene: &GaussianScene<T>,
    frame: &CameraFrame<T>,
    options: &RenderOptions<T>,
) -> Result<RenderOutput<T>> {
    let prep = prepare(scene, frame)?;
    Ok(composite(&prep, frame, options))
}

pub(crate) fn composite<T: Real>(
    prep: &Prepared<T>,
    frame: &CameraFrame<T>,
    options: &RenderOptions<T>,
) -> RenderOutput<T> {
    let (w, h) = (frame.width(), frame.height());
    let tiles: Vec<Vec<PixelResult<T>>> = (0..prep.tiles_x * prep.tiles_y)
        .into_par_iter()
        .map(|tile| {
            let (x0, x1, y0, y1) = tile_bounds(tile, prep.tiles_x, w, h);
            let list = &prep.tiles[tile];
            let mut out = Vec::with_capacity((x1 - x0) * (y1 - y0));
            for py in y0..y1 {
                for px in x0..x1 {
                    out.push(shade_pixel(&prep.splats, list, px, py, &options.background));
                }
            }
            out
        })
        .collect();
    let mut color = Image::new(w, h, 3);
    let mut depth = Image::new(w, h, 1);
    let mut alpha = Image::new(w, h, 1);
    for (tile, results) in tiles.into_iter().enumerate() {
        let (x0, x1, y0, _) = tile_bounds(tile, prep.tiles_x, w, h);
        let tw = x1 - x0;
        for (i, r) in results.into_iter().enumerate() {
            let (px, py) = (x0 + i % tw, y0 + i / tw);
            for c in 0..3 {
                color.set(px, py, c, r.color[c]);
            }
            depth.set(px, py, 0, r.depth);
            alpha.set(px, py, 0, r.alpha);
        }
    }
    RenderOutput {
        color,
        depth,
        alpha,
        background: options.background,
        stats: prep.stats,
    }
}
