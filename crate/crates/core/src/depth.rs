//! Gaussian projection and tile-based median-depth rendering.
//!
//! A pixel's depth is the camera-space z of the splat at which front-to-back
//! accumulated opacity first exceeds one half. Pixels that never get there
//! hold `f64::INFINITY`.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{BinaryMask, CameraView, DepthImage, GaussianPrimitive, GaussianScene};

pub const TILE_SIZE: u32 = 16;
pub const DEFAULT_NEAR: f64 = 0.01;

const ALPHA_MAX: f64 = 0.99;
const ALPHA_MIN: f64 = 1.0 / 255.0;
const MEDIAN_OPACITY: f64 = 0.5;
/// Screen-space dilation applied to degenerate footprints.
const COV_DILATION: f64 = 0.3;
const SINGULAR_DET: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGaussian {
    pub gaussian_index: u32,
    pub pixel: Vector2<f64>,
    /// Camera-space z of the center.
    pub depth: f64,
    pub cov2d: Matrix2<f64>,
    /// Three standard deviations along the major axis, in pixels.
    pub radius: f64,
}

impl ProjectedGaussian {
    /// Per-axis standard deviations of the screen footprint.
    pub fn sigma_xy(&self) -> (f64, f64) {
        (self.cov2d[(0, 0)].max(0.0).sqrt(), self.cov2d[(1, 1)].max(0.0).sqrt())
    }
}

fn max_eigenvalue(c: &Matrix2<f64>) -> f64 {
    let mid = 0.5 * (c[(0, 0)] + c[(1, 1)]);
    let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
    let disc = (mid * mid - det).max(0.0).sqrt();
    (mid + disc).max(0.0)
}

/// Project one Gaussian; `None` when its center is not in front of `near`.
pub fn project_gaussian(
    gaussian_index: u32,
    g: &GaussianPrimitive,
    cam: &CameraView,
    near: f64,
) -> Option<ProjectedGaussian> {
    let p = cam.world_to_camera(&g.center);
    if !(p.z > near) {
        return None;
    }
    let pixel = cam.project_camera_point(&p);
    let inv_z = 1.0 / p.z;
    let jac = Matrix2x3::new(
        cam.fx * inv_z,
        0.0,
        -cam.fx * p.x * inv_z * inv_z,
        0.0,
        cam.fy * inv_z,
        -cam.fy * p.y * inv_z * inv_z,
    );
    let w: Matrix3<f64> = cam.rotation.to_rotation_matrix().into_inner();
    let t = jac * w;
    let mut cov2d = t * g.covariance() * t.transpose();
    let off = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
    cov2d[(0, 1)] = off;
    cov2d[(1, 0)] = off;
    let radius = 3.0 * max_eigenvalue(&cov2d).sqrt();
    Some(ProjectedGaussian {
        gaussian_index,
        pixel,
        depth: p.z,
        cov2d,
        radius,
    })
}

/// Project every Gaussian of the scene, in parallel; order follows the scene.
pub fn project_scene(scene: &GaussianScene, cam: &CameraView, near: f64) -> Vec<Option<ProjectedGaussian>> {
    scene
        .gaussians
        .par_iter()
        .enumerate()
        .map(|(i, g)| project_gaussian(i as u32, g, cam, near))
        .collect()
}

/// A projected splat prepared for compositing.
struct Splat {
    index: u32,
    x: f64,
    y: f64,
    depth: f64,
    opacity: f64,
    // inverse covariance (a b; b c)
    ia: f64,
    ib: f64,
    ic: f64,
    // pixel bounding box, inclusive
    x0: i64,
    x1: i64,
    y0: i64,
    y1: i64,
}

impl Splat {
    fn prepare(p: &ProjectedGaussian, opacity: f64) -> Option<Splat> {
        // alpha never reaches the cutoff anywhere
        if opacity.min(ALPHA_MAX) < ALPHA_MIN {
            return None;
        }
        let mut cov = p.cov2d;
        let mut det = cov.determinant();
        if !(det > SINGULAR_DET) {
            cov[(0, 0)] += COV_DILATION;
            cov[(1, 1)] += COV_DILATION;
            det = cov.determinant();
        }
        let inv_det = 1.0 / det;
        let (ia, ib, ic) = (cov[(1, 1)] * inv_det, -cov[(0, 1)] * inv_det, cov[(0, 0)] * inv_det);
        // beyond this radius opacity·exp(-q/2) < 1/255 since q ≥ r²/λmax
        let q_max = 2.0 * (opacity / ALPHA_MIN).ln();
        let r = (q_max * max_eigenvalue(&cov)).sqrt() + 1.0;
        Some(Splat {
            index: p.gaussian_index,
            x: p.pixel.x,
            y: p.pixel.y,
            depth: p.depth,
            opacity,
            ia,
            ib,
            ic,
            x0: (p.pixel.x - r).floor() as i64,
            x1: (p.pixel.x + r).ceil() as i64,
            y0: (p.pixel.y - r).floor() as i64,
            y1: (p.pixel.y + r).ceil() as i64,
        })
    }

    #[inline]
    fn alpha_at(&self, px: f64, py: f64) -> f64 {
        let dx = px - self.x;
        let dy = py - self.y;
        let q = self.ia * dx * dx + 2.0 * self.ib * dx * dy + self.ic * dy * dy;
        (self.opacity * (-0.5 * q).exp()).min(ALPHA_MAX)
    }
}

/// Depth raster plus the index of the splat that set each pixel.
#[derive(Debug, Clone)]
pub struct DepthRender {
    pub depth: DepthImage,
    pub owner: Vec<Option<u32>>,
}

/// Render the median-depth image of `scene` as seen from `cam`.
pub fn render_depth(scene: &GaussianScene, cam: &CameraView, near: f64) -> DepthImage {
    render_depth_with_owner(scene, cam, near).depth
}

pub fn render_depth_with_owner(scene: &GaussianScene, cam: &CameraView, near: f64) -> DepthRender {
    let projected = project_scene(scene, cam, near);
    render_projected(scene, cam, &projected)
}

pub(crate) fn render_projected(
    scene: &GaussianScene,
    cam: &CameraView,
    projected: &[Option<ProjectedGaussian>],
) -> DepthRender {
    let (w, h) = (cam.width, cam.height);
    let tiles_x = w.div_ceil(TILE_SIZE);
    let tiles_y = h.div_ceil(TILE_SIZE);

    let splats: Vec<Splat> = projected
        .iter()
        .flatten()
        .filter_map(|p| Splat::prepare(p, scene.gaussians[p.gaussian_index as usize].opacity))
        .filter(|s| s.x1 >= 0 && s.y1 >= 0 && s.x0 < w as i64 && s.y0 < h as i64)
        .collect();

    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    let ts = TILE_SIZE as i64;
    for (si, s) in splats.iter().enumerate() {
        let tx0 = (s.x0.max(0) / ts) as u32;
        let tx1 = ((s.x1.min(w as i64 - 1)) / ts) as u32;
        let ty0 = (s.y0.max(0) / ts) as u32;
        let ty1 = ((s.y1.min(h as i64 - 1)) / ts) as u32;
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                bins[(ty * tiles_x + tx) as usize].push(si as u32);
            }
        }
    }

    let tiles: Vec<(u32, Vec<(u32, f64, Option<u32>)>)> = bins
        .into_par_iter()
        .enumerate()
        .map(|(ti, mut bin)| {
            bin.sort_by(|&a, &b| {
                let (sa, sb) = (&splats[a as usize], &splats[b as usize]);
                sa.depth.total_cmp(&sb.depth).then(sa.index.cmp(&sb.index))
            });
            let ti = ti as u32;
            let (tx, ty) = (ti % tiles_x, ti / tiles_x);
            let xs = tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(w);
            let ys = ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(h);
            let mut out = Vec::with_capacity((TILE_SIZE * TILE_SIZE) as usize);
            for y in ys {
                for x in xs.clone() {
                    let (d, o) = composite_pixel(&splats, &bin, x, y);
                    out.push((y * w + x, d, o));
                }
            }
            (ti, out)
        })
        .collect();

    let mut depth = DepthImage::filled(w, h, f64::INFINITY);
    let mut owner = vec![None; (w * h) as usize];
    for (_, pixels) in tiles {
        for (pi, d, o) in pixels {
            depth.values[pi as usize] = d;
            owner[pi as usize] = o;
        }
    }
    DepthRender { depth, owner }
}

fn composite_pixel(splats: &[Splat], order: &[u32], x: u32, y: u32) -> (f64, Option<u32>) {
    let (px, py) = (x as f64, y as f64);
    let (xi, yi) = (x as i64, y as i64);
    let mut transmittance = 1.0;
    for &si in order {
        let s = &splats[si as usize];
        if xi < s.x0 || xi > s.x1 || yi < s.y0 || yi > s.y1 {
            continue;
        }
        let alpha = s.alpha_at(px, py);
        if alpha < ALPHA_MIN {
            continue;
        }
        transmittance *= 1.0 - alpha;
        if 1.0 - transmittance > MEDIAN_OPACITY {
            return (s.depth, Some(s.index));
        }
    }
    (f64::INFINITY, None)
}

/// Mean finite depth over the masked pixels.
pub fn mask_mean_depth(depth: &DepthImage, region: &BinaryMask) -> Result<f64> {
    let (sum, n) = region
        .pixels()
        .map(|(x, y)| depth.get(x, y))
        .filter(|d| d.is_finite())
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    if n == 0 {
        return Err(Error::UncoveredMask);
    }
    Ok(sum / n as f64)
}
