//! Associate a mask with Gaussians, with and without the depth test.
//!
//! A sphere sits in front of a wall. The mask covers the sphere, so without
//! the depth test the wall Gaussians behind it are picked up as well.

use splat_codebook::association::{gaussians_for_mask, tolerance_map};
use splat_codebook::depth::render_depth;
use splat_codebook::model::{BinaryMask, CameraView, GaussianPrimitive, GaussianScene, MaskInstance, Vec3};
use splat_codebook::PipelineConfig;

fn main() -> splat_codebook::Result<()> {
    let mut gaussians = Vec::new();
    let mut is_sphere = Vec::new();
    for i in 0..60 {
        for j in 0..60 {
            let p = Vec3::new(-3.0 + i as f64 * 0.1, -3.0 + j as f64 * 0.1, 8.0);
            gaussians.push(GaussianPrimitive::isotropic(p, 0.06, 0.95)?);
            is_sphere.push(false);
        }
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    for k in 0..800 {
        let y = 1.0 - 2.0 * (k as f64 + 0.5) / 800.0;
        let r = (1.0 - y * y).sqrt();
        let t = golden * k as f64;
        let p = Vec3::new(r * t.cos(), y, r * t.sin() + 4.0);
        gaussians.push(GaussianPrimitive::isotropic(p, 0.05, 0.95)?);
        is_sphere.push(true);
    }
    let scene = GaussianScene::new(gaussians);
    let cam = CameraView::look_at(
        "v0",
        96,
        96,
        60.0,
        Vec3::zeros(),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.0, -1.0, 0.0),
    )?;

    let depth = render_depth(&scene, &cam, 0.01);
    let bits = depth.values.iter().map(|&d| d < 6.0).collect();
    let region = BinaryMask::from_bits(96, 96, bits)?;
    let mask = MaskInstance::new(0, "ball", 0.9, 0.95, region)?;

    let mut cfg = PipelineConfig::default();
    let tol = tolerance_map(&depth, &mask.region, cfg.depth_bound, cfg.neighborhood_half_width, cfg.neighborhood_rule);
    for enabled in [true, false] {
        cfg.enable_depth_test = enabled;
        let assoc = gaussians_for_mask(&scene, &cam, &mask, &depth, &tol, &cfg)
            .map_err(|e| splat_codebook::Error::Data(e.message().into()))?;
        let on_sphere = assoc.gaussian_indices.iter().filter(|&&i| is_sphere[i as usize]).count();
        println!(
            "depth test {:<5}: {:>4} gaussians, {:>4} on the sphere, {:>4} on the wall, weight {:.4}",
            enabled,
            assoc.gaussian_indices.len(),
            on_sphere,
            assoc.gaussian_indices.len() - on_sphere,
            assoc.weight
        );
    }
    Ok(())
}
