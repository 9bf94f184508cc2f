//! Render the median depth of a two-layer scene and print it as a coarse grid.
//!
//! cargo run --release --example depth_render -- [out.depth]

use splat_codebook::depth::{render_depth, DEFAULT_NEAR};
use splat_codebook::io::write_depth;
use splat_codebook::model::{CameraView, GaussianPrimitive, GaussianScene, Vec3};

fn main() -> splat_codebook::Result<()> {
    let mut gaussians = Vec::new();
    // back wall at z = 6, a small card floating in front of it at z = 3
    for i in 0..40 {
        for j in 0..30 {
            let p = Vec3::new(-2.0 + i as f64 * 0.1, -1.5 + j as f64 * 0.1, 6.0);
            gaussians.push(GaussianPrimitive::isotropic(p, 0.06, 0.9)?);
        }
    }
    for i in 0..10 {
        for j in 0..10 {
            let p = Vec3::new(-0.25 + i as f64 * 0.05, -0.25 + j as f64 * 0.05, 3.0);
            gaussians.push(GaussianPrimitive::isotropic(p, 0.03, 0.9)?);
        }
    }
    let scene = GaussianScene::new(gaussians);
    let cam = CameraView::look_at(
        "front",
        64,
        48,
        40.0,
        Vec3::zeros(),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.0, -1.0, 0.0),
    )?;
    let depth = render_depth(&scene, &cam, DEFAULT_NEAR);

    for y in (0..depth.height).step_by(4) {
        let row: String = (0..depth.width)
            .step_by(2)
            .map(|x| match depth.get(x, y) {
                d if !d.is_finite() => ' ',
                d if d < 4.5 => '#',
                _ => '.',
            })
            .collect();
        println!("{row}");
    }
    let covered = depth.values.iter().filter(|d| d.is_finite()).count();
    println!("covered {covered}/{} pixels", depth.values.len());

    if let Some(path) = std::env::args().nth(1) {
        write_depth(&depth, &path)?;
        println!("wrote {path}");
    }
    Ok(())
}
