//! Estimate ε̂ from the k-distance curve and strip floaters from a point cloud.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splat_codebook::model::Vec3;
use splat_codebook::postprocess::hdbscan::{hdbscan_eps, ClusteringParams};
use splat_codebook::postprocess::{estimate_eps, kdist_curve};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut points: Vec<Vec3> = (0..400)
        .map(|_| Vec3::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..0.3)))
        .collect();
    let planted = [
        Vec3::new(5.0, 5.0, 5.0),
        Vec3::new(-4.0, 2.0, 0.0),
        Vec3::new(0.5, -6.0, 1.0),
        Vec3::new(3.0, 0.0, -4.0),
    ];
    points.extend(planted);

    let min_pts = 6;
    let curve = kdist_curve(&points, min_pts - 1).expect("enough points");
    let eps_hat = estimate_eps(&curve);
    println!(
        "k-dist curve: min {:.4}, median {:.4}, max {:.4}; eps_hat {:.4}",
        curve[0],
        curve[curve.len() / 2],
        curve[curve.len() - 1],
        eps_hat
    );

    let params = ClusteringParams {
        min_pts,
        eps_hat,
        ..ClusteringParams::default()
    };
    let result = hdbscan_eps(&points, &params).expect("enough points");
    let outliers: Vec<usize> = (0..points.len())
        .filter(|&i| result.labels[i].is_none() || result.probabilities[i] < params.membership_cutoff)
        .collect();
    println!("clusters: {}, outliers: {}", result.cluster_count(), outliers.len());
    for i in outliers.iter().filter(|&&i| i >= 400) {
        println!("  planted outlier {:?} flagged", points[*i].as_slice());
    }
}
