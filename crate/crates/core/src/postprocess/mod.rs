//! Object-level filtering and per-object spatial outlier removal.

pub mod hdbscan;
pub mod kneedle;

use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::model::{CodebookObject, GaussianScene, ObjectCodebook, Vec3, Warning};

pub use hdbscan::{hdbscan_eps, knn_distances, ClusterResult, ClusteringParams, TooFewPoints};
pub use kneedle::{kneedle_elbow, CurveDirection, CurveShape, KneedleParams};

/// `ln(|M|) · mean(c_m)` over the masks that built the object.
pub fn object_confidence(object: &CodebookObject) -> f64 {
    let n = object.mask_refs.len();
    if n == 0 {
        return 0.0;
    }
    let mean = object.mask_refs.iter().map(|m| m.confidence).sum::<f64>() / n as f64;
    (n as f64).ln() * mean
}

/// Store every object's confidence and drop those below `tau_object`.
pub fn filter_objects(mut codebook: ObjectCodebook, tau_object: f64) -> ObjectCodebook {
    for o in &mut codebook.objects {
        o.object_confidence = Some(object_confidence(o));
    }
    codebook
        .objects
        .retain(|o| o.object_confidence.unwrap_or(0.0) >= tau_object);
    codebook
}

/// Ascending distances to each point's `k`-th nearest neighbor.
pub fn kdist_curve(points: &[Vec3], k: usize) -> Result<Vec<f64>, TooFewPoints> {
    let mut d = knn_distances(points, k)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Fraction of the sorted k-dist curve used for ε̂ when no knee exists.
pub const EPS_FALLBACK_QUANTILE: f64 = 0.9;

/// ε̂ from an ascending k-dist curve: its knee, or the 90th percentile.
pub fn estimate_eps(curve: &[f64]) -> f64 {
    let knee = if curve.len() >= 3 {
        kneedle_elbow(curve, KneedleParams::ascending_kdist())
    } else {
        None
    };
    match knee {
        Some(v) if v > 0.0 => v,
        _ => {
            let idx = ((curve.len() - 1) as f64 * EPS_FALLBACK_QUANTILE).round() as usize;
            curve[idx]
        }
    }
}

/// Outcome of [`remove_spatial_outliers`].
#[derive(Debug, Clone, PartialEq)]
pub enum OutlierOutcome {
    /// Clustering ran; `removed` Gaussians were dropped.
    Filtered { removed: usize, eps_hat: f64 },
    /// The object had too few Gaussians to estimate density.
    Skipped,
    /// Clustering flagged every Gaussian; the object is kept unchanged.
    AllOutliers,
}

pub fn remove_spatial_outliers(
    mut object: CodebookObject,
    scene: &GaussianScene,
    cfg: &PipelineConfig,
) -> (CodebookObject, OutlierOutcome) {
    let indices: Vec<u32> = object.gaussian_indices().collect();
    if indices.len() <= cfg.min_pts {
        return (object, OutlierOutcome::Skipped);
    }
    let points: Vec<Vec3> = indices.iter().map(|&i| scene.center(i)).collect();
    let Ok(curve) = kdist_curve(&points, cfg.min_pts - 1) else {
        return (object, OutlierOutcome::Skipped);
    };
    let eps_hat = estimate_eps(&curve);
    let params = ClusteringParams {
        min_pts: cfg.min_pts,
        eps_hat,
        membership_cutoff: cfg.membership_cutoff,
        allow_single_cluster: true,
    };
    let Ok(result) = hdbscan_eps(&points, &params) else {
        return (object, OutlierOutcome::Skipped);
    };
    let drop: Vec<u32> = indices
        .iter()
        .zip(result.labels.iter().zip(&result.probabilities))
        .filter(|(_, (label, &p))| label.is_none() || p < params.membership_cutoff)
        .map(|(&i, _)| i)
        .collect();
    if drop.len() == indices.len() {
        return (object, OutlierOutcome::AllOutliers);
    }
    for i in &drop {
        object.gaussian_weights.remove(i);
    }
    (
        object,
        OutlierOutcome::Filtered {
            removed: drop.len(),
            eps_hat,
        },
    )
}

/// Steps 3A and 3B, each gated by its stage switch.
pub fn postprocess(
    codebook: ObjectCodebook,
    scene: &GaussianScene,
    cfg: &PipelineConfig,
    warnings: &mut Vec<Warning>,
) -> ObjectCodebook {
    let mut codebook = if cfg.enable_object_filter {
        filter_objects(codebook, cfg.tau_object)
    } else {
        let mut cb = codebook;
        for o in &mut cb.objects {
            o.object_confidence = Some(object_confidence(o));
        }
        cb
    };
    if cfg.enable_outlier_removal {
        let objects = std::mem::take(&mut codebook.objects);
        let results: Vec<_> = objects
            .into_par_iter()
            .map(|o| remove_spatial_outliers(o, scene, cfg))
            .collect();
        for (o, outcome) in results {
            if outcome == OutlierOutcome::AllOutliers {
                warnings.push(Warning::for_object(
                    "3B",
                    o.object_id,
                    "clustering marked every Gaussian as an outlier; object left unchanged",
                ));
            }
            codebook.objects.push(o);
        }
    }
    codebook
}
