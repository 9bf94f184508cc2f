//! Grow a codebook from hand-made associations: semantic merging, low-weight
//! filtering, spatial merging and label voting.

use splat_codebook::codebook::{filter_low_weight, semantic_merge_step, spatial_merge, vote_label};
use splat_codebook::io::codebook_to_json;
use splat_codebook::model::{Label, MaskAssociation, ObjectCodebook};

fn assoc(view: &str, mask_id: u32, label: &str, range: std::ops::Range<u32>, confidence: f64) -> MaskAssociation {
    MaskAssociation {
        view_id: view.into(),
        mask_id,
        gaussian_indices: range.collect(),
        weight: confidence / 4.0,
        label: Label::new(label),
        confidence,
    }
}

fn main() {
    let observations = [
        assoc("v0", 0, "chair", 0..100, 0.9),
        assoc("v1", 0, "chair", 30..130, 0.8),
        // same Gaussians, different label: kept apart by the semantic constraint
        assoc("v1", 1, "sofa", 40..120, 0.6),
        assoc("v2", 0, "table", 500..600, 0.95),
        assoc("v3", 0, "table", 590..700, 0.9),
        assoc("v3", 1, "table", 560..640, 0.7),
    ];

    let mut codebook = ObjectCodebook::new();
    for a in &observations {
        let id = semantic_merge_step(&mut codebook, a, 0.2, true);
        println!("{}/{} {:<6} -> object {id}", a.view_id, a.mask_id, a.label);
    }

    codebook.objects = codebook
        .objects
        .into_iter()
        .map(|o| filter_low_weight(o, 0.4))
        .collect();
    let mut codebook = spatial_merge(codebook, 0.3);
    for o in &mut codebook.objects {
        vote_label(o);
    }
    for o in &codebook.objects {
        println!(
            "object {} {:<6} {:>3} gaussians from {} masks, votes {:?}",
            o.object_id,
            o.label().map(|l| l.to_string()).unwrap_or_default(),
            o.gaussian_count(),
            o.mask_refs.len(),
            o.label_votes
        );
    }
    let json = codebook_to_json(&codebook);
    println!("codebook JSON: {} bytes, starts {}", json.len(), &json[..80]);
}
