//! Soundness of the 3D correspondence filter on contaminated synthetic
//! scenes with known outlier labels.

use warpfield::correspond::filter_3d;
use warpfield::evalsynth::{make_synthetic, SyntheticKind, SyntheticParams};

/// At 30% contamination with default parameters, inlier precision must stay
/// at or above 0.9 and inlier recall at or above 0.8, across 20 seeds.
#[test]
fn filter_precision_and_recall_across_20_seeds() {
    // Vertex spacing must sit well below the cluster radius so sampled
    // patches are dense enough to protect the median statistics.
    let params = SyntheticParams {
        resolution: 200,
        anchor_count: 500,
        outlier_fraction: 0.3,
        ..SyntheticParams::default()
    };
    for seed in 0..20u64 {
        let scene = make_synthetic(SyntheticKind::Bend, &params, seed).unwrap();
        let bbox = scene.rest_mesh.bounding_box().unwrap();
        let eps_a = 0.02 * bbox.diagonal();

        let kept = filter_3d(&scene.contaminated, eps_a, 3.0, 3).unwrap();

        // Identify kept pairs by exact coordinates (pairs are unique points).
        let is_inlier = |pair: &warpfield::correspond::CorrespondencePair| -> bool {
            scene
                .contaminated
                .iter()
                .zip(&scene.outlier_labels)
                .find(|(p, _)| p.original == pair.original && p.transformed == pair.transformed)
                .map(|(_, &label)| !label)
                .expect("kept pair must come from the input")
        };
        let kept_inliers = kept.iter().filter(|p| is_inlier(p)).count();
        let total_inliers = scene.outlier_labels.iter().filter(|&&o| !o).count();

        let precision = kept_inliers as f64 / kept.len().max(1) as f64;
        let recall = kept_inliers as f64 / total_inliers as f64;
        assert!(
            precision >= 0.9,
            "seed {seed}: precision {precision:.3} ({kept_inliers}/{})",
            kept.len()
        );
        assert!(
            recall >= 0.8,
            "seed {seed}: recall {recall:.3} ({kept_inliers}/{total_inliers})"
        );
    }
}
