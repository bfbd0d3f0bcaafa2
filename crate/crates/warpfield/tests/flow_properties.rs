//! Field-level properties that need synthetic scenes: cyclic consistency,
//! continuity along segments, and quantified global-rigid exactness.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use warpfield::defgraph::rotation_from_axis_angle;
use warpfield::evalsynth::{make_synthetic, sample_mesh_surface, SyntheticKind, SyntheticParams};
use warpfield::flow::TransformField;
use warpfield::geometry::{AnchoredRigid, Point3};

fn random_point(rng: &mut StdRng, scale: f64) -> Point3 {
    Point3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

/// 100 random rigid motions encoded on all anchors: forward reproduces the
/// motion and backward its inverse, everywhere, for several K.
#[test]
fn global_rigid_exactness_quantified() {
    let mut rng = StdRng::seed_from_u64(101);
    let anchors: Vec<Point3> = (0..60).map(|_| random_point(&mut rng, 1.0)).collect();
    for trial in 0..100 {
        let aa = random_point(&mut rng, 3.0);
        let t = random_point(&mut rng, 0.5);
        let rotation = rotation_from_axis_angle(aa);
        let transforms: Vec<AnchoredRigid> = anchors
            .iter()
            .map(|&v| AnchoredRigid {
                rotation,
                origin: v,
                translation: rotation.mul_vec(v) + t - v,
            })
            .collect();
        let k = [1usize, 2, 7, 20][trial % 4];
        let field = TransformField::new(anchors.clone(), transforms, k, 1.0).unwrap();
        for _ in 0..10 {
            let p = random_point(&mut rng, 1.5);
            let fwd = rotation.mul_vec(p) + t;
            assert!(field.forward(p).distance(fwd) < 1e-10, "trial {trial} k {k}");
            assert!(field.backward(fwd).distance(p) < 1e-10, "trial {trial} k {k}");
        }
    }
}

/// On-surface round trips through a smooth synthetic bend: the 95th
/// percentile error stays below 1e-3 of the bounding-box diagonal.
#[test]
fn surface_cyclic_consistency_95th_percentile() {
    let params = SyntheticParams {
        resolution: 60,
        anchor_count: 100,
        ..SyntheticParams::default()
    };
    let scene = make_synthetic(SyntheticKind::Bend, &params, 3).unwrap();
    let diag = scene
        .rest_mesh
        .bounding_box()
        .unwrap()
        .union(scene.transformed_mesh.bounding_box().unwrap())
        .diagonal();

    let points = sample_mesh_surface(&scene.rest_mesh, 10_000, 17).unwrap();
    let mut errors: Vec<f64> = points
        .iter()
        .map(|&p| {
            let fwd = scene.field.forward(p);
            scene.field.backward(fwd).distance(p)
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    let p95 = errors[(errors.len() as f64 * 0.95) as usize];
    assert!(
        p95 < 1e-3 * diag,
        "95th percentile {p95:.3e} vs bound {:.3e}",
        1e-3 * diag
    );
}

/// Flow continuity: walking a straight segment near the surface, per-step
/// displacement changes stay bounded by the field's own anchor-level
/// Lipschitz estimate — no jumps when the KNN set changes.
#[test]
fn continuity_probe_along_a_segment() {
    let params = SyntheticParams {
        resolution: 40,
        anchor_count: 100,
        ..SyntheticParams::default()
    };
    let scene = make_synthetic(SyntheticKind::Bend, &params, 9).unwrap();
    let field = &scene.field;

    // Anchor-level Lipschitz estimate of the displacement field.
    let anchors = field.anchors();
    let mut lipschitz: f64 = 0.0;
    for (i, &a) in anchors.iter().enumerate().step_by(7) {
        for &b in anchors.iter().skip(i + 1).step_by(13) {
            let d = a.distance(b);
            if d > 1e-6 && d < 0.2 {
                let da = field.forward(a) - a;
                let db = field.forward(b) - b;
                lipschitz = lipschitz.max((da - db).norm() / d);
            }
        }
    }
    assert!(lipschitz.is_finite() && lipschitz > 0.0);

    // A segment of length 0.1 hugging the cylinder wall.
    let start = Point3::new(0.15, 0.0, 0.3);
    let dir = Point3::new(0.0, 0.05, 0.995).normalized().unwrap();
    let steps = 1000;
    let step_len = 0.1 / steps as f64;
    let mut prev_disp = field.forward(start) - start;
    let mut max_change: f64 = 0.0;
    for i in 1..=steps {
        let p = start + dir * (step_len * i as f64);
        let disp = field.forward(p) - p;
        max_change = max_change.max((disp - prev_disp).norm());
        prev_disp = disp;
    }
    let bound = 10.0 * lipschitz * step_len;
    assert!(
        max_change < bound,
        "max step change {max_change:.3e} vs bound {bound:.3e}"
    );
}

/// Ray warping through a synthetic bend: directions are unit length and
/// near-surface flags reflect the gate.
#[test]
fn ray_samples_through_a_bend() {
    let params = SyntheticParams {
        resolution: 30,
        anchor_count: 50,
        surface_gate: 0.05,
        ..SyntheticParams::default()
    };
    let scene = make_synthetic(SyntheticKind::Bend, &params, 5).unwrap();
    // A ray crossing the transformed cylinder.
    let ray = warpfield::flow::RaySampleSet::new(
        (0..64)
            .map(|i| Point3::new(-0.4 + i as f64 * 0.0125, 0.0, 0.4))
            .collect(),
    )
    .unwrap();
    let out = scene.field.warp_ray_samples(&ray).unwrap();
    assert_eq!(out.len(), 64);
    let near_count = out.iter().filter(|s| s.near_surface).count();
    assert!(near_count > 0, "some samples must fall inside the gate");
    assert!(near_count < 64, "far samples must be flagged empty");
    for s in &out {
        assert!((s.direction.norm() - 1.0).abs() < 1e-12);
    }
}
