use super::*;
use crate::defgraph::{compute_interpolation, DeformationGraph};
use crate::evalsynth::sphere_mesh;
use crate::geometry::TriMesh;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn small_graph() -> (TriMesh, DeformationGraph) {
    let mesh = sphere_mesh(0.5, 5, 4);
    let graph = DeformationGraph::from_mesh(&mesh).unwrap();
    (mesh, graph)
}

fn random_unit(rng: &mut StdRng, scale: f64) -> Point3 {
    Point3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

fn encode_global_rigid(graph: &mut DeformationGraph, aa: Point3, t: Point3) {
    let rotation = rotation_from_axis_angle(aa);
    for (i, node) in graph.nodes().to_vec().iter().enumerate() {
        graph.params.rotations[i] = aa;
        graph.params.translations[i] = rotation.mul_vec(*node) + t - *node;
    }
}

#[test]
fn arap_is_zero_for_zero_params() {
    let (_, graph) = small_graph();
    assert_eq!(arap_loss(&graph), 0.0);
}

#[test]
fn arap_is_zero_for_global_rigid_motions() {
    let (_, mut graph) = small_graph();
    let mut rng = StdRng::seed_from_u64(41);
    for _ in 0..100 {
        let aa = random_unit(&mut rng, 3.0);
        let t = random_unit(&mut rng, 1.0);
        encode_global_rigid(&mut graph, aa, t);
        assert!(arap_loss(&graph) < 1e-12, "aa={aa:?} t={t:?}");
    }
}

#[test]
fn arap_is_zero_for_pure_translation() {
    let (_, mut graph) = small_graph();
    for t in &mut graph.params.translations {
        *t = Point3::new(0.3, -0.2, 0.7);
    }
    assert_eq!(arap_loss(&graph), 0.0);
}

/// Two nodes, one edge: directed residuals are (t0 - t1) both ways, so
/// L_arap = |t0 - t1|^2 exactly.
fn two_node_graph() -> DeformationGraph {
    DeformationGraph::from_parts(
        vec![Point3::ZERO, Point3::new(1.0, 0.0, 0.0)],
        vec![(0, 1)],
        crate::defgraph::GraphParams::zeros(2),
    )
    .unwrap()
}

#[test]
fn consistency_hand_cases() {
    let graph = two_node_graph();
    let vertices = vec![Point3::ZERO, Point3::new(1.0, 0.0, 0.0)];
    let weights = compute_interpolation(&graph, &vertices, 1).unwrap();

    // vb == va with zero params: zero loss.
    let anchors = AnchorSet::new(vec![AnchorEntry {
        vertex: 0,
        original: vertices[0],
        transformed: vertices[0],
    }])
    .unwrap();
    assert_eq!(consistency_loss(&graph, &weights, &anchors).unwrap(), 0.0);

    // Zero params, displacement 0.3: loss 0.09.
    let anchors = AnchorSet::new(vec![AnchorEntry {
        vertex: 0,
        original: vertices[0],
        transformed: Point3::new(0.3, 0.0, 0.0),
    }])
    .unwrap();
    let loss = consistency_loss(&graph, &weights, &anchors).unwrap();
    assert!((loss - 0.09).abs() < 1e-15);

    // Node translation equal to the displacement: zero loss (weight 1 path).
    let mut graph = graph;
    graph.params.translations[0] = Point3::new(0.3, 0.0, 0.0);
    let loss = consistency_loss(&graph, &weights, &anchors).unwrap();
    assert!(loss < 1e-30);
}

#[test]
fn empty_anchor_set_is_rejected() {
    let graph = two_node_graph();
    let weights = compute_interpolation(&graph, &[Point3::ZERO], 1).unwrap();
    let anchors = AnchorSet::default();
    assert!(matches!(
        consistency_loss(&graph, &weights, &anchors),
        Err(OptimError::EmptyAnchorSet)
    ));
}

#[test]
fn total_loss_composes_the_two_terms() {
    // Construct L_arap = 0.2 and L_con = 1.0 exactly.
    let mut graph = two_node_graph();
    let a = 0.2f64.sqrt();
    graph.params.translations[0] = Point3::new(a, 0.0, 0.0);
    let vertices = vec![Point3::ZERO, Point3::new(1.0, 0.0, 0.0)];
    let weights = compute_interpolation(&graph, &vertices, 1).unwrap();
    // Anchor at vertex 0 (weight 1 on node 0): residual t0 + va - vb.
    let anchors = AnchorSet::new(vec![AnchorEntry {
        vertex: 0,
        original: vertices[0],
        transformed: Point3::new(a - 1.0, 0.0, 0.0),
    }])
    .unwrap();

    let cfg = OptimConfig::default();
    let loss = total_loss(&graph, &weights, &anchors, &cfg).unwrap();
    assert!((loss.arap - 0.2).abs() < 1e-15);
    assert!((loss.consistency - 1.0).abs() < 1e-15);
    assert!((loss.total - 0.3).abs() < 1e-15);

    let cfg = OptimConfig { alpha: 0.0, ..OptimConfig::default() };
    let loss = total_loss(&graph, &weights, &anchors, &cfg).unwrap();
    assert_eq!(loss.total, loss.arap);

    // Both components zero.
    let graph = two_node_graph();
    let anchors = AnchorSet::new(vec![AnchorEntry {
        vertex: 0,
        original: vertices[0],
        transformed: vertices[0],
    }])
    .unwrap();
    let loss = total_loss(&graph, &weights, &anchors, &OptimConfig::default()).unwrap();
    assert_eq!((loss.total, loss.arap, loss.consistency), (0.0, 0.0, 0.0));
}

#[test]
fn gradient_is_zero_at_rest_with_consistent_anchors() {
    let (mesh, graph) = small_graph();
    let weights = compute_interpolation(&graph, &mesh.vertices, 4).unwrap();
    let anchors = AnchorSet::new(
        (0..5)
            .map(|i| AnchorEntry {
                vertex: i,
                original: mesh.vertices[i as usize],
                transformed: mesh.vertices[i as usize],
            })
            .collect(),
    )
    .unwrap();
    let (grads, loss) = gradients(&graph, &weights, &anchors, &OptimConfig::default()).unwrap();
    assert_eq!(loss.total, 0.0);
    assert!(grads.rotations.iter().all(|g| g.norm() == 0.0));
    assert!(grads.translations.iter().all(|g| g.norm() == 0.0));
}

fn finite_difference_check(mode: ConsistencyMode) {
    let mesh = sphere_mesh(0.5, 6, 5); // 22 nodes
    let mut graph = DeformationGraph::from_mesh(&mesh).unwrap();
    let mut rng = StdRng::seed_from_u64(77);
    for i in 0..graph.node_count() {
        graph.params.rotations[i] = random_unit(&mut rng, 0.5);
        graph.params.translations[i] = random_unit(&mut rng, 0.2);
    }
    let weights = compute_interpolation(&graph, &mesh.vertices, 4).unwrap();
    let anchors = AnchorSet::new(
        (0..10)
            .map(|_| {
                let vertex = rng.random_range(0..mesh.vertices.len() as u32);
                AnchorEntry {
                    vertex,
                    original: mesh.vertices[vertex as usize],
                    transformed: mesh.vertices[vertex as usize] + random_unit(&mut rng, 0.3),
                }
            })
            .collect(),
    )
    .unwrap();

    let cfg = OptimConfig { consistency: mode, ..OptimConfig::default() };
    let (grads, _) = gradients(&graph, &weights, &anchors, &cfg).unwrap();

    let h = 1e-5;
    let loss_at = |graph: &mut DeformationGraph, node: usize, rot: bool, axis: usize, delta: f64| {
        let original = if rot {
            graph.params.rotations[node]
        } else {
            graph.params.translations[node]
        };
        let mut perturbed = original;
        match axis {
            0 => perturbed.x += delta,
            1 => perturbed.y += delta,
            _ => perturbed.z += delta,
        }
        if rot {
            graph.params.rotations[node] = perturbed;
        } else {
            graph.params.translations[node] = perturbed;
        }
        let l = total_loss(graph, &weights, &anchors, &cfg).unwrap().total;
        if rot {
            graph.params.rotations[node] = original;
        } else {
            graph.params.translations[node] = original;
        }
        l
    };

    for node in 0..graph.node_count() {
        for rot in [true, false] {
            for axis in 0..3 {
                let hi = loss_at(&mut graph, node, rot, axis, h);
                let lo = loss_at(&mut graph, node, rot, axis, -h);
                let fd = (hi - lo) / (2.0 * h);
                let g = if rot { grads.rotations[node] } else { grads.translations[node] };
                let g = g.component(axis);
                if fd.abs() < 1e-8 {
                    assert!(
                        (g - fd).abs() < 1e-8,
                        "node {node} rot={rot} axis={axis}: {g} vs fd {fd}"
                    );
                } else {
                    assert!(
                        ((g - fd) / fd).abs() < 1e-4,
                        "node {node} rot={rot} axis={axis}: {g} vs fd {fd}"
                    );
                }
            }
        }
    }
}

#[test]
fn gradients_match_finite_differences_translation_mode() {
    finite_difference_check(ConsistencyMode::TranslationOnly);
}

#[test]
fn gradients_match_finite_differences_rigid_mode() {
    finite_difference_check(ConsistencyMode::Rigid);
}

/// Hand-differentiated consistency gradient for a weight-1 anchor on an
/// isolated node: d/dt [alpha * |t + va - vb|^2] = (2 alpha / 1)(t + va - vb).
#[test]
fn translation_gradient_hand_formula() {
    let mut graph = DeformationGraph::from_parts(
        vec![Point3::ZERO],
        vec![],
        crate::defgraph::GraphParams::zeros(1),
    )
    .unwrap();
    graph.params.translations[0] = Point3::new(0.1, -0.2, 0.05);
    let vertices = vec![Point3::ZERO];
    let weights = compute_interpolation(&graph, &vertices, 1).unwrap();
    let vb = Point3::new(0.4, 0.1, 0.0);
    let anchors = AnchorSet::new(vec![AnchorEntry {
        vertex: 0,
        original: Point3::ZERO,
        transformed: vb,
    }])
    .unwrap();
    let cfg = OptimConfig::default();
    let (grads, _) = gradients(&graph, &weights, &anchors, &cfg).unwrap();
    let expect = (graph.params.translations[0] - vb) * (2.0 * cfg.alpha);
    assert!(grads.translations[0].distance(expect) < 1e-15);
    assert_eq!(grads.rotations[0], Point3::ZERO);
}

#[test]
fn adam_with_zero_gradient_keeps_params() {
    let mut params = crate::defgraph::GraphParams::zeros(3);
    params.translations[1] = Point3::new(0.5, 0.0, 0.0);
    let snapshot = params.clone();
    let mut state = OptimState::new(3);
    let grads = ParamGradients {
        rotations: vec![Point3::ZERO; 3],
        translations: vec![Point3::ZERO; 3],
    };
    adam_step(&mut state, &mut params, &grads, &OptimConfig::default());
    assert_eq!(params, snapshot);
    assert_eq!(state.step, 1);
}

#[test]
fn adam_first_step_is_nearly_minus_lr() {
    let cfg = OptimConfig::default();
    let (p, _, _) = adam_update_scalar(0.0, 0.0, 0.0, 1.0, 1, &cfg);
    // m_hat = 1, v_hat = 1: delta = -lr / (1 + eps).
    let expect = -cfg.learning_rate / (1.0 + cfg.epsilon);
    assert!((p - expect).abs() < 1e-18);
    assert!((p + cfg.learning_rate).abs() < 1e-10);
}

#[test]
fn optimization_is_bitwise_deterministic() {
    let run = || {
        let (mesh, mut graph) = small_graph();
        let weights = compute_interpolation(&graph, &mesh.vertices, 4).unwrap();
        let anchors = AnchorSet::new(
            (0..8)
                .map(|i| AnchorEntry {
                    vertex: i,
                    original: mesh.vertices[i as usize],
                    transformed: mesh.vertices[i as usize] + Point3::new(0.2, 0.1, -0.05),
                })
                .collect(),
        )
        .unwrap();
        let cfg = OptimConfig { iterations: 50, ..OptimConfig::default() };
        let state = optimize_graph(&mut graph, &weights, &anchors, &cfg).unwrap();
        (graph.params, state.history)
    };
    let (params_a, history_a) = run();
    let (params_b, history_b) = run();
    assert_eq!(params_a, params_b);
    assert_eq!(history_a.len(), history_b.len());
    for (a, b) in history_a.iter().zip(&history_b) {
        assert_eq!(a.total.to_bits(), b.total.to_bits());
    }
}

#[test]
fn optimize_recovers_a_global_translation() {
    let (mesh, mut graph) = small_graph();
    let weights = compute_interpolation(&graph, &mesh.vertices, 4).unwrap();
    let shift = Point3::new(0.15, -0.1, 0.2);
    let anchors = AnchorSet::new(
        (0..mesh.vertices.len() as u32)
            .step_by(2)
            .map(|i| AnchorEntry {
                vertex: i,
                original: mesh.vertices[i as usize],
                transformed: mesh.vertices[i as usize] + shift,
            })
            .collect(),
    )
    .unwrap();
    // Adam's tail at the default 3000 iterations lands around 1.5e-8; give
    // it the extra margin it needs to clear the 1e-8 recovery bar.
    let cfg = OptimConfig { iterations: 4000, ..OptimConfig::default() };
    let state = optimize_graph(&mut graph, &weights, &anchors, &cfg).unwrap();

    assert_eq!(state.history.len(), cfg.iterations);
    let final_loss = state.history.last().unwrap();
    assert!(final_loss.total <= state.history[0].total);
    assert!(final_loss.total < 1e-8, "final loss {}", final_loss.total);
    assert!(final_loss.arap < 1e-8);
    for t in &graph.params.translations {
        assert!(t.distance(shift) < 1e-4, "node translation {t:?} vs {shift:?}");
    }
}

#[test]
fn zero_iterations_config_is_rejected() {
    let cfg = OptimConfig { iterations: 0, ..OptimConfig::default() };
    assert!(matches!(cfg.validate(), Err(OptimError::InvalidConfig(_))));
}

#[test]
fn non_finite_loss_aborts_with_the_iteration_index() {
    let (mesh, mut graph) = small_graph();
    graph.params.translations[0] = Point3::new(f64::NAN, 0.0, 0.0);
    let weights = compute_interpolation(&graph, &mesh.vertices, 4).unwrap();
    let anchors = AnchorSet::new(vec![AnchorEntry {
        vertex: 0,
        original: mesh.vertices[0],
        transformed: mesh.vertices[0],
    }])
    .unwrap();
    let err = optimize_graph(&mut graph, &weights, &anchors, &OptimConfig::default()).unwrap_err();
    assert!(matches!(err, OptimError::NonFiniteLoss { iteration: 0 }));
}

#[test]
fn anchor_validation_catches_bad_references() {
    let (mesh, _) = small_graph();
    let anchors = AnchorSet::new(vec![AnchorEntry {
        vertex: 10_000,
        original: Point3::ZERO,
        transformed: Point3::ZERO,
    }])
    .unwrap();
    assert!(matches!(
        anchors.validate_against(&mesh.vertices),
        Err(OptimError::AnchorVertexOutOfRange { .. })
    ));

    let anchors = AnchorSet::new(vec![AnchorEntry {
        vertex: 0,
        original: mesh.vertices[0] + Point3::new(1e-6, 0.0, 0.0),
        transformed: Point3::ZERO,
    }])
    .unwrap();
    assert!(matches!(
        anchors.validate_against(&mesh.vertices),
        Err(OptimError::AnchorMismatch { .. })
    ));
}

#[test]
fn config_json_rejects_unknown_keys() {
    let ok: Result<OptimConfig, _> =
        serde_json::from_str(r#"{"alpha": 0.2, "iterations": 10}"#);
    assert!(ok.is_ok());
    let bad: Result<OptimConfig, _> =
        serde_json::from_str(r#"{"alpha": 0.2, "momentum": 0.9}"#);
    assert!(bad.is_err());
}
