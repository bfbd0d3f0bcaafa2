//! Bitwise thread-count invariance of every parallel code path: the same
//! computation run in 1-thread and 8-thread pools must produce identical
//! bits.

use warpfield::defgraph::{compute_interpolation, decimate, DeformationGraph};
use warpfield::evalsynth::{
    chamfer_between_meshes, make_synthetic, volume_iou, SyntheticKind, SyntheticParams,
};
use warpfield::optim::{optimize_graph, OptimConfig};
use warpfield::parallel::with_thread_pool;

fn run_pipeline() -> (Vec<u64>, Vec<u64>, u64, u64) {
    let params = SyntheticParams {
        resolution: 24,
        anchor_count: 120,
        ..SyntheticParams::default()
    };
    let scene = make_synthetic(SyntheticKind::Bend, &params, 13).unwrap();
    let decimated = decimate(&scene.rest_mesh, 120).unwrap();
    let mut graph = DeformationGraph::from_mesh(&decimated).unwrap();
    let weights = compute_interpolation(&graph, &scene.rest_mesh.vertices, 10).unwrap();
    let config = OptimConfig { iterations: 120, ..OptimConfig::default() };
    let state = optimize_graph(&mut graph, &weights, &scene.clean_anchors, &config).unwrap();

    let warped = scene.field.warp_mesh(&scene.rest_mesh);
    let cd = chamfer_between_meshes(&warped, &scene.transformed_mesh, 20_000, 3).unwrap();
    let iou = volume_iou(&warped, &scene.transformed_mesh, 64).unwrap();

    let param_bits: Vec<u64> = graph
        .params
        .translations
        .iter()
        .chain(&graph.params.rotations)
        .flat_map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()])
        .collect();
    let loss_bits: Vec<u64> = state.history.iter().map(|r| r.total.to_bits()).collect();
    (param_bits, loss_bits, cd.to_bits(), iou.iou.to_bits())
}

#[test]
fn one_thread_and_eight_threads_agree_bitwise() {
    let a = with_thread_pool(1, run_pipeline);
    let b = with_thread_pool(8, run_pipeline);
    assert_eq!(a.0, b.0, "graph parameters differ");
    assert_eq!(a.1, b.1, "loss histories differ");
    assert_eq!(a.2, b.2, "chamfer distance differs");
    assert_eq!(a.3, b.3, "volume IoU differs");
}

#[test]
fn repeated_runs_agree_bitwise() {
    let a = run_pipeline();
    let b = run_pipeline();
    assert_eq!(a, b);
}
