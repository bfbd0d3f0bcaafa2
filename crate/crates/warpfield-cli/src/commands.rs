
use warpfield::config::PipelineConfig;
use warpfield::correspond::{
    confidence_filter, filter_3d, fuse_multiview, hemisphere_poses, lift_pairs, snap_to_anchors,
    Intrinsics, LiftInputs, RawMatch, DEFAULT_YAWS_DEG,
};
use warpfield::defgraph::{compute_interpolation, decimate, field_from_graph, DeformationGraph};
use warpfield::evalsynth::{
    chamfer_between_meshes, make_synthetic, volume_iou, MetricReport, SyntheticKind,
    SyntheticParams,
};
use warpfield::flow::{FlowDirection, RaySampleSet};
use warpfield::geometry::KnnIndex;
use warpfield::io;
use warpfield::optim::{optimize_graph, AnchorEntry, AnchorSet, OptimError};

use crate::{
    CliError, EvalArgs, FilterMatchesArgs, OptimizeArgs, PosesArgs, SynthArgs, WarpArgs,
};

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

pub fn filter_matches(
    args: &FilterMatchesArgs,
    config: &PipelineConfig,
    verbose: bool,
) -> Result<(), CliError> {
    // Load and validate everything before producing any output.
    let matches: Vec<RawMatch> = io::read_jsonl(&args.matches).map_err(input_err)?;
    for (i, m) in matches.iter().enumerate() {
        m.validate().map_err(|e| {
            CliError::Input(format!("{}: record {}: {e}", args.matches.display(), i + 1))
        })?;
    }
    let cameras = io::read_cameras(&args.cameras).map_err(input_err)?;
    let transformed_camera = {
        let text = std::fs::read_to_string(&args.transformed_camera)
            .map_err(|e| CliError::Input(format!("{}: {e}", args.transformed_camera.display())))?;
        let record: io::CameraRecord = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", args.transformed_camera.display())))?;
        record.to_camera().map_err(input_err)?
    };
    let transformed_depth = io::read_pfm(&args.transformed_depth).map_err(input_err)?;
    let mut depths = Vec::with_capacity(cameras.len());
    for view in 0..cameras.len() as u32 {
        let path = io::depth_path(&args.depth_dir, view);
        depths.push(io::read_pfm(&path).map_err(input_err)?);
    }
    let mesh = io::load_mesh(&args.mesh).map_err(input_err)?;
    let vertex_index = KnnIndex::build(mesh.vertices.clone()).map_err(input_err)?;
    let bbox = mesh
        .bounding_box()
        .ok_or_else(|| CliError::Input(format!("{}: mesh has no vertices", args.mesh.display())))?;

    eprintln!("[filter-matches] raw matches: {}", matches.len());

    let confident = confidence_filter(&matches, config.confidence_threshold);
    eprintln!(
        "[filter-matches] confidence >= {}: {}",
        config.confidence_threshold,
        confident.len()
    );

    let fused = fuse_multiview(&confident, config.fuse_radius, config.fusion_score);
    eprintln!("[filter-matches] after multi-view fusion: {}", fused.len());

    let inputs = LiftInputs {
        transformed_camera: &transformed_camera,
        transformed_depth: &transformed_depth,
        original_cameras: &cameras,
        original_depths: &depths,
    };
    let (pairs, skipped) = lift_pairs(&fused, &inputs).map_err(input_err)?;
    eprintln!("[filter-matches] lifted pairs: {} (skipped {})", pairs.len(), skipped);

    let eps_a = config.eps_a_frac * bbox.diagonal();
    let kept = filter_3d(&pairs, eps_a, config.kappa, config.min_cluster).map_err(input_err)?;
    eprintln!(
        "[filter-matches] after 3d filtering (eps_a {eps_a:.5}): {}",
        kept.len()
    );

    let anchors = snap_to_anchors(&kept, &mesh, &vertex_index);
    eprintln!("[filter-matches] snapped anchors: {}", anchors.len());
    if verbose {
        for e in anchors.entries.iter().take(5) {
            eprintln!("[filter-matches]   vid {} -> {:?}", e.vertex, e.transformed);
        }
    }

    if anchors.is_empty() {
        return Err(CliError::Empty("no anchors survived".into()));
    }
    io::write_jsonl(&args.out, &anchors.entries).map_err(input_err)?;
    Ok(())
}

pub fn optimize(
    args: &OptimizeArgs,
    config: &PipelineConfig,
    verbose: bool,
) -> Result<(), CliError> {
    let mesh = io::load_mesh(&args.mesh).map_err(input_err)?;
    let entries: Vec<AnchorEntry> = io::read_jsonl(&args.anchors).map_err(input_err)?;
    let anchors = AnchorSet::new(entries).map_err(input_err)?;
    if anchors.is_empty() {
        return Err(CliError::Empty(format!("{}: no anchors", args.anchors.display())));
    }
    anchors.validate_against(&mesh.vertices).map_err(input_err)?;

    let optim_config = config.optim_config();
    optim_config.validate().map_err(input_err)?;

    eprintln!(
        "[optimize] mesh: {} vertices, {} faces; anchors: {}",
        mesh.vertices.len(),
        mesh.faces.len(),
        anchors.len()
    );

    let target = config.target_nodes.min(mesh.vertices.len());
    if target < config.target_nodes {
        eprintln!(
            "[optimize] note: target_nodes {} clamped to the {} available vertices",
            config.target_nodes,
            mesh.vertices.len()
        );
    }
    let decimated = decimate(&mesh, target).map_err(input_err)?;
    eprintln!("[optimize] graph nodes: {}", decimated.vertices.len());
    let mut graph = DeformationGraph::from_mesh(&decimated).map_err(input_err)?;

    let k = config.k.min(graph.node_count());
    let weights = compute_interpolation(&graph, &mesh.vertices, k).map_err(input_err)?;

    let state = optimize_graph(&mut graph, &weights, &anchors, &optim_config).map_err(|e| {
        match e {
            OptimError::NonFiniteLoss { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    })?;
    let last = state.history.last().expect("at least one iteration");
    eprintln!(
        "[optimize] iterations: {}; l_dg {} -> {}",
        state.history.len(),
        state.history[0].total,
        last.total
    );
    if verbose {
        for r in state.history.iter().step_by((state.history.len() / 10).max(1)) {
            eprintln!(
                "[optimize]   it {:>6}: l_arap {:.6e} l_con {:.6e} l_dg {:.6e}",
                r.iteration, r.arap, r.consistency, r.total
            );
        }
    }

    let field = field_from_graph(
        &graph,
        &mesh.vertices,
        &weights,
        k,
        config.tau,
        config.rotation_blend,
    )
    .map_err(input_err)?;

    io::write_dfield(&args.out_field, &field).map_err(input_err)?;
    io::write_dgraph(&args.out_graph, &graph).map_err(input_err)?;
    io::write_history_csv(&args.out_history, &state.history).map_err(input_err)?;

    println!(
        "{{\"l_dg\":{},\"l_arap\":{},\"l_con\":{}}}",
        last.total, last.arap, last.consistency
    );
    Ok(())
}

pub fn warp(args: &WarpArgs, config: &PipelineConfig, verbose: bool) -> Result<(), CliError> {
    let field = io::read_dfield(&args.field).map_err(input_err)?;
    if verbose {
        eprintln!(
            "[warp] field: {} anchors, k {}, gate {}",
            field.anchors().len(),
            field.k(),
            field.surface_gate()
        );
    }
    // Exact point-to-triangle gating is opt-in for coarse meshes; the
    // default gate is nearest-anchor distance.
    let gate_mesh = match (config.surface_distance, &args.gate_mesh) {
        (warpfield::config::SurfaceDistanceMode::Vertex, None) => None,
        (warpfield::config::SurfaceDistanceMode::Triangle, Some(path)) => {
            Some(io::load_mesh(path).map_err(input_err)?)
        }
        (warpfield::config::SurfaceDistanceMode::Triangle, None) => {
            return Err(CliError::Input(
                "surface_distance = \"triangle\" requires --gate-mesh".into(),
            ));
        }
        (warpfield::config::SurfaceDistanceMode::Vertex, Some(_)) => {
            return Err(CliError::Input(
                "--gate-mesh only applies with surface_distance = \"triangle\"".into(),
            ));
        }
    };
    let near_surface = |p: warpfield::geometry::Point3,
                        side: warpfield::flow::Side|
     -> bool {
        match &gate_mesh {
            None => field.is_near_surface(p, side),
            Some(mesh) => mesh.surface_distance_to_triangles(p) < field.surface_gate(),
        }
    };
    match (&args.mesh, &args.points, &args.rays) {
        (Some(mesh_path), None, None) => {
            if args.direction.is_some() {
                return Err(CliError::Input(
                    "--direction applies to --points/--rays; meshes always warp forward".into(),
                ));
            }
            let mesh = io::load_mesh(mesh_path).map_err(input_err)?;
            let warped = field.warp_mesh(&mesh);
            eprintln!("[warp] mesh: {} vertices warped", warped.vertices.len());
            io::save_mesh(&args.out, &warped).map_err(input_err)?;
        }
        (None, Some(points_path), None) => {
            let direction = require_direction(args)?;
            let records: Vec<io::PointRecord> = io::read_jsonl(points_path).map_err(input_err)?;
            let side = direction.input_side();
            let out: Vec<io::WarpedPointRecord> = records
                .iter()
                .map(|r| io::WarpedPointRecord {
                    p: field.apply(r.p, direction),
                    near_surface: near_surface(r.p, side),
                })
                .collect();
            let gated = out.iter().filter(|r| !r.near_surface).count();
            eprintln!("[warp] points: {} warped, {} outside the surface gate", out.len(), gated);
            io::write_jsonl(&args.out, &out).map_err(input_err)?;
        }
        (None, None, Some(rays_path)) => {
            let direction = require_direction(args)?;
            let records: Vec<io::RayRecord> = io::read_jsonl(rays_path).map_err(input_err)?;
            let mut out = Vec::with_capacity(records.len());
            let mut gated = 0usize;
            let side = direction.input_side();
            for (i, r) in records.iter().enumerate() {
                let ray = RaySampleSet::new(r.samples.clone())
                    .map_err(|e| CliError::Input(format!("{}:{}: {e}", rays_path.display(), i + 1)))?;
                let mut samples = field
                    .warp_ray_samples_directed(&ray, direction)
                    .map_err(|e| CliError::Input(format!("{}:{}: {e}", rays_path.display(), i + 1)))?;
                if gate_mesh.is_some() {
                    for (sample, input) in samples.iter_mut().zip(ray.samples()) {
                        sample.near_surface = near_surface(*input, side);
                    }
                }
                gated += samples.iter().filter(|s| !s.near_surface).count();
                out.push(io::WarpedRayRecord { samples });
            }
            eprintln!("[warp] rays: {} warped, {} samples flagged empty", out.len(), gated);
            io::write_jsonl(&args.out, &out).map_err(input_err)?;
        }
        _ => {
            return Err(CliError::Input(
                "exactly one of --mesh, --points, --rays is required".into(),
            ));
        }
    }
    Ok(())
}

fn require_direction(args: &WarpArgs) -> Result<FlowDirection, CliError> {
    args.direction.ok_or_else(|| {
        CliError::Input("--direction forward|backward is required for points/rays".into())
    })
}

pub fn eval(args: &EvalArgs, config: &PipelineConfig, _verbose: bool) -> Result<(), CliError> {
    let pred = io::load_mesh(&args.pred).map_err(input_err)?;
    let gt = io::load_mesh(&args.gt).map_err(input_err)?;

    let cd = chamfer_between_meshes(&pred, &gt, config.metric_samples, config.seed)
        .map_err(input_err)?;
    let iou = volume_iou(&pred, &gt, config.metric_resolution).map_err(input_err)?;
    if iou.watertight_suspect() {
        eprintln!(
            "[eval] warning: odd ray parity on {}/{} rays; inputs may not be watertight",
            iou.odd_parity_rays, iou.total_rays
        );
    }
    let report = MetricReport::new(cd, iou.iou);
    println!("{}", serde_json::to_string(&report).map_err(input_err)?);
    Ok(())
}

pub fn synth(args: &SynthArgs, config: &PipelineConfig, _verbose: bool) -> Result<(), CliError> {
    let kind = SyntheticKind::parse(&args.kind)
        .ok_or_else(|| CliError::Input(format!("unknown kind '{}'", args.kind)))?;
    let params = SyntheticParams {
        magnitude_deg: args.magnitude,
        anchor_count: args.anchors,
        outlier_fraction: args.contamination,
        resolution: args.resolution,
        k: config.k,
        surface_gate: config.tau,
    };
    let scene = make_synthetic(kind, &params, config.seed).map_err(input_err)?;

    std::fs::create_dir_all(&args.outdir)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.outdir.display())))?;
    let out = |name: &str| args.outdir.join(name);
    io::write_obj(&out("rest.obj"), &scene.rest_mesh).map_err(input_err)?;
    io::write_obj(&out("transformed.obj"), &scene.transformed_mesh).map_err(input_err)?;
    io::write_dfield(&out("gt.dfield"), &scene.field).map_err(input_err)?;
    io::write_jsonl(&out("anchors_clean.jsonl"), &scene.clean_anchors.entries)
        .map_err(input_err)?;
    io::write_jsonl(&out("pairs_contaminated.jsonl"), &scene.contaminated)
        .map_err(input_err)?;

    let manifest = serde_json::json!({
        "kind": kind.name(),
        "magnitude_deg": args.magnitude,
        "seed": config.seed,
        "vertices": scene.rest_mesh.vertices.len(),
        "faces": scene.rest_mesh.faces.len(),
        "anchor_count": scene.clean_anchors.len(),
        "outlier_fraction": args.contamination,
        "outlier_count": scene.outlier_labels.iter().filter(|&&o| o).count(),
        "outlier_labels": scene.outlier_labels,
    });
    std::fs::write(
        out("manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(input_err)? + "\n",
    )
    .map_err(input_err)?;

    eprintln!(
        "[synth] {} scene: {} vertices, {} anchors ({} outliers) -> {}",
        kind.name(),
        scene.rest_mesh.vertices.len(),
        scene.clean_anchors.len(),
        scene.outlier_labels.iter().filter(|&&o| o).count(),
        args.outdir.display()
    );
    Ok(())
}

pub fn poses(args: &PosesArgs, _config: &PipelineConfig, _verbose: bool) -> Result<(), CliError> {
    let yaws = args.yaws.clone().unwrap_or_else(|| DEFAULT_YAWS_DEG.to_vec());
    let intrinsics = Intrinsics {
        fx: args.fx,
        fy: args.fy,
        cx: args.cx,
        cy: args.cy,
        width: args.width,
        height: args.height,
    };
    let cameras = hemisphere_poses(args.count, args.radius, args.center, &yaws, &intrinsics)
        .map_err(input_err)?;
    eprintln!(
        "[poses] {} positions x {} rolls = {} cameras",
        args.count,
        yaws.len(),
        cameras.len()
    );
    io::write_cameras(&args.out, &cameras).map_err(input_err)?;
    Ok(())
}

