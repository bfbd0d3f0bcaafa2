mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use warpfield::config::PipelineConfig;
use warpfield::flow::FlowDirection;

/// Non-rigid 3D scene-flow reconstruction from sparse correspondences.
#[derive(Parser)]
#[command(name = "warpfield", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config overriding pipeline defaults field-wise (unknown keys
    /// are rejected).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed override for all stochastic steps.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap the worker thread count (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Extra progress output on standard error.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Filter raw 2D matches into snapped 3D anchors.
    FilterMatches(FilterMatchesArgs),
    /// Optimize a deformation graph against anchors and export the field.
    Optimize(OptimizeArgs),
    /// Warp a mesh, point set, or ray samples through a field.
    Warp(WarpArgs),
    /// Geometric metrics between a predicted and a ground-truth mesh.
    Eval(EvalArgs),
    /// Generate a synthetic scene fixture with exact ground truth.
    Synth(SynthArgs),
    /// Sample hemisphere camera poses into a cameras.json.
    Poses(PosesArgs),
}

#[derive(Args)]
struct FilterMatchesArgs {
    /// Raw matches, one JSON object per line.
    #[arg(long)]
    matches: PathBuf,
    /// Original render cameras (JSON array; view id = array position).
    #[arg(long)]
    cameras: PathBuf,
    /// Directory holding depth_{view:04}.pfm for every original view.
    #[arg(long)]
    depth_dir: PathBuf,
    /// The transformed observation's camera (single JSON record).
    #[arg(long)]
    transformed_camera: PathBuf,
    /// The transformed observation's depth map (PFM).
    #[arg(long)]
    transformed_depth: PathBuf,
    /// Original mesh whose vertices anchors snap to (.obj/.ply).
    #[arg(long)]
    mesh: PathBuf,
    /// Output anchors (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Original full-resolution mesh (.obj/.ply).
    #[arg(long)]
    mesh: PathBuf,
    /// Anchor set (JSON lines from filter-matches or synth).
    #[arg(long)]
    anchors: PathBuf,
    /// Output transform field.
    #[arg(long, default_value = "field.dfield")]
    out_field: PathBuf,
    /// Output deformation graph.
    #[arg(long, default_value = "graph.dgraph")]
    out_graph: PathBuf,
    /// Output per-iteration loss history.
    #[arg(long, default_value = "history.csv")]
    out_history: PathBuf,
}

#[derive(Args)]
struct WarpArgs {
    /// Transform field (.dfield).
    #[arg(long)]
    field: PathBuf,
    /// Mesh input (always warped with the forward flow).
    #[arg(long, conflicts_with_all = ["points", "rays"])]
    mesh: Option<PathBuf>,
    /// Point set input (JSON lines of {"p": [x, y, z]}).
    #[arg(long, conflicts_with = "rays")]
    points: Option<PathBuf>,
    /// Ray samples input (JSON lines of {"samples": [[x, y, z], ...]}).
    #[arg(long)]
    rays: Option<PathBuf>,
    /// Flow direction for points/rays modes.
    #[arg(long, value_parser = parse_direction)]
    direction: Option<FlowDirection>,
    /// Mesh for exact point-to-triangle gating (required when the config
    /// sets surface_distance = "triangle"; pass the mesh of the input side).
    #[arg(long)]
    gate_mesh: Option<PathBuf>,
    /// Output path (mesh extension for mesh mode, .jsonl otherwise).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted mesh.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth mesh.
    #[arg(long)]
    gt: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Deformation family: bend, twist, or articulate.
    #[arg(long)]
    kind: String,
    /// Bend angle / twist rate (deg per unit) / hinge angle, degrees.
    #[arg(long, default_value_t = 45.0)]
    magnitude: f64,
    /// Clean correspondence count.
    #[arg(long, default_value_t = 500)]
    anchors: usize,
    /// Outlier fraction for the contaminated copy.
    #[arg(long, default_value_t = 0.3)]
    contamination: f64,
    /// Mesh density knob (vertices scale with its square).
    #[arg(long, default_value_t = 100)]
    resolution: usize,
    /// Output directory (created if missing).
    #[arg(long)]
    outdir: PathBuf,
}

#[derive(Args)]
struct PosesArgs {
    /// Hemisphere positions to sample.
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Distance from the center.
    #[arg(long)]
    radius: f64,
    /// Hemisphere center as "x,y,z".
    #[arg(long, value_parser = parse_point, default_value = "0,0,0")]
    center: warpfield::geometry::Point3,
    /// Roll augmentation angles, degrees, comma-separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    yaws: Option<Vec<f64>>,
    #[arg(long, default_value_t = 800.0)]
    fx: f64,
    #[arg(long, default_value_t = 800.0)]
    fy: f64,
    #[arg(long, default_value_t = 399.5)]
    cx: f64,
    #[arg(long, default_value_t = 399.5)]
    cy: f64,
    #[arg(long, default_value_t = 800)]
    width: u32,
    #[arg(long, default_value_t = 800)]
    height: u32,
    /// Output cameras.json.
    #[arg(long)]
    out: PathBuf,
}

fn parse_point(s: &str) -> Result<warpfield::geometry::Point3, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got '{s}'"));
    }
    let mut c = [0.0f64; 3];
    for (slot, p) in c.iter_mut().zip(&parts) {
        *slot = p.trim().parse().map_err(|e| format!("bad coordinate '{p}': {e}"))?;
    }
    Ok(warpfield::geometry::Point3::new(c[0], c[1], c[2]))
}

fn parse_direction(s: &str) -> Result<FlowDirection, String> {
    match s {
        "forward" => Ok(FlowDirection::Forward),
        "backward" => Ok(FlowDirection::Backward),
        _ => Err(format!("expected 'forward' or 'backward', got '{s}'")),
    }
}

/// Command failures, mapped to the exit-code contract:
/// 2 input, 3 empty result, 4 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Empty(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Empty(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Empty(m) | CliError::Numerical(m) => m,
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut config = match &cli.config {
        None => PipelineConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), e.line())))?
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate().map_err(CliError::Input)?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    warpfield::parallel::configure_threads(cli.threads);
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return ExitCode::from(e.exit_code());
        }
    };
    let verbose = cli.verbose;
    let result = match cli.command {
        Command::FilterMatches(args) => commands::filter_matches(&args, &config, verbose),
        Command::Optimize(args) => commands::optimize(&args, &config, verbose),
        Command::Warp(args) => commands::warp(&args, &config, verbose),
        Command::Eval(args) => commands::eval(&args, &config, verbose),
        Command::Synth(args) => commands::synth(&args, &config, verbose),
        Command::Poses(args) => commands::poses(&args, &config, verbose),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
