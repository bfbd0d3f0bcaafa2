//! Geometric evaluation metrics (chamfer distance, volume IoU, success rate)
//! and synthetic deformation scenes with exact ground truth for end-to-end
//! testing.

mod metrics;
mod synth;

pub use metrics::{
    chamfer_between_meshes, chamfer_distance, sample_mesh_surface, success, volume_iou,
    MetricReport, VolumeIouReport, DEFAULT_SAMPLE_COUNT, DEFAULT_VOXEL_RESOLUTION,
    SUCCESS_CD_THRESHOLD,
};
pub use synth::{
    box_bar_mesh, cylinder_mesh, make_synthetic, sphere_mesh, SyntheticKind, SyntheticParams,
    SyntheticScene,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("point set is empty")]
    EmptySet,
    #[error("mesh has no area to sample")]
    EmptyMesh,
    #[error("voxel resolution must be >= 16, got {0}")]
    ResolutionTooLow(usize),
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Flow(#[from] crate::flow::FlowError),
}
