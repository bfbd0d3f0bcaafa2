//! File formats: Wavefront OBJ and binary PLY meshes, the binary scalar-grid
//! container, PFM depth maps, `.dfield` transform fields, `.dgraph`
//! deformation graphs, JSON Lines record streams, camera lists, and the loss
//! history CSV.

mod field;
mod mesh;
mod raster;
mod records;

pub use field::{read_dfield, read_dgraph, write_dfield, write_dgraph};
pub use mesh::{load_mesh, read_obj, read_ply, save_mesh, write_obj, write_ply};
pub use raster::{read_grid, read_pfm, write_grid, write_pfm};
pub use records::{
    depth_path, read_cameras, read_jsonl, write_cameras, write_history_csv, write_jsonl,
    CameraRecord, PointRecord, RayRecord, WarpedPointRecord, WarpedRayRecord,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FileFormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    Malformed { path: String, message: String },
    #[error("{path}: unsupported mesh extension (expected .obj or .ply)")]
    UnsupportedExtension { path: String },
    #[error("{path}: {source}")]
    InvalidGeometry {
        path: String,
        source: crate::geometry::GeometryError,
    },
    #[error("{path}: {source}")]
    InvalidField {
        path: String,
        source: crate::flow::FlowError,
    },
}

impl FileFormatError {
    pub(crate) fn parse(path: &std::path::Path, line: usize, message: impl Into<String>) -> Self {
        FileFormatError::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn malformed(path: &std::path::Path, message: impl Into<String>) -> Self {
        FileFormatError::Malformed { path: path.display().to_string(), message: message.into() }
    }
}
