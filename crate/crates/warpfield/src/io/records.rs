use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::correspond::{Camera, Intrinsics};
use crate::flow::WarpedSample;
use crate::geometry::Point3;
use crate::optim::LossRecord;

use super::FileFormatError;

/// Read newline-delimited JSON records, reporting the offending line on
/// parse failure. Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FileFormatError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line)
            .map_err(|e| FileFormatError::parse(path, line_no + 1, e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

/// Write records as newline-delimited JSON.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), FileFormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)
            .map_err(|e| FileFormatError::malformed(path, e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// One camera entry in `cameras.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(rename = "T_wc")]
    pub t_wc: [f64; 16],
}

impl CameraRecord {
    pub fn from_camera(cam: &Camera) -> CameraRecord {
        CameraRecord {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            t_wc: cam.to_matrix(),
        }
    }

    pub fn to_camera(&self) -> Result<Camera, crate::correspond::CorrespondError> {
        Camera::from_matrix(
            Intrinsics {
                fx: self.fx,
                fy: self.fy,
                cx: self.cx,
                cy: self.cy,
                width: self.width,
                height: self.height,
            },
            &self.t_wc,
        )
    }
}

/// `cameras.json`: a JSON array of camera records.
pub fn read_cameras(path: &Path) -> Result<Vec<Camera>, FileFormatError> {
    let records: Vec<CameraRecord> = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| FileFormatError::malformed(path, e.to_string()))?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_camera()
                .map_err(|e| FileFormatError::malformed(path, format!("camera {i}: {e}")))
        })
        .collect()
}

pub fn write_cameras(path: &Path, cameras: &[Camera]) -> Result<(), FileFormatError> {
    let records: Vec<CameraRecord> = cameras.iter().map(CameraRecord::from_camera).collect();
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &records)
        .map_err(|e| FileFormatError::malformed(path, e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Depth file naming convention: `depth_{view:04}.pfm` inside a directory.
pub fn depth_path(dir: &Path, view: u32) -> PathBuf {
    dir.join(format!("depth_{view:04}.pfm"))
}

/// Loss history CSV: `iteration,l_arap,l_con,l_dg`.
pub fn write_history_csv(path: &Path, history: &[LossRecord]) -> Result<(), FileFormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iteration,l_arap,l_con,l_dg")?;
    for r in history {
        writeln!(w, "{},{},{},{}", r.iteration, r.arap, r.consistency, r.total)?;
    }
    w.flush()?;
    Ok(())
}

/// One point per line for `warp --points`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PointRecord {
    pub p: Point3,
}

/// Warped point with its surface-gate flag.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WarpedPointRecord {
    pub p: Point3,
    pub near_surface: bool,
}

/// One ray (ordered sample list) per line for `warp --rays`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RayRecord {
    pub samples: Vec<Point3>,
}

/// Output for one warped ray.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WarpedRayRecord {
    pub samples: Vec<WarpedSample>,
}
