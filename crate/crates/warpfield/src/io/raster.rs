use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::correspond::DepthMap;
use crate::geometry::{Point3, ScalarGrid};

use super::FileFormatError;

const GRID_MAGIC: &[u8; 8] = b"DFGRID01";
const GRID_HEADER_LEN: usize = 64;

/// Binary scalar-grid container: a 64-byte header (magic, three u32
/// resolutions, f64 origin, f64 voxel size, zero padding) followed by
/// float32 values in x-fastest order, all little-endian.
pub fn write_grid(path: &Path, grid: &ScalarGrid) -> Result<(), FileFormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    let (nx, ny, nz) = grid.resolution();
    let mut header = Vec::with_capacity(GRID_HEADER_LEN);
    header.extend_from_slice(GRID_MAGIC);
    for n in [nx, ny, nz] {
        header.write_u32::<LittleEndian>(n as u32)?;
    }
    for c in [grid.origin.x, grid.origin.y, grid.origin.z, grid.voxel_size] {
        header.write_f64::<LittleEndian>(c)?;
    }
    header.resize(GRID_HEADER_LEN, 0);
    w.write_all(&header)?;
    for &v in grid.values() {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<ScalarGrid, FileFormatError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; GRID_HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[..8] != GRID_MAGIC {
        return Err(FileFormatError::malformed(path, "bad magic (expected DFGRID01)"));
    }
    let mut cursor = &header[8..];
    let nx = cursor.read_u32::<LittleEndian>()? as usize;
    let ny = cursor.read_u32::<LittleEndian>()? as usize;
    let nz = cursor.read_u32::<LittleEndian>()? as usize;
    let ox = cursor.read_f64::<LittleEndian>()?;
    let oy = cursor.read_f64::<LittleEndian>()?;
    let oz = cursor.read_f64::<LittleEndian>()?;
    let voxel = cursor.read_f64::<LittleEndian>()?;

    let count = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .ok_or_else(|| FileFormatError::malformed(path, "resolution overflow"))?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(r.read_f32::<LittleEndian>()? as f64);
    }
    ScalarGrid::new((nx, ny, nz), Point3::new(ox, oy, oz), voxel, values)
        .map_err(|source| FileFormatError::InvalidGeometry { path: path.display().to_string(), source })
}

/// Grayscale PFM (`Pf`): dimensions line, scale line (sign = endianness),
/// then float32 rows ordered bottom-up. Written little-endian (scale -1).
pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<(), FileFormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "Pf\n{} {}\n-1.0\n", depth.width, depth.height)?;
    for row in (0..depth.height).rev() {
        for col in 0..depth.width {
            w.write_f32::<LittleEndian>(depth.data[col + row * depth.width])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<DepthMap, FileFormatError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let kind = line.trim();
    if kind != "Pf" {
        return Err(FileFormatError::parse(
            path,
            1,
            format!("expected grayscale PFM magic 'Pf', got '{kind}'"),
        ));
    }
    line.clear();
    r.read_line(&mut line)?;
    let mut dims = line.split_whitespace();
    let parse_dim = |tok: Option<&str>| -> Result<usize, FileFormatError> {
        tok.ok_or_else(|| FileFormatError::parse(path, 2, "missing dimension"))?
            .parse::<usize>()
            .map_err(|e| FileFormatError::parse(path, 2, format!("bad dimension: {e}")))
    };
    let width = parse_dim(dims.next())?;
    let height = parse_dim(dims.next())?;
    line.clear();
    r.read_line(&mut line)?;
    let scale: f64 = line
        .trim()
        .parse()
        .map_err(|e| FileFormatError::parse(path, 3, format!("bad scale: {e}")))?;
    if scale == 0.0 {
        return Err(FileFormatError::parse(path, 3, "scale must be non-zero"));
    }
    let little_endian = scale < 0.0;

    let mut data = vec![0.0f32; width * height];
    for row in (0..height).rev() {
        for col in 0..width {
            let v = if little_endian {
                r.read_f32::<LittleEndian>()?
            } else {
                r.read_f32::<BigEndian>()?
            };
            data[col + row * width] = v;
        }
    }
    DepthMap::new(width, height, data)
        .map_err(|e| FileFormatError::malformed(path, e.to_string()))
}
