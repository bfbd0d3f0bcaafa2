use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::geometry::{Point3, TriMesh};

use super::FileFormatError;

/// Load a mesh, dispatching on the file extension (.obj or .ply).
pub fn load_mesh(path: &Path) -> Result<TriMesh, FileFormatError> {
    match extension(path).as_deref() {
        Some("obj") => read_obj(path),
        Some("ply") => read_ply(path),
        _ => Err(FileFormatError::UnsupportedExtension { path: path.display().to_string() }),
    }
}

/// Save a mesh, dispatching on the file extension (.obj or .ply).
pub fn save_mesh(path: &Path, mesh: &TriMesh) -> Result<(), FileFormatError> {
    match extension(path).as_deref() {
        Some("obj") => write_obj(path, mesh),
        Some("ply") => write_ply(path, mesh),
        _ => Err(FileFormatError::UnsupportedExtension { path: path.display().to_string() }),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

/// ASCII Wavefront OBJ: `v x y z` vertices and `f i j k` one-based faces.
/// Normals, texture coordinates, and other statements are ignored on read.
pub fn read_obj(path: &Path) -> Result<TriMesh, FileFormatError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut vertices: Vec<Point3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = line_no + 1;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut coord = |name: &str| -> Result<f64, FileFormatError> {
                    parts
                        .next()
                        .ok_or_else(|| FileFormatError::parse(path, line_no, format!("missing {name}")))?
                        .parse::<f64>()
                        .map_err(|e| FileFormatError::parse(path, line_no, format!("bad {name}: {e}")))
                };
                let (x, y, z) = (coord("x")?, coord("y")?, coord("z")?);
                vertices.push(Point3::new(x, y, z));
            }
            Some("f") => {
                let mut index = |name: &str| -> Result<u32, FileFormatError> {
                    let token = parts
                        .next()
                        .ok_or_else(|| FileFormatError::parse(path, line_no, format!("missing index {name}")))?;
                    // Tolerate v/vt/vn references.
                    let vertex_part = token.split('/').next().unwrap_or(token);
                    let one_based: i64 = vertex_part
                        .parse()
                        .map_err(|e| FileFormatError::parse(path, line_no, format!("bad index {name}: {e}")))?;
                    if one_based < 1 {
                        return Err(FileFormatError::parse(
                            path,
                            line_no,
                            format!("index {name} must be >= 1, got {one_based}"),
                        ));
                    }
                    Ok((one_based - 1) as u32)
                };
                let f = [index("i")?, index("j")?, index("k")?];
                if parts.next().is_some() {
                    return Err(FileFormatError::parse(
                        path,
                        line_no,
                        "only triangle faces are supported",
                    ));
                }
                faces.push(f);
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
        .map_err(|source| FileFormatError::InvalidGeometry { path: path.display().to_string(), source })
}

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<(), FileFormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// Binary little-endian PLY with float32 positions and int32 face indices.
pub fn read_ply(path: &Path) -> Result<TriMesh, FileFormatError> {
    let mut reader = BufReader::new(File::open(path)?);

    let mut vertex_count: Option<usize> = None;
    let mut face_count: Option<usize> = None;
    let mut vertex_properties: Vec<String> = Vec::new();
    let mut in_vertex_element = false;
    let mut line_no = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(FileFormatError::malformed(path, "missing end_header"));
        }
        line_no += 1;
        let trimmed = line.trim();
        if line_no == 1 && trimmed != "ply" {
            return Err(FileFormatError::parse(path, 1, "not a PLY file"));
        }
        if trimmed.starts_with("format") && !trimmed.contains("binary_little_endian") {
            return Err(FileFormatError::parse(path, line_no, "only binary_little_endian PLY is supported"));
        }
        if let Some(rest) = trimmed.strip_prefix("element vertex ") {
            vertex_count = Some(rest.trim().parse().map_err(|e| {
                FileFormatError::parse(path, line_no, format!("bad vertex count: {e}"))
            })?);
            in_vertex_element = true;
        } else if let Some(rest) = trimmed.strip_prefix("element face ") {
            face_count = Some(rest.trim().parse().map_err(|e| {
                FileFormatError::parse(path, line_no, format!("bad face count: {e}"))
            })?);
            in_vertex_element = false;
        } else if let Some(prop) = trimmed.strip_prefix("property ") {
            if in_vertex_element {
                vertex_properties.push(prop.to_string());
            } else if face_count.is_some() && prop != "list uchar int vertex_indices" {
                return Err(FileFormatError::parse(
                    path,
                    line_no,
                    format!("unsupported face property '{prop}' (expected list uchar int vertex_indices)"),
                ));
            }
        } else if trimmed == "end_header" {
            break;
        }
    }
    let vertex_count = vertex_count
        .ok_or_else(|| FileFormatError::malformed(path, "missing element vertex"))?;
    let face_count =
        face_count.ok_or_else(|| FileFormatError::malformed(path, "missing element face"))?;
    if vertex_properties != ["float x", "float y", "float z"] {
        return Err(FileFormatError::malformed(
            path,
            format!("unsupported vertex layout {vertex_properties:?} (expected float x, y, z)"),
        ));
    }

    let mut vertices = Vec::with_capacity(vertex_count);
    for _ in 0..vertex_count {
        let x = reader.read_f32::<LittleEndian>()? as f64;
        let y = reader.read_f32::<LittleEndian>()? as f64;
        let z = reader.read_f32::<LittleEndian>()? as f64;
        vertices.push(Point3::new(x, y, z));
    }
    let mut faces = Vec::with_capacity(face_count);
    for _ in 0..face_count {
        let n = reader.read_u8()?;
        if n != 3 {
            return Err(FileFormatError::malformed(path, format!("face with {n} vertices")));
        }
        let mut f = [0u32; 3];
        for slot in &mut f {
            let idx = reader.read_i32::<LittleEndian>()?;
            if idx < 0 {
                return Err(FileFormatError::malformed(path, format!("negative face index {idx}")));
            }
            *slot = idx as u32;
        }
        faces.push(f);
    }
    let mut trailing = Vec::new();
    reader.read_to_end(&mut trailing)?;
    if !trailing.is_empty() {
        return Err(FileFormatError::malformed(
            path,
            format!("{} unexpected trailing bytes", trailing.len()),
        ));
    }
    TriMesh::new(vertices, faces)
        .map_err(|source| FileFormatError::InvalidGeometry { path: path.display().to_string(), source })
}

pub fn write_ply(path: &Path, mesh: &TriMesh) -> Result<(), FileFormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    )?;
    for v in &mesh.vertices {
        w.write_f32::<LittleEndian>(v.x as f32)?;
        w.write_f32::<LittleEndian>(v.y as f32)?;
        w.write_f32::<LittleEndian>(v.z as f32)?;
    }
    for f in &mesh.faces {
        w.write_u8(3)?;
        for &i in f {
            w.write_i32::<LittleEndian>(i as i32)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn quad_mesh() -> TriMesh {
        TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
                Point3::new(0.0, 1.0, 0.25),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn obj_round_trip_is_lossless() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.obj");
        let mesh = quad_mesh();
        write_obj(&path, &mesh).unwrap();
        let back = read_obj(&path).unwrap();
        assert_eq!(back, mesh);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        /// Text OBJ output prints shortest-round-trip floats, so arbitrary
        /// finite coordinates (subnormals, negative zero, huge magnitudes)
        /// must survive exactly.
        #[test]
        fn obj_round_trips_arbitrary_finite_coordinates(
            coords in proptest::collection::vec(
                prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
                9..30,
            )
        ) {
            let vertices: Vec<Point3> = coords
                .chunks_exact(3)
                .map(|c| Point3::new(c[0], c[1], c[2]))
                .collect();
            let faces = vec![[0u32, 1, 2]];
            let mesh = TriMesh::new(vertices, faces).unwrap();
            let dir = tempdir().unwrap();
            let path = dir.path().join("p.obj");
            write_obj(&path, &mesh).unwrap();
            let back = read_obj(&path).unwrap();
            prop_assert_eq!(back, mesh);
        }
    }

    #[test]
    fn obj_parse_errors_carry_line_numbers() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.obj");
        std::fs::write(&path, "v 0 0 0\nv 1 0 0\nf 1 2\n").unwrap();
        match read_obj(&path) {
            Err(FileFormatError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ply_round_trip_within_f32() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ply");
        let mesh = quad_mesh();
        write_ply(&path, &mesh).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back.faces, mesh.faces);
        for (a, b) in mesh.vertices.iter().zip(&back.vertices) {
            assert!(a.distance(*b) < 1e-6);
        }
    }

    #[test]
    fn ply_with_foreign_vertex_layout_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("n.ply");
        std::fs::write(
            &path,
            "ply\nformat binary_little_endian 1.0\nelement vertex 1\n\
             property float x\nproperty float y\nproperty float z\n\
             property float nx\nproperty float ny\nproperty float nz\n\
             element face 0\nproperty list uchar int vertex_indices\nend_header\n",
        )
        .unwrap();
        assert!(matches!(read_ply(&path), Err(FileFormatError::Malformed { .. })));
    }

    #[test]
    fn dispatch_rejects_unknown_extensions() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.stl");
        assert!(matches!(
            save_mesh(&path, &quad_mesh()),
            Err(FileFormatError::UnsupportedExtension { .. })
        ));
    }
}
