use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::defgraph::{DeformationGraph, GraphParams};
use crate::flow::TransformField;
use crate::geometry::{AnchoredRigid, Mat3, Point3};

use super::FileFormatError;

#[derive(Serialize, Deserialize)]
struct DfieldHeader {
    anchors: usize,
    k: usize,
    tau: f64,
}

/// `.dfield`: one JSON header line (anchor count, k, tau) followed by a
/// little-endian f64 blob — anchor positions (3n), row-major rotations (9n),
/// translations (3n).
pub fn write_dfield(path: &Path, field: &TransformField) -> Result<(), FileFormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = DfieldHeader {
        anchors: field.anchors().len(),
        k: field.k(),
        tau: field.surface_gate(),
    };
    serde_json::to_writer(&mut w, &header)
        .map_err(|e| FileFormatError::malformed(path, e.to_string()))?;
    w.write_all(b"\n")?;
    for a in field.anchors() {
        for c in [a.x, a.y, a.z] {
            w.write_f64::<LittleEndian>(c)?;
        }
    }
    for t in field.transforms() {
        for c in t.rotation.to_row_major() {
            w.write_f64::<LittleEndian>(c)?;
        }
    }
    for t in field.transforms() {
        for c in [t.translation.x, t.translation.y, t.translation.z] {
            w.write_f64::<LittleEndian>(c)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dfield(path: &Path) -> Result<TransformField, FileFormatError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header_line = String::new();
    r.read_line(&mut header_line)?;
    let header: DfieldHeader = serde_json::from_str(header_line.trim())
        .map_err(|e| FileFormatError::parse(path, 1, e.to_string()))?;

    let n = header.anchors;
    let read_points = |r: &mut BufReader<File>| -> Result<Vec<Point3>, FileFormatError> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let x = r.read_f64::<LittleEndian>()?;
            let y = r.read_f64::<LittleEndian>()?;
            let z = r.read_f64::<LittleEndian>()?;
            out.push(Point3::new(x, y, z));
        }
        Ok(out)
    };
    let anchors = read_points(&mut r)?;
    let mut rotations = Vec::with_capacity(n);
    for _ in 0..n {
        let mut m = [0.0; 9];
        for slot in &mut m {
            *slot = r.read_f64::<LittleEndian>()?;
        }
        rotations.push(Mat3::from_row_major(m));
    }
    let translations = read_points(&mut r)?;
    let mut trailing = Vec::new();
    r.read_to_end(&mut trailing)?;
    if !trailing.is_empty() {
        return Err(FileFormatError::malformed(
            path,
            format!("{} unexpected trailing bytes", trailing.len()),
        ));
    }

    let transforms: Vec<AnchoredRigid> = anchors
        .iter()
        .zip(rotations)
        .zip(translations)
        .map(|((&origin, rotation), translation)| AnchoredRigid { rotation, origin, translation })
        .collect();
    TransformField::new(anchors, transforms, header.k, header.tau)
        .map_err(|source| FileFormatError::InvalidField { path: path.display().to_string(), source })
}

#[derive(Serialize, Deserialize)]
struct DgraphFile {
    nodes: Vec<Point3>,
    edges: Vec<(u32, u32)>,
    params: GraphParams,
}

/// `.dgraph`: JSON with nodes, edges, and per-node parameter arrays.
pub fn write_dgraph(path: &Path, graph: &DeformationGraph) -> Result<(), FileFormatError> {
    let file = DgraphFile {
        nodes: graph.nodes().to_vec(),
        edges: graph.edges().to_vec(),
        params: graph.params.clone(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &file)
        .map_err(|e| FileFormatError::malformed(path, e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_dgraph(path: &Path) -> Result<DeformationGraph, FileFormatError> {
    let file = File::open(path)?;
    let parsed: DgraphFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| FileFormatError::malformed(path, e.to_string()))?;
    DeformationGraph::from_parts(parsed.nodes, parsed.edges, parsed.params)
        .map_err(|e| FileFormatError::malformed(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defgraph::rotation_from_axis_angle;
    use tempfile::tempdir;

    #[test]
    fn dfield_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.dfield");
        let anchors: Vec<Point3> = (0..20)
            .map(|i| Point3::new(i as f64 * 0.1, (i % 3) as f64, 0.5))
            .collect();
        let transforms: Vec<AnchoredRigid> = anchors
            .iter()
            .enumerate()
            .map(|(i, &a)| AnchoredRigid {
                rotation: rotation_from_axis_angle(Point3::new(0.01 * i as f64, 0.02, -0.01)),
                origin: a,
                translation: Point3::new(0.0, 0.001 * i as f64, 0.0),
            })
            .collect();
        let field = TransformField::new(anchors, transforms, 5, 7e-5).unwrap();
        write_dfield(&path, &field).unwrap();
        let back = read_dfield(&path).unwrap();
        assert_eq!(back.anchors(), field.anchors());
        assert_eq!(back.transforms(), field.transforms());
        assert_eq!(back.k(), 5);
        assert_eq!(back.surface_gate(), 7e-5);
    }

    #[test]
    fn dgraph_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("g.dgraph");
        let mesh = crate::evalsynth::sphere_mesh(0.4, 6, 6);
        let mut graph = DeformationGraph::from_mesh(&mesh).unwrap();
        graph.params.rotations[3] = Point3::new(0.1, 0.2, 0.3);
        graph.params.translations[5] = Point3::new(-0.05, 0.0, 0.02);
        write_dgraph(&path, &graph).unwrap();
        let back = read_dgraph(&path).unwrap();
        assert_eq!(back.nodes(), graph.nodes());
        assert_eq!(back.edges(), graph.edges());
        assert_eq!(back.params, graph.params);
    }

    #[test]
    fn truncated_dfield_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.dfield");
        std::fs::write(&path, b"{\"anchors\":2,\"k\":1,\"tau\":7e-5}\n\x00\x00").unwrap();
        assert!(read_dfield(&path).is_err());
    }
}
