use std::collections::HashMap;

use super::grid::ScalarGrid;
use super::mc_tables::{case_triangles, CORNER_OFFSETS, EDGE_CORNERS};
use super::mesh::TriMesh;
use super::point::Point3;
use super::GeometryError;

/// Extract the iso-level surface of a scalar grid with the classic 256-case
/// marching cubes triangulation. Values above `iso` are treated as inside;
/// see [`marching_cubes_oriented`] to flip that convention. Faces are wound
/// counter-clockwise seen from outside.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> Result<TriMesh, GeometryError> {
    marching_cubes_oriented(grid, iso, true)
}

/// Marching cubes with an explicit inside convention: `inside_above = false`
/// treats values below `iso` as inside (signed distance fields).
pub fn marching_cubes_oriented(
    grid: &ScalarGrid,
    iso: f64,
    inside_above: bool,
) -> Result<TriMesh, GeometryError> {
    let (nx, ny, nz) = grid.resolution();

    // Canonical (low corner, axis) for each cube edge so shared vertices are
    // interpolated identically from every adjacent cell.
    let edge_canon: [(usize, usize); 12] = {
        let mut canon = [(0usize, 0usize); 12];
        for (e, &(a, b)) in EDGE_CORNERS.iter().enumerate() {
            let oa = CORNER_OFFSETS[a];
            let ob = CORNER_OFFSETS[b];
            let axis = if oa.0 != ob.0 {
                0
            } else if oa.1 != ob.1 {
                1
            } else {
                2
            };
            let low = match axis {
                0 => if oa.0 == 0 { a } else { b },
                1 => if oa.1 == 0 { a } else { b },
                _ => if oa.2 == 0 { a } else { b },
            };
            canon[e] = (low, axis);
        }
        canon
    };

    let mut vertices: Vec<Point3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut edge_vertex: HashMap<(usize, usize, usize, usize), u32> = HashMap::new();

    let inside = |v: f64| if inside_above { v > iso } else { v < iso };

    for cz in 0..nz - 1 {
        for cy in 0..ny - 1 {
            for cx in 0..nx - 1 {
                let mut mask = 0u8;
                let mut corner_values = [0.0f64; 8];
                for (i, &(dx, dy, dz)) in CORNER_OFFSETS.iter().enumerate() {
                    let v = grid.value(cx + dx, cy + dy, cz + dz);
                    corner_values[i] = v;
                    if inside(v) {
                        mask |= 1 << i;
                    }
                }
                if mask == 0 || mask == 0xFF {
                    continue;
                }

                let mut cell_edge_vertex = [u32::MAX; 12];
                for tri in case_triangles(mask) {
                    let mut ids = [0u32; 3];
                    for (slot, &e) in tri.iter().enumerate() {
                        let e = e as usize;
                        if cell_edge_vertex[e] == u32::MAX {
                            let (low, axis) = edge_canon[e];
                            let (dx, dy, dz) = CORNER_OFFSETS[low];
                            let key = (cx + dx, cy + dy, cz + dz, axis);
                            let id = *edge_vertex.entry(key).or_insert_with(|| {
                                let (lx, ly, lz) = (key.0, key.1, key.2);
                                let (hx, hy, hz) = match axis {
                                    0 => (lx + 1, ly, lz),
                                    1 => (lx, ly + 1, lz),
                                    _ => (lx, ly, lz + 1),
                                };
                                let vlo = grid.value(lx, ly, lz);
                                let vhi = grid.value(hx, hy, hz);
                                // Exactly one endpoint is inside, so vlo != vhi.
                                let t = (iso - vlo) / (vhi - vlo);
                                let mut p = grid.position(lx, ly, lz);
                                match axis {
                                    0 => p.x += t * grid.voxel_size,
                                    1 => p.y += t * grid.voxel_size,
                                    _ => p.z += t * grid.voxel_size,
                                }
                                let id = vertices.len() as u32;
                                vertices.push(p);
                                id
                            });
                            cell_edge_vertex[e] = id;
                        }
                        ids[slot] = cell_edge_vertex[e];
                    }
                    // The table winds normals toward the inside corners; flip
                    // for outward orientation. Degenerate triangles appear
                    // only when the surface passes exactly through a corner.
                    if ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2] {
                        faces.push([ids[0], ids[2], ids[1]]);
                    }
                }
            }
        }
    }

    if faces.is_empty() {
        return Err(GeometryError::EmptyIsosurface);
    }
    TriMesh::new(vertices, faces)
}
