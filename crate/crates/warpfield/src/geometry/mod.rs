//! Core geometric primitives: points, anchored rigid transforms, triangle
//! meshes, an exact spatial KNN index, and isosurface extraction.

mod grid;
mod knn;
mod marching;
pub mod mc_tables;
mod mesh;
mod point;
mod rigid;

#[allow(clippy::module_inception)]
mod mat;

pub use grid::ScalarGrid;
pub use knn::{KnnIndex, Neighbor};
pub use marching::{marching_cubes, marching_cubes_oriented};
pub use mat::{Mat3, Quat};
pub use mesh::{point_triangle_distance, TriMesh};
pub use point::{Aabb, Point3};
pub use rigid::{AnchoredRigid, ROTATION_REPAIR_TOL, ROTATION_TOL};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("no grid cell straddles the iso level")]
    EmptyIsosurface,
    #[error("matrix is not a rotation (deviation {error:.3e})")]
    InvalidRotation { error: f64 },
    #[error("non-finite coordinates")]
    NonFinite,
    #[error("vertex {vertex} has non-finite coordinates")]
    NonFiniteVertex { vertex: usize },
    #[error("face {face} references vertex {index}, but only {count} vertices exist")]
    FaceIndexOutOfRange { face: usize, index: u32, count: usize },
    #[error("face {face} repeats a vertex index")]
    DegenerateFace { face: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Distance from `p` to the nearest indexed mesh vertex.
///
/// This is the default "surface distance": flow anchors are vertices, so the
/// nearest-vertex metric matches how the flow itself sees the surface. For
/// coarse meshes, [`TriMesh::surface_distance_to_triangles`] gives the exact
/// point-to-triangle distance instead.
pub fn surface_distance(index: &KnnIndex, p: Point3) -> f64 {
    index.distance_to_nearest(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surface_distance_at_a_vertex_is_zero() {
        let pts = vec![Point3::ZERO, Point3::new(1.0, 0.0, 0.0)];
        let idx = KnnIndex::build(pts).unwrap();
        assert_eq!(surface_distance(&idx, Point3::ZERO), 0.0);
    }

    #[test]
    fn surface_distance_above_a_flat_grid() {
        // z = 0 plane sampled at 0.01 spacing; a point 1 above it must see a
        // distance in [1, 1 + spacing].
        let mut pts = Vec::new();
        for i in -20..=20 {
            for j in -20..=20 {
                pts.push(Point3::new(i as f64 * 0.01, j as f64 * 0.01, 0.0));
            }
        }
        let idx = KnnIndex::build(pts).unwrap();
        let d = surface_distance(&idx, Point3::new(0.0, 0.0, 1.0));
        assert!((1.0..=1.01).contains(&d));
        // Offset query so the nearest vertex is no longer directly below.
        let d = surface_distance(&idx, Point3::new(0.005, 0.005, 1.0));
        assert!((1.0..=1.01).contains(&d));
    }

    #[test]
    fn surface_distance_matches_brute_force() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(5);
        let pts: Vec<Point3> = (0..500)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let idx = KnnIndex::build(pts.clone()).unwrap();
        for _ in 0..50 {
            let q = Point3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let brute = pts
                .iter()
                .map(|p| p.distance_squared(q))
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            assert_eq!(surface_distance(&idx, q), brute);
        }
    }
}
