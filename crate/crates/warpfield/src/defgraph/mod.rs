//! The learnable embedded deformation graph: a decimated-mesh node set with
//! per-node axis-angle rotations and translations, interpolated out to the
//! full-resolution mesh to produce a [`TransformField`].

mod decimate;
mod rotation;

pub use decimate::decimate;
pub use rotation::{canonicalize_axis_angle, rotate_vector_jacobian, rotation_from_axis_angle};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{blend_weights, FlowError, TransformField};
use crate::geometry::{AnchoredRigid, GeometryError, KnnIndex, Mat3, Point3, Quat, TriMesh};
use crate::parallel;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("decimation target must be at least 1")]
    InvalidTarget,
    #[error("decimation target {target} exceeds the {available} available vertices")]
    TargetTooLarge { target: usize, available: usize },
    #[error("interpolation k must be in 1..={nodes}, got {k}")]
    InvalidInterpolationK { k: usize, nodes: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Per-node learnable parameters: axis-angle rotation and translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub rotations: Vec<Point3>,
    pub translations: Vec<Point3>,
}

impl GraphParams {
    pub fn zeros(node_count: usize) -> Self {
        GraphParams {
            rotations: vec![Point3::ZERO; node_count],
            translations: vec![Point3::ZERO; node_count],
        }
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }
}

/// Deformation graph over a decimated mesh: nodes are its vertices, edges its
/// unique undirected mesh edges. Parameters start at identity.
#[derive(Debug, Clone)]
pub struct DeformationGraph {
    nodes: Vec<Point3>,
    edges: Vec<(u32, u32)>,
    pub params: GraphParams,
    node_index: KnnIndex,
}

impl DeformationGraph {
    pub fn from_mesh(decimated: &TriMesh) -> Result<DeformationGraph, GraphError> {
        let nodes = decimated.vertices.clone();
        let edges = decimated.undirected_edges();
        let node_index = KnnIndex::build(nodes.clone())?;
        let params = GraphParams::zeros(nodes.len());
        Ok(DeformationGraph { nodes, edges, params, node_index })
    }

    /// Rebuild a graph from serialized parts (nodes/edges/params).
    pub fn from_parts(
        nodes: Vec<Point3>,
        edges: Vec<(u32, u32)>,
        params: GraphParams,
    ) -> Result<DeformationGraph, GraphError> {
        let node_index = KnnIndex::build(nodes.clone())?;
        if params.len() != nodes.len() {
            return Err(GraphError::Geometry(GeometryError::InvalidGrid(format!(
                "parameter count {} does not match node count {}",
                params.len(),
                nodes.len()
            ))));
        }
        let mut edges = edges;
        edges.sort_unstable();
        edges.dedup();
        Ok(DeformationGraph { nodes, edges, params, node_index })
    }

    pub fn nodes(&self) -> &[Point3] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn node_index(&self) -> &KnnIndex {
        &self.node_index
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// The rotation matrix currently encoded at a node.
    pub fn node_rotation(&self, node: usize) -> Mat3 {
        rotation_from_axis_angle(self.params.rotations[node])
    }
}

/// Precomputed sparse interpolation from graph nodes to full-resolution
/// vertices: per vertex, `stride` node ids and matching blend weights.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationWeights {
    stride: usize,
    node_ids: Vec<u32>,
    weights: Vec<f64>,
}

impl InterpolationWeights {
    pub fn vertex_count(&self) -> usize {
        self.node_ids.len().checked_div(self.stride).unwrap_or(0)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// The (node id, weight) pairs for one vertex.
    pub fn vertex_entries(&self, vertex: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let lo = vertex * self.stride;
        let hi = lo + self.stride;
        self.node_ids[lo..hi]
            .iter()
            .copied()
            .zip(self.weights[lo..hi].iter().copied())
    }

    /// Interpolated translation at one vertex given per-node translations.
    pub fn blend_translation(&self, vertex: usize, translations: &[Point3]) -> Point3 {
        let mut t = Point3::ZERO;
        for (node, w) in self.vertex_entries(vertex) {
            t += translations[node as usize] * w;
        }
        t
    }
}

/// KNN blend weights of each vertex against the graph nodes (the same weight
/// rule the flow uses, including the equal-distance uniform fallback).
pub fn compute_interpolation(
    graph: &DeformationGraph,
    vertices: &[Point3],
    k: usize,
) -> Result<InterpolationWeights, GraphError> {
    let nodes = graph.node_count();
    if k == 0 || k > nodes {
        return Err(GraphError::InvalidInterpolationK { k, nodes });
    }
    let stride = k;
    let per_vertex = parallel::map_indexed(vertices, |_, v| {
        let neighbors = graph.node_index.knn(*v, k);
        let distances: Vec<f64> = neighbors.iter().map(|n| n.distance).collect();
        let weights = blend_weights(&distances);
        let ids: Vec<u32> = neighbors.iter().map(|n| n.index as u32).collect();
        (ids, weights)
    });
    let mut node_ids = Vec::with_capacity(vertices.len() * stride);
    let mut weights = Vec::with_capacity(vertices.len() * stride);
    for (ids, ws) in per_vertex {
        node_ids.extend(ids);
        weights.extend(ws);
    }
    Ok(InterpolationWeights { stride, node_ids, weights })
}

/// How node rotations are interpolated to vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationBlend {
    /// Weighted quaternion blend, sign-aligned to the heaviest node.
    #[default]
    Quaternion,
    /// Weighted linear matrix blend followed by polar projection.
    MatrixPolar,
}

/// Interpolate node transforms to the given vertices, yielding a dense
/// [`TransformField`] anchored at those vertices.
///
/// The vertex translation is the blended application of the node transforms
/// to the vertex, `sum(w_j * xi_j(v)) - v`, so node parameters encoding one
/// global rigid motion reproduce it exactly at every vertex. Rotations blend
/// per `blend`; the quaternion path aligns every contributing sign with the
/// heaviest-weight node before normalizing.
pub fn field_from_graph(
    graph: &DeformationGraph,
    vertices: &[Point3],
    weights: &InterpolationWeights,
    k: usize,
    surface_gate: f64,
    blend: RotationBlend,
) -> Result<TransformField, FlowError> {
    if weights.vertex_count() != vertices.len() {
        return Err(FlowError::MismatchedLengths {
            anchors: vertices.len(),
            transforms: weights.vertex_count(),
        });
    }
    let node_quats: Vec<Quat> = graph
        .params
        .rotations
        .iter()
        .map(|&aa| Quat::from_axis_angle(aa))
        .collect();
    let node_mats: Vec<Mat3> = graph
        .params
        .rotations
        .iter()
        .map(|&aa| rotation_from_axis_angle(aa))
        .collect();
    let node_transforms: Vec<AnchoredRigid> = graph
        .nodes()
        .iter()
        .zip(&node_mats)
        .zip(&graph.params.translations)
        .map(|((&origin, &rotation), &translation)| AnchoredRigid { rotation, origin, translation })
        .collect();

    let transforms: Vec<AnchoredRigid> = parallel::map_indexed(vertices, |vi, v| {
        let mut displacement = Point3::ZERO;
        for (node, w) in weights.vertex_entries(vi) {
            displacement += (node_transforms[node as usize].apply(*v) - *v) * w;
        }
        let translation = displacement;
        let rotation = match blend {
            RotationBlend::Quaternion => {
                let heaviest = weights
                    .vertex_entries(vi)
                    .enumerate()
                    .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
                    .map(|(_, (node, _))| node)
                    .expect("at least one interpolation entry");
                let reference = node_quats[heaviest as usize];
                let mut sum = Quat { w: 0.0, x: 0.0, y: 0.0, z: 0.0 };
                for (node, w) in weights.vertex_entries(vi) {
                    let mut q = node_quats[node as usize];
                    if q.dot(reference) < 0.0 {
                        q = q.scaled(-1.0);
                    }
                    sum = sum.add(q.scaled(w));
                }
                sum.normalized().unwrap_or(reference).to_mat3()
            }
            RotationBlend::MatrixPolar => {
                let mut sum = Mat3::from_rows([0.0; 3], [0.0; 3], [0.0; 3]);
                for (node, w) in weights.vertex_entries(vi) {
                    sum = sum.add(&node_mats[node as usize].scale(w));
                }
                match sum.orthonormalize_polar() {
                    // The polar factor of a negative-determinant blend is a
                    // reflection; only accept proper rotations.
                    Some(r) if r.orthonormality_error() < 1e-9 && r.det() > 0.0 => r,
                    // Degenerate blends (opposing rotations) fall back to the
                    // nearest node's rotation.
                    _ => {
                        let nearest = weights
                            .vertex_entries(vi)
                            .next()
                            .expect("at least one interpolation entry")
                            .0;
                        rotation_from_axis_angle(graph.params.rotations[nearest as usize])
                    }
                }
            }
        };
        AnchoredRigid { rotation, origin: *v, translation }
    });

    TransformField::new(vertices.to_vec(), transforms, k, surface_gate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::DEFAULT_SURFACE_GATE;

    fn triangle_mesh() -> TriMesh {
        TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    fn tetrahedron_mesh() -> TriMesh {
        TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_graph() {
        let g = DeformationGraph::from_mesh(&triangle_mesh()).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert!(g.params.rotations.iter().all(|r| *r == Point3::ZERO));
        assert!(g.params.translations.iter().all(|t| *t == Point3::ZERO));
    }

    #[test]
    fn tetrahedron_graph_has_six_unique_edges() {
        let g = DeformationGraph::from_mesh(&tetrahedron_mesh()).unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edges().len(), 6);
        // Set-comparison oracle: brute-force unique undirected pairs.
        let mut expect = std::collections::BTreeSet::new();
        for f in &tetrahedron_mesh().faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                expect.insert((a.min(b), a.max(b)));
            }
        }
        let got: std::collections::BTreeSet<(u32, u32)> = g.edges().iter().copied().collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn interpolation_weights_sum_to_one() {
        let g = DeformationGraph::from_mesh(&tetrahedron_mesh()).unwrap();
        let vertices: Vec<Point3> = (0..30)
            .map(|i| Point3::new(i as f64 * 0.03, 0.1, 0.2))
            .collect();
        let w = compute_interpolation(&g, &vertices, 3).unwrap();
        for vi in 0..vertices.len() {
            let sum: f64 = w.vertex_entries(vi).map(|(_, wt)| wt).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn k1_means_nearest_node_gets_weight_one() {
        let g = DeformationGraph::from_mesh(&tetrahedron_mesh()).unwrap();
        let vertices = vec![Point3::new(0.9, 0.05, 0.0), Point3::new(0.0, 0.0, 0.95)];
        let w = compute_interpolation(&g, &vertices, 1).unwrap();
        let entries: Vec<(u32, f64)> = w.vertex_entries(0).collect();
        assert_eq!(entries, vec![(1, 1.0)]);
        let entries: Vec<(u32, f64)> = w.vertex_entries(1).collect();
        assert_eq!(entries, vec![(3, 1.0)]);
    }

    #[test]
    fn vertex_on_a_node_gives_it_the_largest_weight() {
        let g = DeformationGraph::from_mesh(&tetrahedron_mesh()).unwrap();
        let w = compute_interpolation(&g, &[Point3::new(0.0, 0.0, 1.0)], 3).unwrap();
        let entries: Vec<(u32, f64)> = w.vertex_entries(0).collect();
        assert_eq!(entries[0].0, 3);
        assert!(entries[0].1 > entries[1].1 && entries[0].1 > entries[2].1);
    }

    #[test]
    fn zero_params_give_an_identity_field() {
        let g = DeformationGraph::from_mesh(&tetrahedron_mesh()).unwrap();
        let vertices: Vec<Point3> = (0..10)
            .map(|i| Point3::new(0.05 * i as f64, 0.1, 0.3))
            .collect();
        let w = compute_interpolation(&g, &vertices, 3).unwrap();
        let field =
            field_from_graph(&g, &vertices, &w, 4, DEFAULT_SURFACE_GATE, RotationBlend::Quaternion)
                .unwrap();
        for t in field.transforms() {
            assert!(t.rotation.sub(&Mat3::IDENTITY).frobenius_norm() < 1e-15);
            assert_eq!(t.translation, Point3::ZERO);
        }
    }

    #[test]
    fn global_rigid_node_params_reproduce_the_motion() {
        let aa = Point3::new(0.2, -0.3, 0.5);
        let rotation = rotation_from_axis_angle(aa);
        let t_global = Point3::new(0.1, 0.2, -0.05);

        let mesh = tetrahedron_mesh();
        let mut g = DeformationGraph::from_mesh(&mesh).unwrap();
        for (i, node) in g.nodes().to_vec().iter().enumerate() {
            g.params.rotations[i] = aa;
            g.params.translations[i] = rotation.mul_vec(*node) + t_global - *node;
        }

        let vertices: Vec<Point3> = (0..40)
            .map(|i| Point3::new(0.02 * i as f64, 0.3 - 0.005 * i as f64, 0.1))
            .collect();
        let w = compute_interpolation(&g, &vertices, 3).unwrap();
        for blend in [RotationBlend::Quaternion, RotationBlend::MatrixPolar] {
            let field = field_from_graph(&g, &vertices, &w, 5, DEFAULT_SURFACE_GATE, blend).unwrap();
            for &p in &vertices {
                let expect = rotation.mul_vec(p) + t_global;
                assert!(field.forward(p).distance(expect) < 1e-10, "{blend:?}");
            }
        }
    }

    #[test]
    fn weight_one_vertex_copies_the_node_rotation() {
        let mesh = tetrahedron_mesh();
        let mut g = DeformationGraph::from_mesh(&mesh).unwrap();
        g.params.rotations[2] = Point3::new(0.0, 0.7, 0.0);
        let vertices = vec![Point3::new(0.0, 1.0, 0.0)]; // exactly node 2
        let w = compute_interpolation(&g, &vertices, 1).unwrap();
        let field = field_from_graph(
            &g,
            &vertices,
            &w,
            1,
            DEFAULT_SURFACE_GATE,
            RotationBlend::Quaternion,
        )
        .unwrap();
        let expect = rotation_from_axis_angle(Point3::new(0.0, 0.7, 0.0));
        assert!(field.transforms()[0].rotation.sub(&expect).frobenius_norm() < 1e-14);
    }

    #[test]
    fn blending_identical_rotations_returns_that_rotation() {
        let aa = Point3::new(0.4, 0.1, -0.2);
        let mesh = tetrahedron_mesh();
        let mut g = DeformationGraph::from_mesh(&mesh).unwrap();
        for r in &mut g.params.rotations {
            *r = aa;
        }
        let vertices = vec![Point3::new(0.2, 0.2, 0.2)];
        let w = compute_interpolation(&g, &vertices, 4).unwrap();
        let field = field_from_graph(
            &g,
            &vertices,
            &w,
            1,
            DEFAULT_SURFACE_GATE,
            RotationBlend::Quaternion,
        )
        .unwrap();
        let expect = rotation_from_axis_angle(aa);
        assert!(field.transforms()[0].rotation.sub(&expect).frobenius_norm() < 4.0 * f64::EPSILON);
    }

    #[test]
    fn nearby_rotations_blend_without_sign_flips() {
        // Rotations within 15 degrees of each other: the blended quaternion
        // keeps a positive dot product with the heaviest contributor.
        let base = Point3::new(0.3, 0.2, 0.1);
        let mesh = tetrahedron_mesh();
        let mut g = DeformationGraph::from_mesh(&mesh).unwrap();
        for (i, r) in g.params.rotations.iter_mut().enumerate() {
            *r = base + Point3::new(0.02 * i as f64, -0.015 * i as f64, 0.01);
        }
        let vertices = vec![Point3::new(0.25, 0.25, 0.25)];
        let w = compute_interpolation(&g, &vertices, 4).unwrap();
        let field = field_from_graph(
            &g,
            &vertices,
            &w,
            1,
            DEFAULT_SURFACE_GATE,
            RotationBlend::Quaternion,
        )
        .unwrap();
        let blended = field.transforms()[0].rotation;
        assert!(blended.orthonormality_error() < 1e-12);
        let heaviest = w.vertex_entries(0).max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        let qh = Quat::from_axis_angle(g.params.rotations[heaviest as usize]);
        // Recover the blended quaternion via the rotation's trace.
        let trace = blended.m[0][0] + blended.m[1][1] + blended.m[2][2];
        let qw = ((trace + 1.0) / 4.0).max(0.0).sqrt();
        let qx = (blended.m[2][1] - blended.m[1][2]) / (4.0 * qw);
        let qy = (blended.m[0][2] - blended.m[2][0]) / (4.0 * qw);
        let qz = (blended.m[1][0] - blended.m[0][1]) / (4.0 * qw);
        let qb = Quat { w: qw, x: qx, y: qy, z: qz };
        assert!(qb.dot(qh) > 0.0);
    }
}
