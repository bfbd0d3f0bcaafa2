//! Quadric-error edge-collapse decimation, used to reduce the full mesh to
//! the deformation-graph node set.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, BTreeSet};

use crate::geometry::{Point3, TriMesh};

use super::GraphError;

/// Symmetric 4x4 quadric, upper triangle stored row-major:
/// [q00 q01 q02 q03 q11 q12 q13 q22 q23 q33].
#[derive(Debug, Clone, Copy, Default)]
struct Quadric {
    q: [f64; 10],
}

impl Quadric {
    /// Quadric of the plane n.p + d = 0 (n unit), weighted by `area`.
    fn from_plane(n: Point3, d: f64, area: f64) -> Quadric {
        let v = [n.x, n.y, n.z, d];
        let mut q = [0.0; 10];
        let mut at = 0;
        for i in 0..4 {
            for j in i..4 {
                q[at] = v[i] * v[j] * area;
                at += 1;
            }
        }
        Quadric { q }
    }

    fn add(&mut self, other: &Quadric) {
        for (a, b) in self.q.iter_mut().zip(other.q.iter()) {
            *a += b;
        }
    }

    /// p^T Q p for homogeneous p = (x, y, z, 1).
    fn error(&self, p: Point3) -> f64 {
        let v = [p.x, p.y, p.z, 1.0];
        let q = &self.q;
        let full = [
            [q[0], q[1], q[2], q[3]],
            [q[1], q[4], q[5], q[6]],
            [q[2], q[5], q[7], q[8]],
            [q[3], q[6], q[8], q[9]],
        ];
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                acc += v[i] * full[i][j] * v[j];
            }
        }
        acc
    }

    /// Minimizer of the quadric if the 3x3 block is well conditioned.
    fn optimal_point(&self) -> Option<Point3> {
        let q = &self.q;
        let a = crate::geometry::Mat3::from_rows(
            [q[0], q[1], q[2]],
            [q[1], q[4], q[5]],
            [q[2], q[5], q[7]],
        );
        let b = Point3::new(q[3], q[6], q[8]);
        a.inverse().map(|inv| inv.mul_vec(-b))
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    u: u32,
    v: u32,
    version_u: u32,
    version_v: u32,
    target: Point3,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cost == other.cost && self.u == other.u && self.v == other.v
    }
}
impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: reverse so the cheapest collapse pops
        // first, with (u, v) breaking cost ties deterministically.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.u.cmp(&self.u))
            .then_with(|| other.v.cmp(&self.v))
    }
}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct DecimationState {
    positions: Vec<Point3>,
    quadrics: Vec<Quadric>,
    vertex_alive: Vec<bool>,
    versions: Vec<u32>,
    faces: Vec<[u32; 3]>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<BTreeSet<u32>>,
    heap: BinaryHeap<Candidate>,
    alive_count: usize,
    /// Longest edge a collapse may create. Straight regions have near-zero
    /// quadric cost, so unchecked greedy collapse strings distant vertices
    /// together; the cap keeps node spacing roughly uniform, which the
    /// downstream deformation graph depends on.
    max_edge: f64,
}

impl DecimationState {
    fn new(mesh: &TriMesh, max_edge: f64) -> Self {
        let n = mesh.vertices.len();
        let mut quadrics = vec![Quadric::default(); n];
        let mut vertex_faces = vec![BTreeSet::new(); n];
        for (fi, f) in mesh.faces.iter().enumerate() {
            let a = mesh.vertices[f[0] as usize];
            let b = mesh.vertices[f[1] as usize];
            let c = mesh.vertices[f[2] as usize];
            let cross = (b - a).cross(c - a);
            let area = 0.5 * cross.norm();
            if let Some(normal) = cross.normalized() {
                let plane = Quadric::from_plane(normal, -normal.dot(a), area);
                for &vi in f {
                    quadrics[vi as usize].add(&plane);
                }
            }
            for &vi in f {
                vertex_faces[vi as usize].insert(fi as u32);
            }
        }
        DecimationState {
            positions: mesh.vertices.clone(),
            quadrics,
            vertex_alive: vec![true; n],
            versions: vec![0; n],
            faces: mesh.faces.clone(),
            face_alive: vec![true; mesh.faces.len()],
            vertex_faces,
            heap: BinaryHeap::new(),
            alive_count: n,
            max_edge,
        }
    }

    fn neighbors(&self, u: u32) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        for &fi in &self.vertex_faces[u as usize] {
            if !self.face_alive[fi as usize] {
                continue;
            }
            for &vi in &self.faces[fi as usize] {
                if vi != u {
                    out.insert(vi);
                }
            }
        }
        out
    }

    fn push_candidate(&mut self, u: u32, v: u32) {
        let (u, v) = (u.min(v), u.max(v));
        let mut q = self.quadrics[u as usize];
        q.add(&self.quadrics[v as usize]);
        let pu = self.positions[u as usize];
        let pv = self.positions[v as usize];
        let target = match q.optimal_point() {
            Some(p) if p.is_finite() => p,
            _ => {
                let mid = (pu + pv) * 0.5;
                // Cheapest of the three standard fallbacks.
                let mut best = pu;
                let mut best_err = q.error(pu);
                for cand in [pv, mid] {
                    let e = q.error(cand);
                    if e < best_err {
                        best_err = e;
                        best = cand;
                    }
                }
                best
            }
        };
        self.heap.push(Candidate {
            cost: q.error(target).max(0.0),
            u,
            v,
            version_u: self.versions[u as usize],
            version_v: self.versions[v as usize],
            target,
        });
    }

    /// Shared faces of the edge (u, v); their opposite vertices are the only
    /// neighbors u and v may legally have in common (link condition).
    fn edge_faces(&self, u: u32, v: u32) -> Vec<u32> {
        self.vertex_faces[u as usize]
            .intersection(&self.vertex_faces[v as usize])
            .copied()
            .filter(|&fi| self.face_alive[fi as usize])
            .collect()
    }

    fn collapse_is_legal(&self, cand: &Candidate) -> bool {
        let (u, v) = (cand.u, cand.v);
        let shared = self.edge_faces(u, v);
        if shared.is_empty() {
            return false; // stale candidate, no longer an edge
        }
        let opposite: BTreeSet<u32> = shared
            .iter()
            .flat_map(|&fi| self.faces[fi as usize])
            .filter(|&w| w != u && w != v)
            .collect();
        let common: BTreeSet<u32> = self
            .neighbors(u)
            .intersection(&self.neighbors(v))
            .copied()
            .collect();
        if common != opposite {
            return false; // would pinch the mesh into a non-manifold
        }

        // Keep node spacing bounded: no surviving edge may exceed the cap.
        if self.max_edge.is_finite() {
            let mut around = self.neighbors(u);
            around.extend(self.neighbors(v));
            for w in around {
                if w != u
                    && w != v
                    && cand.target.distance(self.positions[w as usize]) > self.max_edge
                {
                    return false;
                }
            }
        }

        // Reject collapses that flip or squash surviving faces.
        for &w in [u, v].iter() {
            for &fi in &self.vertex_faces[w as usize] {
                if !self.face_alive[fi as usize] || shared.contains(&fi) {
                    continue;
                }
                let f = self.faces[fi as usize];
                let old = [
                    self.positions[f[0] as usize],
                    self.positions[f[1] as usize],
                    self.positions[f[2] as usize],
                ];
                let new: Vec<Point3> = f
                    .iter()
                    .map(|&vi| {
                        if vi == u || vi == v {
                            cand.target
                        } else {
                            self.positions[vi as usize]
                        }
                    })
                    .collect();
                let n_old = (old[1] - old[0]).cross(old[2] - old[0]);
                let n_new = (new[1] - new[0]).cross(new[2] - new[0]);
                if n_new.norm() < 1e-14 * n_old.norm().max(1e-300) || n_old.dot(n_new) <= 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// Merge v into u, moving u to the candidate target.
    fn collapse(&mut self, cand: &Candidate) {
        let (u, v) = (cand.u, cand.v);
        for &fi in &self.edge_faces(u, v) {
            self.face_alive[fi as usize] = false;
        }
        self.positions[u as usize] = cand.target;
        let vq = self.quadrics[v as usize];
        self.quadrics[u as usize].add(&vq);
        self.vertex_alive[v as usize] = false;
        self.alive_count -= 1;

        let v_faces: Vec<u32> = self.vertex_faces[v as usize].iter().copied().collect();
        for fi in v_faces {
            if !self.face_alive[fi as usize] {
                continue;
            }
            let f = &mut self.faces[fi as usize];
            for vi in f.iter_mut() {
                if *vi == v {
                    *vi = u;
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                self.face_alive[fi as usize] = false;
            } else {
                self.vertex_faces[u as usize].insert(fi);
            }
        }
        self.vertex_faces[v as usize].clear();

        self.versions[u as usize] += 1;
        self.versions[v as usize] += 1;
        for w in self.neighbors(u) {
            self.push_candidate(u, w);
        }
    }

    fn into_mesh(self) -> Result<TriMesh, GraphError> {
        let mut remap = vec![u32::MAX; self.positions.len()];
        let mut vertices = Vec::with_capacity(self.alive_count);
        for (i, alive) in self.vertex_alive.iter().enumerate() {
            if *alive {
                remap[i] = vertices.len() as u32;
                vertices.push(self.positions[i]);
            }
        }
        let faces: Vec<[u32; 3]> = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, alive)| **alive)
            .map(|(f, _)| [remap[f[0] as usize], remap[f[1] as usize], remap[f[2] as usize]])
            .collect();
        Ok(TriMesh::new(vertices, faces)?)
    }
}

/// Collapse edges in ascending quadric-error order until `target_nodes`
/// vertices remain. Fully deterministic: ties break on vertex indices.
pub fn decimate(mesh: &TriMesh, target_nodes: usize) -> Result<TriMesh, GraphError> {
    if target_nodes == 0 {
        return Err(GraphError::InvalidTarget);
    }
    if target_nodes > mesh.vertices.len() {
        return Err(GraphError::TargetTooLarge {
            target: target_nodes,
            available: mesh.vertices.len(),
        });
    }
    if target_nodes == mesh.vertices.len() {
        return Ok(mesh.clone());
    }

    // Cap new edges at a multiple of the expected node spacing for the
    // target density (sqrt of area per node).
    let area = mesh.area();
    let max_edge = if area > 0.0 {
        6.0 * (area / target_nodes as f64).sqrt()
    } else {
        f64::INFINITY
    };

    let mut state = DecimationState::new(mesh, max_edge);
    for (u, v) in mesh.undirected_edges() {
        state.push_candidate(u, v);
    }

    while state.alive_count > target_nodes {
        let Some(cand) = state.heap.pop() else {
            break; // no legal collapse left; return the best achieved
        };
        if !state.vertex_alive[cand.u as usize]
            || !state.vertex_alive[cand.v as usize]
            || state.versions[cand.u as usize] != cand.version_u
            || state.versions[cand.v as usize] != cand.version_v
        {
            continue;
        }
        if !state.collapse_is_legal(&cand) {
            continue;
        }
        state.collapse(&cand);
    }

    state.into_mesh()
}
