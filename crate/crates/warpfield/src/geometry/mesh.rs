use super::point::{Aabb, Point3};
use super::GeometryError;

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Validating constructor: face indices in range, no degenerate faces,
    /// finite coordinates.
    pub fn new(vertices: Vec<Point3>, faces: Vec<[u32; 3]>) -> Result<TriMesh, GeometryError> {
        let count = vertices.len();
        if let Some(bad) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFiniteVertex { vertex: bad });
        }
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i as usize >= count {
                    return Err(GeometryError::FaceIndexOutOfRange { face: fi, index: i, count });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(GeometryError::DegenerateFace { face: fi });
            }
        }
        Ok(TriMesh { vertices, faces })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Unique undirected edges as (min, max) pairs, sorted ascending.
    pub fn undirected_edges(&self) -> Vec<(u32, u32)> {
        let mut edges: Vec<(u32, u32)> = self
            .faces
            .iter()
            .flat_map(|f| {
                [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
                    .into_iter()
                    .map(|(a, b)| (a.min(b), a.max(b)))
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    pub fn bounding_box(&self) -> Option<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    /// V - E + F over the whole mesh (2 for each closed genus-0 component).
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.undirected_edges().len() as i64
            + self.faces.len() as i64
    }

    /// Number of connected components, counting isolated vertices.
    pub fn connected_components(&self) -> usize {
        let mut parent: Vec<u32> = (0..self.vertices.len() as u32).collect();
        fn find(parent: &mut [u32], mut a: u32) -> u32 {
            while parent[a as usize] != a {
                parent[a as usize] = parent[parent[a as usize] as usize];
                a = parent[a as usize];
            }
            a
        }
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2])] {
                let ra = find(&mut parent, a);
                let rb = find(&mut parent, b);
                if ra != rb {
                    parent[ra.max(rb) as usize] = ra.min(rb);
                }
            }
        }
        let mut roots: Vec<u32> = (0..parent.len() as u32)
            .map(|i| find(&mut parent, i))
            .collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    /// Total surface area.
    pub fn area(&self) -> f64 {
        self.faces.iter().map(|f| self.face_area(*f)).sum()
    }

    pub fn face_area(&self, f: [u32; 3]) -> f64 {
        let a = self.vertices[f[0] as usize];
        let b = self.vertices[f[1] as usize];
        let c = self.vertices[f[2] as usize];
        0.5 * (b - a).cross(c - a).norm()
    }

    /// Signed volume via the divergence theorem; positive for outward-facing
    /// closed surfaces.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let a = self.vertices[f[0] as usize];
                let b = self.vertices[f[1] as usize];
                let c = self.vertices[f[2] as usize];
                a.dot(b.cross(c)) / 6.0
            })
            .sum()
    }

    /// Exact distance from `p` to the mesh surface, minimizing over all
    /// triangles. Linear in face count; intended for coarse meshes where
    /// nearest-vertex distance is too crude.
    pub fn surface_distance_to_triangles(&self, p: Point3) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                point_triangle_distance(
                    p,
                    self.vertices[f[0] as usize],
                    self.vertices[f[1] as usize],
                    self.vertices[f[2] as usize],
                )
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Distance from point `p` to triangle (a, b, c), handling all Voronoi
/// regions (face, edges, corners).
pub fn point_triangle_distance(p: Point3, a: Point3, b: Point3, c: Point3) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;

    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }

    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return (a + ab * t).distance(p);
    }

    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return (a + ac * t).distance(p);
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * t).distance(p);
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w).distance(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> TriMesh {
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
    fn validation_catches_bad_faces() {
        let verts = vec![Point3::ZERO, Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        assert!(matches!(
            TriMesh::new(verts.clone(), vec![[0, 1, 3]]),
            Err(GeometryError::FaceIndexOutOfRange { .. })
        ));
        assert!(matches!(
            TriMesh::new(verts, vec![[0, 1, 1]]),
            Err(GeometryError::DegenerateFace { .. })
        ));
    }

    #[test]
    fn tetrahedron_topology() {
        let tet = tetrahedron();
        assert_eq!(tet.undirected_edges().len(), 6);
        assert_eq!(tet.euler_characteristic(), 2);
        assert_eq!(tet.connected_components(), 1);
        assert!(tet.signed_volume() > 0.0);
        assert!((tet.signed_volume() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn two_tets_are_two_components() {
        let tet = tetrahedron();
        let mut verts = tet.vertices.clone();
        verts.extend(tet.vertices.iter().map(|v| *v + Point3::new(10.0, 0.0, 0.0)));
        let mut faces = tet.faces.clone();
        faces.extend(tet.faces.iter().map(|f| [f[0] + 4, f[1] + 4, f[2] + 4]));
        let two = TriMesh::new(verts, faces).unwrap();
        assert_eq!(two.connected_components(), 2);
    }

    #[test]
    fn point_triangle_distance_regions() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(1.0, 0.0, 0.0);
        let c = Point3::new(0.0, 1.0, 0.0);
        // Above the interior: plain height.
        assert!((point_triangle_distance(Point3::new(0.2, 0.2, 0.5), a, b, c) - 0.5).abs() < 1e-15);
        // Closest to corner a.
        let d = point_triangle_distance(Point3::new(-1.0, -1.0, 0.0), a, b, c);
        assert!((d - 2.0f64.sqrt()).abs() < 1e-15);
        // Closest to edge ab.
        let d = point_triangle_distance(Point3::new(0.5, -2.0, 0.0), a, b, c);
        assert!((d - 2.0).abs() < 1e-15);
        // On the surface.
        assert_eq!(point_triangle_distance(Point3::new(0.25, 0.25, 0.0), a, b, c), 0.0);
    }
}
