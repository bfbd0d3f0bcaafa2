use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::geometry::{Aabb, KnnIndex, Point3, TriMesh};
use crate::parallel;

use super::EvalError;

/// Chamfer distance below which a reconstruction counts as successful.
pub const SUCCESS_CD_THRESHOLD: f64 = 0.004;
/// Surface samples per mesh when comparing meshes.
pub const DEFAULT_SAMPLE_COUNT: usize = 100_000;
/// Per-axis voxel count for the volume IoU.
pub const DEFAULT_VOXEL_RESOLUTION: usize = 128;

/// Geometric evaluation summary. `cd_x1000` duplicates the chamfer distance
/// scaled by 1000 for readability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub cd: f64,
    pub cd_x1000: f64,
    pub vmiou: f64,
    pub success: bool,
}

impl MetricReport {
    pub fn new(cd: f64, vmiou: f64) -> MetricReport {
        MetricReport { cd, cd_x1000: cd * 1000.0, vmiou, success: success(cd, SUCCESS_CD_THRESHOLD) }
    }
}

/// Symmetric chamfer distance between two point sets: the mean squared
/// nearest-neighbor distance in each direction, summed.
pub fn chamfer_distance(a: &[Point3], b: &[Point3]) -> Result<f64, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let index_a = KnnIndex::build(a.to_vec()).map_err(|_| EvalError::EmptySet)?;
    let index_b = KnnIndex::build(b.to_vec()).map_err(|_| EvalError::EmptySet)?;
    let sum_ab = parallel::sum_range(a.len(), |i| {
        let d = index_b.nearest(a[i]).distance;
        d * d
    });
    let sum_ba = parallel::sum_range(b.len(), |i| {
        let d = index_a.nearest(b[i]).distance;
        d * d
    });
    Ok(sum_ab / a.len() as f64 + sum_ba / b.len() as f64)
}

/// `cd < threshold`, strictly: a chamfer distance exactly at the threshold
/// does not count as success.
pub fn success(cd: f64, threshold: f64) -> bool {
    cd < threshold
}

/// Uniform area-weighted surface samples, reproducible for a given seed.
pub fn sample_mesh_surface(mesh: &TriMesh, count: usize, seed: u64) -> Result<Vec<Point3>, EvalError> {
    if mesh.faces.is_empty() {
        return Err(EvalError::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in &mesh.faces {
        total += mesh.face_area(*f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(EvalError::EmptyMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let r = rng.random_range(0.0..total);
        let face = cumulative.partition_point(|&c| c <= r).min(mesh.faces.len() - 1);
        let [ia, ib, ic] = mesh.faces[face];
        let a = mesh.vertices[ia as usize];
        let b = mesh.vertices[ib as usize];
        let c = mesh.vertices[ic as usize];
        // sqrt trick for uniform barycentric sampling
        let su = rng.random_range(0.0f64..1.0).sqrt();
        let v = rng.random_range(0.0f64..1.0);
        out.push(a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v));
    }
    Ok(out)
}

/// Chamfer distance between two meshes via seeded area-weighted sampling.
/// Both meshes sample with the same seed, so identical meshes yield exactly
/// zero and the metric stays symmetric.
pub fn chamfer_between_meshes(
    a: &TriMesh,
    b: &TriMesh,
    samples: usize,
    seed: u64,
) -> Result<f64, EvalError> {
    let pa = sample_mesh_surface(a, samples, seed)?;
    let pb = sample_mesh_surface(b, samples, seed)?;
    chamfer_distance(&pa, &pb)
}

/// Voxel IoU of two watertight meshes plus the parity diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeIouReport {
    pub iou: f64,
    /// Rays whose crossing count came out odd (open or self-intersecting
    /// surface along that row).
    pub odd_parity_rays: usize,
    pub total_rays: usize,
}

impl VolumeIouReport {
    /// More than 0.1% of rays saw odd parity: the inputs are probably not
    /// watertight. The IoU value is still reported.
    pub fn watertight_suspect(&self) -> bool {
        self.odd_parity_rays * 1000 > self.total_rays
    }
}

/// Voxelize both meshes into their union bounding box by parity ray casting
/// along +x and report `|A and B| / |A or B|` over occupied voxels.
pub fn volume_iou(a: &TriMesh, b: &TriMesh, resolution: usize) -> Result<VolumeIouReport, EvalError> {
    if resolution < 16 {
        return Err(EvalError::ResolutionTooLow(resolution));
    }
    let bb_a = a.bounding_box().ok_or(EvalError::EmptyMesh)?;
    let bb_b = b.bounding_box().ok_or(EvalError::EmptyMesh)?;
    let bbox = bb_a.union(bb_b);

    let occ_a = voxelize(a, bbox, resolution);
    let occ_b = voxelize(b, bbox, resolution);

    let mut intersection = 0usize;
    let mut union = 0usize;
    for (va, vb) in occ_a.cells.iter().zip(&occ_b.cells) {
        if *va && *vb {
            intersection += 1;
        }
        if *va || *vb {
            union += 1;
        }
    }
    let iou = if union == 0 { 0.0 } else { intersection as f64 / union as f64 };
    Ok(VolumeIouReport {
        iou,
        odd_parity_rays: occ_a.odd_rays + occ_b.odd_rays,
        total_rays: 2 * resolution * resolution,
    })
}

struct Occupancy {
    /// x-fastest, then y, then z; length resolution^3.
    cells: Vec<bool>,
    odd_rays: usize,
}

/// Parity voxelization: one ray along +x per (y, z) voxel-center row.
/// Triangles are rasterized in the (y, z) plane with a top-left fill rule so
/// rays crossing shared edges are counted exactly once.
fn voxelize(mesh: &TriMesh, bbox: Aabb, resolution: usize) -> Occupancy {
    let extent = bbox.extent();
    let dx = extent.x / resolution as f64;
    let dy = extent.y / resolution as f64;
    let dz = extent.z / resolution as f64;

    // Project each face to (y, z), CCW, skipping ray-parallel slivers.
    struct Projected {
        // (y, z) per corner plus the x coordinate for crossing interpolation
        p: [[f64; 3]; 3],
    }
    let mut projected = Vec::with_capacity(mesh.faces.len());
    // Per (iy, iz) row: indices of projected triangles overlapping it.
    let rows = resolution * resolution;
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); rows];
    for f in &mesh.faces {
        let a = mesh.vertices[f[0] as usize];
        let b = mesh.vertices[f[1] as usize];
        let c = mesh.vertices[f[2] as usize];
        let area2 = (b.y - a.y) * (c.z - a.z) - (b.z - a.z) * (c.y - a.y);
        if area2 == 0.0 {
            continue;
        }
        let (b, c) = if area2 < 0.0 { (c, b) } else { (b, c) };
        let tri = Projected { p: [[a.y, a.z, a.x], [b.y, b.z, b.x], [c.y, c.z, c.x]] };

        let (ymin, ymax) = minmax3(tri.p[0][0], tri.p[1][0], tri.p[2][0]);
        let (zmin, zmax) = minmax3(tri.p[0][1], tri.p[1][1], tri.p[2][1]);
        let iy0 = row_range_start(ymin, bbox.min.y, dy);
        let iy1 = row_range_end(ymax, bbox.min.y, dy, resolution);
        let iz0 = row_range_start(zmin, bbox.min.z, dz);
        let iz1 = row_range_end(zmax, bbox.min.z, dz, resolution);
        let ti = projected.len() as u32;
        projected.push(tri);
        for iz in iz0..iz1 {
            for iy in iy0..iy1 {
                bins[iy + iz * resolution].push(ti);
            }
        }
    }

    let row_results: Vec<(Vec<bool>, bool)> = parallel::map_range(rows, |row| {
        let iy = row % resolution;
        let iz = row / resolution;
        let py = bbox.min.y + (iy as f64 + 0.5) * dy;
        let pz = bbox.min.z + (iz as f64 + 0.5) * dz;

        let mut crossings: Vec<f64> = Vec::new();
        for &ti in &bins[row] {
            let t = &projected[ti as usize];
            if let Some(x) = crossing_x(t.p, py, pz) {
                crossings.push(x);
            }
        }
        crossings.sort_by(f64::total_cmp);

        let mut cells = vec![false; resolution];
        let mut passed = 0usize;
        for (ix, cell) in cells.iter_mut().enumerate() {
            let cx = bbox.min.x + (ix as f64 + 0.5) * dx;
            while passed < crossings.len() && crossings[passed] < cx {
                passed += 1;
            }
            *cell = passed % 2 == 1;
        }
        (cells, crossings.len() % 2 == 1)
    });

    let mut cells = vec![false; resolution * rows];
    let mut odd_rays = 0;
    for (row, (row_cells, odd)) in row_results.into_iter().enumerate() {
        let base = row * resolution;
        cells[base..base + resolution].copy_from_slice(&row_cells);
        odd_rays += odd as usize;
    }
    Occupancy { cells, odd_rays }
}

fn minmax3(a: f64, b: f64, c: f64) -> (f64, f64) {
    (a.min(b).min(c), a.max(b).max(c))
}

fn row_range_start(lo: f64, origin: f64, d: f64) -> usize {
    (((lo - origin) / d - 0.5).floor().max(0.0)) as usize
}

fn row_range_end(hi: f64, origin: f64, d: f64, resolution: usize) -> usize {
    ((((hi - origin) / d + 0.5).ceil()) as usize + 1).min(resolution)
}

/// Edge function with the top-left tie rule: for CCW triangles, a boundary
/// point is owned by exactly one of two triangles sharing the edge.
fn edge_accepts(e: f64, du: f64, dv: f64) -> bool {
    if e > 0.0 {
        return true;
    }
    if e < 0.0 {
        return false;
    }
    dv > 0.0 || (dv == 0.0 && du < 0.0)
}

/// X coordinate where the ray through (py, pz) crosses the triangle, if it
/// passes the fill rule. Triangle rows are [u, v, x] with CCW (u, v).
fn crossing_x(p: [[f64; 3]; 3], py: f64, pz: f64) -> Option<f64> {
    let e = |a: &[f64; 3], b: &[f64; 3]| -> f64 {
        (b[0] - a[0]) * (pz - a[1]) - (b[1] - a[1]) * (py - a[0])
    };
    let e_ab = e(&p[0], &p[1]);
    let e_bc = e(&p[1], &p[2]);
    let e_ca = e(&p[2], &p[0]);
    if !edge_accepts(e_ab, p[1][0] - p[0][0], p[1][1] - p[0][1]) {
        return None;
    }
    if !edge_accepts(e_bc, p[2][0] - p[1][0], p[2][1] - p[1][1]) {
        return None;
    }
    if !edge_accepts(e_ca, p[0][0] - p[2][0], p[0][1] - p[2][1]) {
        return None;
    }
    let sum = e_ab + e_bc + e_ca;
    Some((e_bc * p[0][2] + e_ca * p[1][2] + e_ab * p[2][2]) / sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalsynth::{box_bar_mesh, sphere_mesh};

    #[test]
    fn chamfer_of_identical_sets_is_zero() {
        let pts: Vec<Point3> = (0..100)
            .map(|i| Point3::new(i as f64 * 0.01, (i % 7) as f64, 0.0))
            .collect();
        assert_eq!(chamfer_distance(&pts, &pts).unwrap(), 0.0);
    }

    #[test]
    fn chamfer_of_singletons_is_twice_squared_distance() {
        let a = vec![Point3::ZERO];
        let d = 0.37;
        let b = vec![Point3::new(d, 0.0, 0.0)];
        let cd = chamfer_distance(&a, &b).unwrap();
        assert!((cd - 2.0 * d * d).abs() < 1e-15);
    }

    #[test]
    fn chamfer_matches_brute_force_double_loop() {
        use rand::rngs::StdRng;
        use rand::SeedableRng;
        let mut rng = StdRng::seed_from_u64(3);
        let rand_points = |rng: &mut StdRng, n: usize| -> Vec<Point3> {
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect()
        };
        let a = rand_points(&mut rng, 1000);
        let b = rand_points(&mut rng, 900);

        let min_sq = |from: &[Point3], to: &[Point3]| -> f64 {
            from.iter()
                .map(|p| {
                    to.iter()
                        .map(|q| p.distance_squared(*q))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
                / from.len() as f64
        };
        let brute = min_sq(&a, &b) + min_sq(&b, &a);
        let fast = chamfer_distance(&a, &b).unwrap();
        assert!((fast - brute).abs() < 1e-12);
    }

    #[test]
    fn chamfer_is_symmetric() {
        let a: Vec<Point3> = (0..50).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let b: Vec<Point3> = (0..50).map(|i| Point3::new(i as f64, 0.5, 0.0)).collect();
        assert_eq!(
            chamfer_distance(&a, &b).unwrap().to_bits(),
            chamfer_distance(&b, &a).unwrap().to_bits()
        );
    }

    #[test]
    fn empty_sets_are_rejected() {
        assert!(matches!(
            chamfer_distance(&[], &[Point3::ZERO]),
            Err(EvalError::EmptySet)
        ));
    }

    #[test]
    fn success_threshold_is_strict() {
        assert!(success(0.001, SUCCESS_CD_THRESHOLD));
        assert!(!success(0.004, SUCCESS_CD_THRESHOLD));
        assert!(success(0.0, SUCCESS_CD_THRESHOLD));
    }

    #[test]
    fn metric_report_scales_cd_exactly() {
        let r = MetricReport::new(0.0025, 0.8);
        assert_eq!(r.cd_x1000, 1000.0 * r.cd);
        assert!(r.success);
        let r = MetricReport::new(0.004, 0.8);
        assert!(!r.success);
    }

    #[test]
    fn surface_sampling_is_reproducible_and_on_the_sphere() {
        let mesh = sphere_mesh(0.5, 24, 24);
        let a = sample_mesh_surface(&mesh, 5000, 7).unwrap();
        let b = sample_mesh_surface(&mesh, 5000, 7).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!((p.norm() - 0.5).abs() < 0.02);
        }
        let c = sample_mesh_surface(&mesh, 5000, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn identical_meshes_have_unit_iou() {
        let mesh = sphere_mesh(0.4, 16, 16);
        let r = volume_iou(&mesh, &mesh, 64).unwrap();
        assert_eq!(r.iou, 1.0);
        assert!(!r.watertight_suspect());
    }

    #[test]
    fn offset_unit_cubes_overlap_by_one_third() {
        let cube = box_bar_mesh(Point3::new(1.0, 1.0, 1.0), (1, 1, 1));
        let mut shifted = cube.clone();
        for v in &mut shifted.vertices {
            v.x += 0.5;
        }
        let r = volume_iou(&cube, &shifted, DEFAULT_VOXEL_RESOLUTION).unwrap();
        assert!((r.iou - 1.0 / 3.0).abs() < 0.01, "iou = {}", r.iou);
        assert!(!r.watertight_suspect());
    }

    #[test]
    fn disjoint_meshes_have_zero_iou() {
        let a = sphere_mesh(0.3, 12, 12);
        let mut b = a.clone();
        for v in &mut b.vertices {
            v.x += 10.0;
        }
        let r = volume_iou(&a, &b, 32).unwrap();
        assert_eq!(r.iou, 0.0);
    }

    #[test]
    fn iou_is_symmetric_and_bounded() {
        let a = sphere_mesh(0.4, 12, 12);
        let mut b = sphere_mesh(0.35, 10, 14);
        for v in &mut b.vertices {
            v.x += 0.2;
        }
        let r1 = volume_iou(&a, &b, 64).unwrap();
        let r2 = volume_iou(&b, &a, 64).unwrap();
        assert_eq!(r1.iou, r2.iou);
        assert!((0.0..=1.0).contains(&r1.iou));
    }

    #[test]
    fn open_meshes_trip_the_parity_warning() {
        // A single quad is wide open: every ray through it crosses once.
        let quad = TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 1.0, 1.0),
                Point3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let closed = box_bar_mesh(Point3::new(1.0, 1.0, 1.0), (1, 1, 1));
        let r = volume_iou(&quad, &closed, 32).unwrap();
        assert!(r.watertight_suspect());
    }

    #[test]
    fn low_resolution_is_rejected() {
        let mesh = sphere_mesh(0.4, 8, 8);
        assert!(matches!(
            volume_iou(&mesh, &mesh, 8),
            Err(EvalError::ResolutionTooLow(8))
        ));
    }
}
