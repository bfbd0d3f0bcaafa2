use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::correspond::CorrespondencePair;
use crate::flow::TransformField;
use crate::geometry::{AnchoredRigid, Mat3, Point3, TriMesh};
use crate::optim::{AnchorEntry, AnchorSet};

use super::EvalError;


/// UV sphere centered at the origin. `rings` latitude divisions (>= 2),
/// `segments` longitude divisions (>= 3); watertight.
pub fn sphere_mesh(radius: f64, rings: usize, segments: usize) -> TriMesh {
    assert!(rings >= 2 && segments >= 3);
    let mut vertices = vec![Point3::new(0.0, 0.0, radius)];
    for i in 1..rings {
        let phi = std::f64::consts::PI * i as f64 / rings as f64;
        for j in 0..segments {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / segments as f64;
            vertices.push(Point3::new(
                radius * phi.sin() * theta.cos(),
                radius * phi.sin() * theta.sin(),
                radius * phi.cos(),
            ));
        }
    }
    let south = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, -radius));

    let ring = |i: usize, j: usize| -> u32 { (1 + (i - 1) * segments + j % segments) as u32 };
    let mut faces = Vec::new();
    for j in 0..segments {
        faces.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..rings - 1 {
        for j in 0..segments {
            let a = ring(i, j);
            let b = ring(i, j + 1);
            let c = ring(i + 1, j + 1);
            let d = ring(i + 1, j);
            faces.push([a, d, c]);
            faces.push([a, c, b]);
        }
    }
    for j in 0..segments {
        faces.push([south, ring(rings - 1, j + 1), ring(rings - 1, j)]);
    }
    TriMesh::new(vertices, faces).expect("sphere construction")
}

/// Closed cylinder: axis +z from 0 to `height`, cross-section centered on the
/// axis. `rings` height levels (>= 2), `segments` around (>= 3).
pub fn cylinder_mesh(radius: f64, height: f64, rings: usize, segments: usize) -> TriMesh {
    assert!(rings >= 2 && segments >= 3);
    let mut vertices = Vec::with_capacity(rings * segments + 2);
    for i in 0..rings {
        let z = height * i as f64 / (rings - 1) as f64;
        for j in 0..segments {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / segments as f64;
            vertices.push(Point3::new(radius * theta.cos(), radius * theta.sin(), z));
        }
    }
    let bottom = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, 0.0));
    let top = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, height));

    let at = |i: usize, j: usize| -> u32 { (i * segments + j % segments) as u32 };
    let mut faces = Vec::new();
    for i in 0..rings - 1 {
        for j in 0..segments {
            let a = at(i, j);
            let b = at(i, j + 1);
            let c = at(i + 1, j + 1);
            let d = at(i + 1, j);
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for j in 0..segments {
        faces.push([bottom, at(0, j + 1), at(0, j)]);
        faces.push([top, at(rings - 1, j), at(rings - 1, j + 1)]);
    }
    TriMesh::new(vertices, faces).expect("cylinder construction")
}

/// Subdivided axis-aligned cuboid: x, y centered, z from 0 to `extent.z`,
/// welded along edges and watertight.
pub fn box_bar_mesh(extent: Point3, divisions: (usize, usize, usize)) -> TriMesh {
    let (nx, ny, nz) = divisions;
    assert!(nx >= 1 && ny >= 1 && nz >= 1);
    let step = Point3::new(extent.x / nx as f64, extent.y / ny as f64, extent.z / nz as f64);
    let origin = Point3::new(-extent.x / 2.0, -extent.y / 2.0, 0.0);

    let mut vertices: Vec<Point3> = Vec::new();
    let mut lattice: HashMap<(usize, usize, usize), u32> = HashMap::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let counts = [nx, ny, nz];

    // (u, v, normal-axis) right-handed per axis.
    let axes: [(usize, usize, usize); 3] = [(1, 2, 0), (2, 0, 1), (0, 1, 2)];
    for &(ua, va, na) in &axes {
        for side in [0usize, 1] {
            let n_fixed = if side == 0 { 0 } else { counts[na] };
            for iv in 0..counts[va] {
                for iu in 0..counts[ua] {
                    let corner = |du: usize, dv: usize| -> (usize, usize, usize) {
                        let mut c = [0usize; 3];
                        c[ua] = iu + du;
                        c[va] = iv + dv;
                        c[na] = n_fixed;
                        (c[0], c[1], c[2])
                    };
                    let mut id = |key: (usize, usize, usize)| -> u32 {
                        *lattice.entry(key).or_insert_with(|| {
                            let p = origin
                                + Point3::new(
                                    key.0 as f64 * step.x,
                                    key.1 as f64 * step.y,
                                    key.2 as f64 * step.z,
                                );
                            vertices.push(p);
                            (vertices.len() - 1) as u32
                        })
                    };
                    let p00 = id(corner(0, 0));
                    let p10 = id(corner(1, 0));
                    let p11 = id(corner(1, 1));
                    let p01 = id(corner(0, 1));
                    if side == 1 {
                        faces.push([p00, p10, p11]);
                        faces.push([p00, p11, p01]);
                    } else {
                        faces.push([p00, p01, p11]);
                        faces.push([p00, p11, p10]);
                    }
                }
            }
        }
    }
    TriMesh::new(vertices, faces).expect("box construction")
}

/// Synthetic deformation families with exact per-vertex ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Cylinder bent along a circular arc (magnitude = total bend angle).
    Bend,
    /// Cylinder twisted about its axis (magnitude = degrees per unit height).
    Twist,
    /// Bar with a smooth hinge at mid-height (magnitude = hinge angle).
    Articulate,
}

impl SyntheticKind {
    pub fn parse(s: &str) -> Option<SyntheticKind> {
        match s {
            "bend" => Some(SyntheticKind::Bend),
            "twist" => Some(SyntheticKind::Twist),
            "articulate" => Some(SyntheticKind::Articulate),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SyntheticKind::Bend => "bend",
            SyntheticKind::Twist => "twist",
            SyntheticKind::Articulate => "articulate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    /// Bend angle, twist rate (deg per unit height) or hinge angle, degrees.
    pub magnitude_deg: f64,
    /// Clean correspondences to emit.
    pub anchor_count: usize,
    /// Fraction of the contaminated copy replaced by uniform-random outliers.
    pub outlier_fraction: f64,
    /// Mesh density knob: vertex count scales with its square.
    pub resolution: usize,
    /// Flow neighbor count stored on the ground-truth field.
    pub k: usize,
    /// Surface gate stored on the ground-truth field.
    pub surface_gate: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            magnitude_deg: 45.0,
            anchor_count: 500,
            outlier_fraction: 0.3,
            resolution: 100,
            k: crate::flow::DEFAULT_K,
            surface_gate: crate::flow::DEFAULT_SURFACE_GATE,
        }
    }
}

/// A synthetic scene: rest mesh, exact ground-truth field, its warped mesh,
/// clean vertex anchors, and a contaminated correspondence set with labels.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub rest_mesh: TriMesh,
    pub field: TransformField,
    pub transformed_mesh: TriMesh,
    pub clean_anchors: AnchorSet,
    pub contaminated: Vec<CorrespondencePair>,
    /// True where `contaminated[i]` is an injected outlier.
    pub outlier_labels: Vec<bool>,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn vertex_transform(kind: SyntheticKind, magnitude_rad: f64, v: Point3) -> AnchoredRigid {
    let (rotation, translation) = match kind {
        SyntheticKind::Bend => {
            // Bend the +z axis onto a circular arc of curvature kappa,
            // tilting toward +x; each height's cross-section stays rigid.
            let kappa = magnitude_rad; // height is 1
            if kappa.abs() < 1e-12 {
                (Mat3::IDENTITY, Point3::ZERO)
            } else {
                let phi = kappa * v.z;
                let rot = Mat3::rot_y(phi);
                let arc = Point3::new((1.0 - phi.cos()) / kappa, 0.0, phi.sin() / kappa);
                let target = rot.mul_vec(v - Point3::new(0.0, 0.0, v.z)) + arc;
                (rot, target - v)
            }
        }
        SyntheticKind::Twist => {
            let theta = magnitude_rad * v.z;
            let rot = Mat3::rot_z(theta);
            (rot, rot.mul_vec(v) - v)
        }
        SyntheticKind::Articulate => {
            let blend = smoothstep((v.z - 0.45) / 0.1);
            let phi = magnitude_rad * blend;
            let rot = Mat3::rot_y(phi);
            let pivot = Point3::new(0.0, 0.0, 0.5);
            let target = rot.mul_vec(v - pivot) + pivot;
            (rot, target - v)
        }
    };
    AnchoredRigid { rotation, origin: v, translation }
}

/// Build a synthetic scene. Deterministic for a given (kind, params, seed).
pub fn make_synthetic(
    kind: SyntheticKind,
    params: &SyntheticParams,
    seed: u64,
) -> Result<SyntheticScene, EvalError> {
    let limit = match kind {
        SyntheticKind::Bend => 90.0,
        SyntheticKind::Twist => 180.0,
        SyntheticKind::Articulate => 90.0,
    };
    if !(0.0..=limit).contains(&params.magnitude_deg) {
        return Err(EvalError::InvalidParams(format!(
            "{} magnitude must be within [0, {limit}] degrees, got {}",
            kind.name(),
            params.magnitude_deg
        )));
    }
    if params.resolution < 8 {
        return Err(EvalError::InvalidParams(format!(
            "resolution must be >= 8, got {}",
            params.resolution
        )));
    }
    if !(0.0..1.0).contains(&params.outlier_fraction) {
        return Err(EvalError::InvalidParams(format!(
            "outlier fraction must be in [0, 1), got {}",
            params.outlier_fraction
        )));
    }

    let rest_mesh = match kind {
        SyntheticKind::Bend | SyntheticKind::Twist => {
            cylinder_mesh(0.15, 1.0, params.resolution, params.resolution)
        }
        SyntheticKind::Articulate => {
            let side = (params.resolution / 5).max(4);
            box_bar_mesh(Point3::new(0.2, 0.2, 1.0), (side, side, params.resolution))
        }
    };
    if params.anchor_count == 0 || params.anchor_count > rest_mesh.vertices.len() {
        return Err(EvalError::InvalidParams(format!(
            "anchor count must be in 1..={}, got {}",
            rest_mesh.vertices.len(),
            params.anchor_count
        )));
    }

    let magnitude_rad = params.magnitude_deg.to_radians();
    let transforms: Vec<AnchoredRigid> = rest_mesh
        .vertices
        .iter()
        .map(|&v| vertex_transform(kind, magnitude_rad, v))
        .collect();
    let field = TransformField::new(
        rest_mesh.vertices.clone(),
        transforms,
        params.k.min(rest_mesh.vertices.len()),
        params.surface_gate,
    )?;
    let transformed_mesh = field.warp_mesh(&rest_mesh);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Correspondences lift from contiguous image patches, so sample anchors
    // as tight surface patches around random seed vertices rather than as
    // isolated points: the 3D filter depends on that locality. The patch
    // radius is half the filter's default cluster radius (0.02 of the
    // bounding-box diagonal), so one patch always falls into one cluster.
    let patch_radius = 0.01 * rest_mesh.bounding_box().expect("non-empty mesh").diagonal();
    let vertex_index =
        crate::geometry::KnnIndex::build(rest_mesh.vertices.clone()).expect("non-empty mesh");
    let mut selected_set = std::collections::BTreeSet::new();
    let probe = 64.min(rest_mesh.vertices.len());
    while selected_set.len() < params.anchor_count {
        let center = rng.random_range(0..rest_mesh.vertices.len());
        for n in vertex_index.knn(rest_mesh.vertices[center], probe) {
            if n.distance > patch_radius {
                break;
            }
            selected_set.insert(n.index as u32);
            if selected_set.len() == params.anchor_count {
                break;
            }
        }
    }
    let selected: Vec<u32> = selected_set.into_iter().collect();

    let clean_entries: Vec<AnchorEntry> = selected
        .iter()
        .map(|&vid| {
            let va = rest_mesh.vertices[vid as usize];
            AnchorEntry { vertex: vid, original: va, transformed: field.forward(va) }
        })
        .collect();
    let clean_anchors = AnchorSet { entries: clean_entries };

    // Contaminated copy: round(fraction * n) entries become uniform-random
    // points in the transformed bounding box.
    let n = clean_anchors.len();
    let outlier_count = (params.outlier_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut outlier_labels = vec![false; n];
    for &i in order.iter().take(outlier_count) {
        outlier_labels[i] = true;
    }
    let bbox = transformed_mesh.bounding_box().expect("non-empty mesh");
    let contaminated: Vec<CorrespondencePair> = clean_anchors
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let p_b = if outlier_labels[i] {
                Point3::new(
                    rng.random_range(bbox.min.x..=bbox.max.x),
                    rng.random_range(bbox.min.y..=bbox.max.y),
                    rng.random_range(bbox.min.z..=bbox.max.z),
                )
            } else {
                e.transformed
            };
            CorrespondencePair { original: e.original, transformed: p_b, view: 0, density: 0 }
        })
        .collect();

    Ok(SyntheticScene {
        rest_mesh,
        field,
        transformed_mesh,
        clean_anchors,
        contaminated,
        outlier_labels,
    })
}
