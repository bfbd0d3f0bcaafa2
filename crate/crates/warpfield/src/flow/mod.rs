//! Forward and backward 3D scene flow as a normalized KNN-weighted blend of
//! anchored rigid transformations, plus mesh / point / ray-sample warping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{AnchoredRigid, GeometryError, KnnIndex, Point3, TriMesh};
use crate::parallel;

/// Neighbor count used by the flow blend.
pub const DEFAULT_K: usize = 20;
/// Surface gate: flow is considered defined only within this distance of the
/// anchor surface.
pub const DEFAULT_SURFACE_GATE: f64 = 7e-5;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("anchor/transform count mismatch: {anchors} anchors, {transforms} transforms")]
    MismatchedLengths { anchors: usize, transforms: usize },
    #[error("transform {index} is not anchored at its vertex")]
    OriginMismatch { index: usize },
    #[error("neighbor count k must be >= 1")]
    InvalidK,
    #[error("surface gate must be positive and finite, got {0}")]
    InvalidGate(f64),
    #[error("ray sample set needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("consecutive ray samples {0} and {1} coincide")]
    DuplicateSamples(usize, usize),
    #[error("all transformed ray samples coincide; no direction can be derived")]
    DegenerateDirection,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which space a query point lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// The original scene (domain of the forward flow).
    Original,
    /// The transformed scene (domain of the backward flow).
    Transformed,
}

/// Flow direction for point and ray warping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowDirection {
    Forward,
    #[default]
    Backward,
}

impl FlowDirection {
    /// The space the direction's inputs live in.
    pub fn input_side(self) -> Side {
        match self {
            FlowDirection::Forward => Side::Original,
            FlowDirection::Backward => Side::Transformed,
        }
    }
}

/// A dense field of anchored rigid transforms over the original surface.
///
/// Anchors are the full-resolution mesh vertices; the forward index searches
/// them directly while the backward index searches their transformed
/// positions `v + t`. Immutable after construction, safe to share across
/// threads.
#[derive(Debug, Clone)]
pub struct TransformField {
    anchors: Vec<Point3>,
    transforms: Vec<AnchoredRigid>,
    forward_index: KnnIndex,
    backward_index: KnnIndex,
    k: usize,
    surface_gate: f64,
}

impl TransformField {
    pub fn new(
        anchors: Vec<Point3>,
        transforms: Vec<AnchoredRigid>,
        k: usize,
        surface_gate: f64,
    ) -> Result<TransformField, FlowError> {
        if anchors.len() != transforms.len() {
            return Err(FlowError::MismatchedLengths {
                anchors: anchors.len(),
                transforms: transforms.len(),
            });
        }
        if let Some(i) = transforms
            .iter()
            .zip(&anchors)
            .position(|(t, a)| t.origin != *a)
        {
            return Err(FlowError::OriginMismatch { index: i });
        }
        if k == 0 {
            return Err(FlowError::InvalidK);
        }
        if !(surface_gate > 0.0) || !surface_gate.is_finite() {
            return Err(FlowError::InvalidGate(surface_gate));
        }
        let forward_index = KnnIndex::build(anchors.clone())?;
        let transformed: Vec<Point3> = transforms.iter().map(|t| t.transformed_origin()).collect();
        let backward_index = KnnIndex::build(transformed)?;
        Ok(TransformField { anchors, transforms, forward_index, backward_index, k, surface_gate })
    }

    /// Identity field over the given anchors.
    pub fn identity(anchors: Vec<Point3>, k: usize, surface_gate: f64) -> Result<Self, FlowError> {
        let transforms = anchors.iter().map(|&a| AnchoredRigid::identity_at(a)).collect();
        TransformField::new(anchors, transforms, k, surface_gate)
    }

    pub fn anchors(&self) -> &[Point3] {
        &self.anchors
    }

    pub fn transforms(&self) -> &[AnchoredRigid] {
        &self.transforms
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn surface_gate(&self) -> f64 {
        self.surface_gate
    }

    /// Map a point from the original space to the transformed space:
    /// the blend of the K nearest anchors' transforms.
    ///
    /// Evaluated as `p + sum(w_i * (xi_i(p) - p))`, which equals the weighted
    /// sum of transformed points (weights sum to 1) but keeps identity
    /// transforms exact to the bit.
    pub fn forward(&self, p: Point3) -> Point3 {
        let neighbors = self.forward_index.knn(p, self.k);
        let distances: Vec<f64> = neighbors.iter().map(|n| n.distance).collect();
        let weights = blend_weights(&distances);
        let mut displacement = Point3::ZERO;
        for (n, w) in neighbors.iter().zip(weights) {
            displacement += (self.transforms[n.index].apply(p) - p) * w;
        }
        p + displacement
    }

    /// Map a point from the transformed space back to the original space.
    /// Neighbors are searched among the transformed anchors `v + t` and the
    /// inverse transforms are blended with the same weight rule.
    pub fn backward(&self, p: Point3) -> Point3 {
        let neighbors = self.backward_index.knn(p, self.k);
        let distances: Vec<f64> = neighbors.iter().map(|n| n.distance).collect();
        let weights = blend_weights(&distances);
        let mut displacement = Point3::ZERO;
        for (n, w) in neighbors.iter().zip(weights) {
            displacement += (self.transforms[n.index].apply_inverse(p) - p) * w;
        }
        p + displacement
    }

    /// Whether `p` lies strictly within the surface gate of the anchor set
    /// (original side) or the transformed anchor set (transformed side).
    pub fn is_near_surface(&self, p: Point3, side: Side) -> bool {
        let index = match side {
            Side::Original => &self.forward_index,
            Side::Transformed => &self.backward_index,
        };
        index.distance_to_nearest(p) < self.surface_gate
    }

    /// Forward-warp every vertex, preserving the face list.
    pub fn warp_mesh(&self, mesh: &TriMesh) -> TriMesh {
        let vertices = parallel::map_indexed(&mesh.vertices, |_, v| self.forward(*v));
        TriMesh { vertices, faces: mesh.faces.clone() }
    }

    /// Map a single point along the given direction.
    pub fn apply(&self, p: Point3, direction: FlowDirection) -> Point3 {
        match direction {
            FlowDirection::Forward => self.forward(p),
            FlowDirection::Backward => self.backward(p),
        }
    }

    /// Backward-warp samples along a ray and derive per-sample directions
    /// from the transformed differences between neighboring samples.
    pub fn warp_ray_samples(&self, ray: &RaySampleSet) -> Result<Vec<WarpedSample>, FlowError> {
        self.warp_ray_samples_directed(ray, FlowDirection::Backward)
    }

    /// Ray warping along either direction; the near-surface gate is checked
    /// on the input side.
    pub fn warp_ray_samples_directed(
        &self,
        ray: &RaySampleSet,
        direction: FlowDirection,
    ) -> Result<Vec<WarpedSample>, FlowError> {
        let samples = ray.samples();
        let warped: Vec<Point3> = parallel::map_indexed(samples, |_, p| self.apply(*p, direction));
        let n = warped.len();

        // Central differences inside, one-sided at the endpoints.
        let mut directions: Vec<Option<Point3>> = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = if i == 0 {
                (warped[0], warped[1])
            } else if i == n - 1 {
                (warped[n - 2], warped[n - 1])
            } else {
                (warped[i - 1], warped[i + 1])
            };
            directions.push((b - a).normalized());
        }

        // Samples whose neighborhood collapsed copy the direction of the
        // nearest sample (by ray order) that still has one.
        let valid: Vec<usize> = (0..n).filter(|&i| directions[i].is_some()).collect();
        if valid.is_empty() {
            return Err(FlowError::DegenerateDirection);
        }
        let filled: Vec<Point3> = (0..n)
            .map(|i| match directions[i] {
                Some(d) => d,
                None => {
                    let nearest = valid
                        .iter()
                        .copied()
                        .min_by_key(|&j| (i.abs_diff(j), j))
                        .expect("non-empty");
                    directions[nearest].expect("valid entry")
                }
            })
            .collect();

        let side = direction.input_side();
        Ok(samples
            .iter()
            .zip(warped)
            .zip(filled)
            .map(|((&input, point), dir)| WarpedSample {
                point,
                direction: dir,
                near_surface: self.is_near_surface(input, side),
            })
            .collect())
    }
}

/// Normalized blend weights for neighbors at the given ascending distances.
///
/// Raw weight per neighbor is `1 - d / d_max`, so the farthest neighbor gets
/// exactly zero. When every distance is equal the raw weights all vanish and
/// the blend falls back to uniform (this also defines the k = 1 case as
/// weight 1).
pub fn blend_weights(distances: &[f64]) -> Vec<f64> {
    assert!(!distances.is_empty(), "blend_weights needs at least one neighbor");
    let d_max = *distances.last().expect("non-empty");
    let mut raw: Vec<f64> = if d_max > 0.0 {
        distances.iter().map(|d| 1.0 - d / d_max).collect()
    } else {
        vec![0.0; distances.len()]
    };
    let sum: f64 = raw.iter().sum();
    if sum < 1e-12 {
        let uniform = 1.0 / distances.len() as f64;
        return vec![uniform; distances.len()];
    }
    for w in &mut raw {
        *w /= sum;
    }
    raw
}

/// Ordered samples along a single ray in the transformed space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point3>", into = "Vec<Point3>")]
pub struct RaySampleSet {
    samples: Vec<Point3>,
}

impl RaySampleSet {
    pub fn new(samples: Vec<Point3>) -> Result<RaySampleSet, FlowError> {
        if samples.len() < 2 {
            return Err(FlowError::TooFewSamples(samples.len()));
        }
        if samples.iter().any(|p| !p.is_finite()) {
            return Err(FlowError::Geometry(GeometryError::NonFinite));
        }
        if let Some(i) = samples.windows(2).position(|w| w[0] == w[1]) {
            return Err(FlowError::DuplicateSamples(i, i + 1));
        }
        Ok(RaySampleSet { samples })
    }

    pub fn samples(&self) -> &[Point3] {
        &self.samples
    }
}

impl TryFrom<Vec<Point3>> for RaySampleSet {
    type Error = FlowError;
    fn try_from(v: Vec<Point3>) -> Result<Self, FlowError> {
        RaySampleSet::new(v)
    }
}

impl From<RaySampleSet> for Vec<Point3> {
    fn from(r: RaySampleSet) -> Vec<Point3> {
        r.samples
    }
}

/// One backward-warped ray sample. Samples outside the surface gate carry
/// `near_surface = false`; the caller treats them as empty space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpedSample {
    #[serde(rename = "p")]
    pub point: Point3,
    #[serde(rename = "dir")]
    pub direction: Point3,
    pub near_surface: bool,
}
