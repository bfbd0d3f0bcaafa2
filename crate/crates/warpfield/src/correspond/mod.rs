//! From raw per-view 2D match candidates and depth maps to a filtered
//! [`AnchorSet`]: confidence thresholding, multi-view deduplication by
//! neighbor density, depth unprojection, cluster-based 3D outlier rejection,
//! and snapping to mesh vertices.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{KnnIndex, Mat3, Point3, TriMesh};
use crate::optim::{AnchorEntry, AnchorSet};

/// Default confidence cutoff for raw matches.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;
/// Default Chebyshev radius for the neighbor-density score (the 8-neighborhood).
pub const DEFAULT_FUSE_RADIUS: i64 = 1;
/// Default camera-roll augmentation angles, degrees.
pub const DEFAULT_YAWS_DEG: [f64; 7] = [0.0, -30.0, 30.0, -60.0, 60.0, -90.0, 90.0];

#[derive(Debug, Error)]
pub enum CorrespondError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("camera pose rotation is {error:.3e} away from SO(3) (limit 1e-6)")]
    InvalidPose { error: f64 },
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("pixel ({u:.1}, {v:.1}) outside {width}x{height} image")]
    PixelOutOfBounds { u: f64, v: f64, width: u32, height: u32 },
    #[error("match references view {view}, but only {count} views exist")]
    ViewOutOfRange { view: u32, count: usize },
    #[error("depth raster is {got_w}x{got_h} but its camera is {want_w}x{want_h}")]
    DepthSizeMismatch { want_w: u32, want_h: u32, got_w: usize, got_h: usize },
    #[error("invalid filter parameters: {0}")]
    InvalidFilterParams(String),
    #[error("invalid match data: {0}")]
    InvalidMatch(String),
    #[error("hemisphere sampling needs count >= 1 and radius > 0")]
    InvalidHemisphere,
}

/// Pinhole camera: intrinsics plus a world-from-camera rigid pose
/// (camera looks along its +z axis, x right, y down).
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: Mat3,
    pub translation: Point3,
}

/// Intrinsics shared by a batch of generated cameras.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn new(
        intrinsics: Intrinsics,
        rotation: Mat3,
        translation: Point3,
    ) -> Result<Camera, CorrespondError> {
        let Intrinsics { fx, fy, cx, cy, width, height } = intrinsics;
        if !(fx > 0.0) || !(fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(CorrespondError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(CorrespondError::InvalidIntrinsics("non-finite principal point".into()));
        }
        if width == 0 || height == 0 {
            return Err(CorrespondError::InvalidIntrinsics("zero image dimensions".into()));
        }
        let err = rotation.orthonormality_error().max((rotation.det() - 1.0).abs());
        if err > 1e-6 {
            return Err(CorrespondError::InvalidPose { error: err });
        }
        Ok(Camera { fx, fy, cx, cy, width, height, rotation, translation })
    }

    /// Parse from a row-major 4x4 world-from-camera matrix.
    pub fn from_matrix(intrinsics: Intrinsics, t_wc: &[f64; 16]) -> Result<Camera, CorrespondError> {
        let rotation = Mat3::from_rows(
            [t_wc[0], t_wc[1], t_wc[2]],
            [t_wc[4], t_wc[5], t_wc[6]],
            [t_wc[8], t_wc[9], t_wc[10]],
        );
        let translation = Point3::new(t_wc[3], t_wc[7], t_wc[11]);
        let bottom_ok = t_wc[12] == 0.0 && t_wc[13] == 0.0 && t_wc[14] == 0.0 && t_wc[15] == 1.0;
        if !bottom_ok {
            return Err(CorrespondError::InvalidIntrinsics(
                "pose matrix bottom row must be [0, 0, 0, 1]".into(),
            ));
        }
        Camera::new(intrinsics, rotation, translation)
    }

    pub fn to_matrix(&self) -> [f64; 16] {
        let r = &self.rotation.m;
        let t = self.translation;
        [
            r[0][0], r[0][1], r[0][2], t.x, r[1][0], r[1][1], r[1][2], t.y, r[2][0], r[2][1],
            r[2][2], t.z, 0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
        }
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Lift a pixel at `depth` (along the camera z axis) to a world point.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Result<Point3, CorrespondError> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(CorrespondError::InvalidDepth(depth));
        }
        if !self.contains_pixel(u, v) {
            return Err(CorrespondError::PixelOutOfBounds {
                u,
                v,
                width: self.width,
                height: self.height,
            });
        }
        let cam = Point3::new(depth * (u - self.cx) / self.fx, depth * (v - self.cy) / self.fy, depth);
        Ok(self.rotation.mul_vec(cam) + self.translation)
    }

    /// Project a world point to (u, v, depth); `None` behind the camera.
    pub fn project(&self, p: Point3) -> Option<(f64, f64, f64)> {
        let cam = self.rotation.transpose_mul_vec(p - self.translation);
        if cam.z <= 0.0 {
            return None;
        }
        Some((
            self.fx * cam.x / cam.z + self.cx,
            self.fy * cam.y / cam.z + self.cy,
            cam.z,
        ))
    }
}

/// Row-major depth raster; row 0 is the top image row. Zero and non-finite
/// values are background.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<DepthMap, CorrespondError> {
        if data.len() != width * height {
            return Err(CorrespondError::InvalidIntrinsics(format!(
                "depth raster length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(DepthMap { width, height, data })
    }

    /// Depth at the nearest pixel, if it is a valid foreground measurement.
    pub fn sample(&self, u: f64, v: f64) -> Option<f64> {
        let x = u.round();
        let y = v.round();
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        let d = self.data[x as usize + y as usize * self.width] as f64;
        (d > 0.0 && d.is_finite()).then_some(d)
    }
}

/// One raw 2D match candidate between the transformed image and one original
/// render.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMatch {
    pub view: u32,
    pub ub: f64,
    pub vb: f64,
    pub ua: f64,
    pub va: f64,
    pub conf: f64,
}

impl RawMatch {
    pub fn validate(&self) -> Result<(), CorrespondError> {
        if !self.conf.is_finite() {
            return Err(CorrespondError::InvalidMatch(format!(
                "non-finite confidence {}",
                self.conf
            )));
        }
        for (name, v) in [("ub", self.ub), ("vb", self.vb), ("ua", self.ua), ("va", self.va)] {
            if !v.is_finite() {
                return Err(CorrespondError::InvalidMatch(format!("non-finite pixel {name}")));
            }
        }
        Ok(())
    }

    fn cell(&self) -> (i64, i64) {
        (self.ub.round() as i64, self.vb.round() as i64)
    }
}

/// A match that survived fusion, with the density score that won it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredMatch {
    pub raw: RawMatch,
    pub density: u32,
}

/// A lifted 3D correspondence between the original and transformed scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrespondencePair {
    #[serde(rename = "pa")]
    pub original: Point3,
    #[serde(rename = "pb")]
    pub transformed: Point3,
    pub view: u32,
    pub density: u32,
}

/// Keep matches at or above the confidence threshold, preserving order.
pub fn confidence_filter(matches: &[RawMatch], threshold: f64) -> Vec<RawMatch> {
    matches.iter().filter(|m| m.conf >= threshold).copied().collect()
}

/// Number of *other* matches to the same view whose transformed-image pixel
/// cell lies within Chebyshev distance `radius` of `pixel`.
pub fn neighbor_density(matches: &[RawMatch], view: u32, pixel: (i64, i64), radius: i64) -> usize {
    assert!(radius >= 1, "density radius must be >= 1");
    let mut count = 0usize;
    let mut at_query = 0usize;
    for m in matches {
        if m.view != view {
            continue;
        }
        let c = m.cell();
        if (c.0 - pixel.0).abs() <= radius && (c.1 - pixel.1).abs() <= radius {
            count += 1;
            if c == pixel {
                at_query += 1;
            }
        }
    }
    // The query match itself sits at the query pixel; do not count it.
    count - usize::from(at_query > 0)
}

/// How multi-view duplicates are arbitrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionScore {
    /// Matched neighbors within a Chebyshev radius (the 8-neighborhood count).
    #[default]
    NeighborCount,
    /// Size in cells of the 8-connected component of matched pixels.
    ComponentSize,
}

/// Resolve transformed-image pixels matched in several views: keep the match
/// with the largest density score, breaking ties by higher confidence, then
/// lower view id. Output is sorted by pixel cell (then view), so it does not
/// depend on input order.
pub fn fuse_multiview(matches: &[RawMatch], radius: i64, score: FusionScore) -> Vec<ScoredMatch> {
    // Per-view occupancy of pixel cells.
    let mut cell_counts: HashMap<(u32, i64, i64), u32> = HashMap::new();
    for m in matches {
        let c = m.cell();
        *cell_counts.entry((m.view, c.0, c.1)).or_insert(0) += 1;
    }

    let component_sizes = match score {
        FusionScore::ComponentSize => Some(component_sizes(matches)),
        FusionScore::NeighborCount => None,
    };

    let density_of = |m: &RawMatch| -> u32 {
        let c = m.cell();
        match score {
            FusionScore::NeighborCount => {
                let mut total = 0u32;
                for dx in -radius..=radius {
                    for dy in -radius..=radius {
                        if let Some(n) = cell_counts.get(&(m.view, c.0 + dx, c.1 + dy)) {
                            total += n;
                        }
                    }
                }
                total - 1 // exclude the match itself
            }
            FusionScore::ComponentSize => component_sizes
                .as_ref()
                .expect("component sizes computed")
                .get(&(m.view, c.0, c.1))
                .copied()
                .unwrap_or(1),
        }
    };

    let mut best: HashMap<(i64, i64), (u32, RawMatch)> = HashMap::new();
    for m in matches {
        let key = m.cell();
        let density = density_of(m);
        match best.get_mut(&key) {
            None => {
                best.insert(key, (density, *m));
            }
            Some((cur_density, cur)) => {
                let replace = density
                    .cmp(cur_density)
                    .then_with(|| m.conf.total_cmp(&cur.conf))
                    .then_with(|| cur.view.cmp(&m.view))
                    .then_with(|| cur.ua.total_cmp(&m.ua))
                    .then_with(|| cur.va.total_cmp(&m.va))
                    .is_gt();
                if replace {
                    *cur_density = density;
                    *cur = *m;
                }
            }
        }
    }

    let mut out: Vec<((i64, i64), (u32, RawMatch))> = best.into_iter().collect();
    out.sort_by_key(|&((x, y), (_, ref m))| (y, x, m.view));
    out.into_iter().map(|(_, (density, raw))| ScoredMatch { raw, density }).collect()
}

/// 8-connected component size (in cells) of each view's matched-pixel set.
fn component_sizes(matches: &[RawMatch]) -> HashMap<(u32, i64, i64), u32> {
    let mut cells: Vec<(u32, i64, i64)> = matches
        .iter()
        .map(|m| {
            let c = m.cell();
            (m.view, c.0, c.1)
        })
        .collect();
    cells.sort_unstable();
    cells.dedup();
    let index: HashMap<(u32, i64, i64), usize> =
        cells.iter().enumerate().map(|(i, c)| (*c, i)).collect();

    let mut parent: Vec<usize> = (0..cells.len()).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for (i, &(view, x, y)) in cells.iter().enumerate() {
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                if let Some(&j) = index.get(&(view, x + dx, y + dy)) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
    }
    let mut sizes: HashMap<usize, u32> = HashMap::new();
    let roots: Vec<usize> = (0..cells.len()).map(|i| find(&mut parent, i)).collect();
    for &r in &roots {
        *sizes.entry(r).or_insert(0) += 1;
    }
    cells
        .iter()
        .zip(roots)
        .map(|(c, r)| (*c, sizes[&r]))
        .collect()
}

/// Everything needed to lift fused matches to 3D.
pub struct LiftInputs<'a> {
    pub transformed_camera: &'a Camera,
    pub transformed_depth: &'a DepthMap,
    /// Indexed by view id.
    pub original_cameras: &'a [Camera],
    pub original_depths: &'a [DepthMap],
}

impl LiftInputs<'_> {
    fn validate(&self) -> Result<(), CorrespondError> {
        let check = |cam: &Camera, depth: &DepthMap| -> Result<(), CorrespondError> {
            if depth.width != cam.width as usize || depth.height != cam.height as usize {
                return Err(CorrespondError::DepthSizeMismatch {
                    want_w: cam.width,
                    want_h: cam.height,
                    got_w: depth.width,
                    got_h: depth.height,
                });
            }
            Ok(())
        };
        check(self.transformed_camera, self.transformed_depth)?;
        if self.original_cameras.len() != self.original_depths.len() {
            return Err(CorrespondError::InvalidIntrinsics(format!(
                "{} cameras but {} depth maps",
                self.original_cameras.len(),
                self.original_depths.len()
            )));
        }
        for (cam, depth) in self.original_cameras.iter().zip(self.original_depths) {
            check(cam, depth)?;
        }
        Ok(())
    }
}

/// Lift each fused match to a 3D pair via the depth maps. Matches hitting
/// background or out-of-bounds pixels are dropped; the second return value
/// counts them.
pub fn lift_pairs(
    matches: &[ScoredMatch],
    inputs: &LiftInputs,
) -> Result<(Vec<CorrespondencePair>, usize), CorrespondError> {
    inputs.validate()?;
    let mut out = Vec::with_capacity(matches.len());
    let mut skipped = 0usize;
    for sm in matches {
        let m = &sm.raw;
        let view = m.view as usize;
        if view >= inputs.original_cameras.len() {
            return Err(CorrespondError::ViewOutOfRange {
                view: m.view,
                count: inputs.original_cameras.len(),
            });
        }
        let Some(depth_b) = inputs.transformed_depth.sample(m.ub, m.vb) else {
            skipped += 1;
            continue;
        };
        let Some(depth_a) = inputs.original_depths[view].sample(m.ua, m.va) else {
            skipped += 1;
            continue;
        };
        let (Ok(p_b), Ok(p_a)) = (
            inputs.transformed_camera.unproject(m.ub, m.vb, depth_b),
            inputs.original_cameras[view].unproject(m.ua, m.va, depth_a),
        ) else {
            skipped += 1;
            continue;
        };
        out.push(CorrespondencePair {
            original: p_a,
            transformed: p_b,
            view: m.view,
            density: sm.density,
        });
    }
    Ok((out, skipped))
}

/// Greedy leader clustering in index order: each point joins the first
/// cluster whose leader lies within `radius`, else starts a new cluster.
pub fn cluster_points(points: &[Point3], radius: f64) -> Vec<Vec<usize>> {
    assert!(radius > 0.0, "cluster radius must be positive");
    let mut leaders: Vec<Point3> = Vec::new();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        match leaders.iter().position(|l| l.distance(*p) <= radius) {
            Some(c) => clusters[c].push(i),
            None => {
                leaders.push(*p);
                clusters.push(vec![i]);
            }
        }
    }
    clusters
}

/// Reject pairs whose displacement diverges from their cluster's consensus.
///
/// Original-space positions are clustered at radius `eps_a`; clusters smaller
/// than `min_cluster` are dropped entirely. Within a surviving cluster the
/// per-component median displacement is the consensus, and a pair survives if
/// its displacement lies within `max(eps_a, kappa * MAD)` of it.
pub fn filter_3d(
    pairs: &[CorrespondencePair],
    eps_a: f64,
    kappa: f64,
    min_cluster: usize,
) -> Result<Vec<CorrespondencePair>, CorrespondError> {
    if !(eps_a > 0.0) {
        return Err(CorrespondError::InvalidFilterParams(format!(
            "cluster radius must be positive, got {eps_a}"
        )));
    }
    if !(kappa > 0.0) {
        return Err(CorrespondError::InvalidFilterParams(format!(
            "deviation factor must be positive, got {kappa}"
        )));
    }
    if min_cluster < 2 {
        return Err(CorrespondError::InvalidFilterParams(format!(
            "minimum cluster size must be >= 2, got {min_cluster}"
        )));
    }

    let positions: Vec<Point3> = pairs.iter().map(|p| p.original).collect();
    let clusters = cluster_points(&positions, eps_a);

    let mut kept = Vec::new();
    for cluster in clusters {
        if cluster.len() < min_cluster {
            continue;
        }
        let displacements: Vec<Point3> = cluster
            .iter()
            .map(|&i| pairs[i].transformed - pairs[i].original)
            .collect();
        let consensus = Point3::new(
            median_of(displacements.iter().map(|d| d.x)),
            median_of(displacements.iter().map(|d| d.y)),
            median_of(displacements.iter().map(|d| d.z)),
        );
        let mad = median_of(displacements.iter().map(|d| d.distance(consensus)));
        let limit = eps_a.max(kappa * mad);
        for (&i, d) in cluster.iter().zip(&displacements) {
            if d.distance(consensus) <= limit {
                kept.push(pairs[i]);
            }
        }
    }
    Ok(kept)
}

fn median_of(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Snap each pair's original point to its nearest mesh vertex. When several
/// pairs claim the same vertex, the smallest snap distance wins (earlier pair
/// on ties). Output is sorted by vertex index.
pub fn snap_to_anchors(
    pairs: &[CorrespondencePair],
    mesh: &TriMesh,
    index: &KnnIndex,
) -> AnchorSet {
    debug_assert_eq!(index.len(), mesh.vertices.len());
    let mut best: HashMap<u32, (f64, usize)> = HashMap::new();
    for (i, pair) in pairs.iter().enumerate() {
        let n = index.nearest(pair.original);
        let vid = n.index as u32;
        match best.get_mut(&vid) {
            None => {
                best.insert(vid, (n.distance, i));
            }
            Some(cur) => {
                if (n.distance, i) < *cur {
                    *cur = (n.distance, i);
                }
            }
        }
    }
    let mut entries: Vec<AnchorEntry> = best
        .into_iter()
        .map(|(vid, (_, i))| AnchorEntry {
            vertex: vid,
            original: mesh.vertices[vid as usize],
            transformed: pairs[i].transformed,
        })
        .collect();
    entries.sort_by_key(|e| e.vertex);
    AnchorSet { entries }
}

/// Fibonacci-spiral camera positions on the upper hemisphere around
/// `center`, each looking at the center with +z up, replicated with an
/// in-plane roll per yaw angle. Returns `count * yaws.len()` cameras.
pub fn hemisphere_poses(
    count: usize,
    radius: f64,
    center: Point3,
    yaws_deg: &[f64],
    intrinsics: &Intrinsics,
) -> Result<Vec<Camera>, CorrespondError> {
    if count == 0 || !(radius > 0.0) {
        return Err(CorrespondError::InvalidHemisphere);
    }
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let up = Point3::new(0.0, 0.0, 1.0);
    let mut out = Vec::with_capacity(count * yaws_deg.len());
    for i in 0..count {
        let cos_phi = (i as f64 + 0.5) / count as f64;
        let sin_phi = (1.0 - cos_phi * cos_phi).sqrt();
        let theta = golden_angle * i as f64;
        let position = center
            + Point3::new(
                radius * sin_phi * theta.cos(),
                radius * sin_phi * theta.sin(),
                radius * cos_phi,
            );
        let view = (center - position).normalized().expect("radius > 0");
        let right = match view.cross(up).normalized() {
            Some(r) => r,
            // Looking straight down: pick a fixed horizontal right axis.
            None => Point3::new(1.0, 0.0, 0.0),
        };
        let down = view.cross(right);
        let base = Mat3::from_rows(
            [right.x, down.x, view.x],
            [right.y, down.y, view.y],
            [right.z, down.z, view.z],
        );
        for &yaw in yaws_deg {
            let rotation = base.mul_mat(&Mat3::rot_z(yaw.to_radians()));
            out.push(Camera::new(*intrinsics, rotation, position)?);
        }
    }
    Ok(out)
}
