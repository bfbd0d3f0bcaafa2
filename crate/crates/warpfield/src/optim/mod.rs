//! Deformation-graph optimization: the ARAP regularizer plus the anchored
//! consistency term, analytic gradients with respect to the per-node
//! axis-angle/translation parameters, and a fixed-rate Adam loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defgraph::{
    canonicalize_axis_angle, rotate_vector_jacobian, rotation_from_axis_angle, DeformationGraph,
    GraphParams, InterpolationWeights,
};
use crate::geometry::{Mat3, Point3};
use crate::parallel;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("anchor set is empty")]
    EmptyAnchorSet,
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("anchor {anchor} references vertex {vertex}, but only {count} exist")]
    AnchorVertexOutOfRange { anchor: usize, vertex: u32, count: usize },
    #[error("anchor {anchor} lies {distance:.3e} away from its mesh vertex (limit 1e-9)")]
    AnchorMismatch { anchor: usize, distance: f64 },
    #[error("anchor {anchor} has non-finite coordinates")]
    NonFiniteAnchor { anchor: usize },
}

/// A 3D correspondence snapped to a mesh vertex: the vertex index, its rest
/// position, and its observed transformed position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorEntry {
    #[serde(rename = "vid")]
    pub vertex: u32,
    #[serde(rename = "va")]
    pub original: Point3,
    #[serde(rename = "vb")]
    pub transformed: Point3,
}

/// The set of anchored correspondences driving the consistency loss.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnchorSet {
    pub entries: Vec<AnchorEntry>,
}

impl AnchorSet {
    pub fn new(entries: Vec<AnchorEntry>) -> Result<AnchorSet, OptimError> {
        for (i, e) in entries.iter().enumerate() {
            if !e.original.is_finite() || !e.transformed.is_finite() {
                return Err(OptimError::NonFiniteAnchor { anchor: i });
            }
        }
        Ok(AnchorSet { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Check indices against the mesh the anchors claim to reference: each
    /// `original` must sit within 1e-9 of its indexed vertex.
    pub fn validate_against(&self, vertices: &[Point3]) -> Result<(), OptimError> {
        for (i, e) in self.entries.iter().enumerate() {
            let vi = e.vertex as usize;
            if vi >= vertices.len() {
                return Err(OptimError::AnchorVertexOutOfRange {
                    anchor: i,
                    vertex: e.vertex,
                    count: vertices.len(),
                });
            }
            let d = vertices[vi].distance(e.original);
            if d > 1e-9 {
                return Err(OptimError::AnchorMismatch { anchor: i, distance: d });
            }
        }
        Ok(())
    }
}

/// Whether the consistency residual uses interpolated translations only
/// (the default) or full anchored rigid transforms (ablation mode).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyMode {
    #[default]
    TranslationOnly,
    Rigid,
}

/// Optimizer hyperparameters. `alpha` weighs the consistency term against
/// the ARAP regularizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub consistency: ConsistencyMode,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            alpha: 0.1,
            learning_rate: 0.001,
            iterations: 3000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            consistency: ConsistencyMode::TranslationOnly,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(OptimError::InvalidConfig(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(OptimError::InvalidConfig(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.iterations < 1 {
            return Err(OptimError::InvalidConfig("iterations must be >= 1".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(OptimError::InvalidConfig(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(OptimError::InvalidConfig(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// One evaluation of the total objective and its two components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub arap: f64,
    pub consistency: f64,
}

/// Per-iteration loss record kept by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub arap: f64,
    pub consistency: f64,
    pub total: f64,
}

/// Adam accumulators plus the loss history.
#[derive(Debug, Clone, Default)]
pub struct OptimState {
    pub m_rotations: Vec<Point3>,
    pub v_rotations: Vec<Point3>,
    pub m_translations: Vec<Point3>,
    pub v_translations: Vec<Point3>,
    pub step: u64,
    pub history: Vec<LossRecord>,
}

impl OptimState {
    pub fn new(node_count: usize) -> Self {
        OptimState {
            m_rotations: vec![Point3::ZERO; node_count],
            v_rotations: vec![Point3::ZERO; node_count],
            m_translations: vec![Point3::ZERO; node_count],
            v_translations: vec![Point3::ZERO; node_count],
            step: 0,
            history: Vec::new(),
        }
    }
}

/// Gradient of the total loss with respect to every node parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub rotations: Vec<Point3>,
    pub translations: Vec<Point3>,
}

/// Mean squared ARAP residual over directed graph edges: each node's rigid
/// transform applied to its neighbor versus the neighbor's own transformed
/// position. Zero exactly when the parameters encode one global rigid motion.
pub fn arap_loss(graph: &DeformationGraph) -> f64 {
    let rot: Vec<Mat3> = node_rotations(graph);
    let residuals = edge_residuals(graph, &rot);
    mean_norm_squared(&residuals)
}

/// Mean squared consistency residual over anchors. In the default mode only
/// interpolated node translations participate: anchors are mesh vertices, so
/// a translation fully determines where each one lands.
pub fn consistency_loss(
    graph: &DeformationGraph,
    weights: &InterpolationWeights,
    anchors: &AnchorSet,
) -> Result<f64, OptimError> {
    consistency_loss_mode(graph, weights, anchors, ConsistencyMode::TranslationOnly)
}

pub fn consistency_loss_mode(
    graph: &DeformationGraph,
    weights: &InterpolationWeights,
    anchors: &AnchorSet,
    mode: ConsistencyMode,
) -> Result<f64, OptimError> {
    if anchors.is_empty() {
        return Err(OptimError::EmptyAnchorSet);
    }
    let rot = match mode {
        ConsistencyMode::Rigid => node_rotations(graph),
        ConsistencyMode::TranslationOnly => Vec::new(),
    };
    let residuals = anchor_residuals(graph, weights, anchors, mode, &rot);
    Ok(mean_norm_squared(&residuals))
}

/// `L = L_arap + alpha * L_consistency`, components reported separately.
pub fn total_loss(
    graph: &DeformationGraph,
    weights: &InterpolationWeights,
    anchors: &AnchorSet,
    config: &OptimConfig,
) -> Result<LossBreakdown, OptimError> {
    let arap = arap_loss(graph);
    let consistency = consistency_loss_mode(graph, weights, anchors, config.consistency)?;
    Ok(LossBreakdown { total: arap + config.alpha * consistency, arap, consistency })
}

fn node_rotations(graph: &DeformationGraph) -> Vec<Mat3> {
    parallel::map_indexed(&graph.params.rotations, |_, aa| rotation_from_axis_angle(*aa))
}

/// Both directions of every undirected edge, grouped per undirected edge.
fn directed_edges(graph: &DeformationGraph) -> Vec<(u32, u32)> {
    graph
        .edges()
        .iter()
        .flat_map(|&(u, v)| [(u, v), (v, u)])
        .collect()
}

fn edge_residuals(graph: &DeformationGraph, rotations: &[Mat3]) -> Vec<Point3> {
    let nodes = graph.nodes();
    let t = &graph.params.translations;
    let edges = directed_edges(graph);
    // R_j (v_k - v_j) + v_j + t_j - (v_k + t_k), grouped as
    // (R_j d - d) + (t_j - t_k) so identity parameters give exactly zero.
    parallel::map_indexed(&edges, |_, &(j, k)| {
        let d = nodes[k as usize] - nodes[j as usize];
        (rotations[j as usize].mul_vec(d) - d) + (t[j as usize] - t[k as usize])
    })
}

fn anchor_residuals(
    graph: &DeformationGraph,
    weights: &InterpolationWeights,
    anchors: &AnchorSet,
    mode: ConsistencyMode,
    rotations: &[Mat3],
) -> Vec<Point3> {
    let t = &graph.params.translations;
    let nodes = graph.nodes();
    parallel::map_indexed(&anchors.entries, |_, e| {
        let vi = e.vertex as usize;
        match mode {
            ConsistencyMode::TranslationOnly => {
                weights.blend_translation(vi, t) + e.original - e.transformed
            }
            ConsistencyMode::Rigid => {
                let mut p = Point3::ZERO;
                for (node, w) in weights.vertex_entries(vi) {
                    let n = node as usize;
                    let moved =
                        rotations[n].mul_vec(e.original - nodes[n]) + nodes[n] + t[n];
                    p += moved * w;
                }
                p - e.transformed
            }
        }
    })
}

fn mean_norm_squared(residuals: &[Point3]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    parallel::sum_range(residuals.len(), |i| residuals[i].norm_squared()) / residuals.len() as f64
}

/// Precomputed adjacency for gradient gathering. Built once per
/// optimization; accumulation per node walks fixed-order lists, so results
/// never depend on the thread count.
pub struct GradientContext {
    directed: Vec<(u32, u32)>,
    outgoing: Vec<Vec<u32>>,
    incoming: Vec<Vec<u32>>,
    anchor_touch: Vec<Vec<(u32, f64)>>,
}

impl GradientContext {
    pub fn new(
        graph: &DeformationGraph,
        weights: &InterpolationWeights,
        anchors: &AnchorSet,
    ) -> Result<GradientContext, OptimError> {
        if anchors.is_empty() {
            return Err(OptimError::EmptyAnchorSet);
        }
        let n = graph.node_count();
        for (i, e) in anchors.entries.iter().enumerate() {
            if e.vertex as usize >= weights.vertex_count() {
                return Err(OptimError::AnchorVertexOutOfRange {
                    anchor: i,
                    vertex: e.vertex,
                    count: weights.vertex_count(),
                });
            }
        }

        let directed = directed_edges(graph);
        let mut outgoing = vec![Vec::new(); n];
        let mut incoming = vec![Vec::new(); n];
        for (e, &(j, k)) in directed.iter().enumerate() {
            outgoing[j as usize].push(e as u32);
            incoming[k as usize].push(e as u32);
        }
        let mut anchor_touch = vec![Vec::new(); n];
        for (ai, e) in anchors.entries.iter().enumerate() {
            for (node, w) in weights.vertex_entries(e.vertex as usize) {
                anchor_touch[node as usize].push((ai as u32, w));
            }
        }
        Ok(GradientContext { directed, outgoing, incoming, anchor_touch })
    }

    /// Analytic gradient of the total loss, plus the loss values themselves
    /// (they come for free from the residuals).
    pub fn evaluate(
        &self,
        graph: &DeformationGraph,
        weights: &InterpolationWeights,
        anchors: &AnchorSet,
        config: &OptimConfig,
    ) -> Result<(ParamGradients, LossBreakdown), OptimError> {
        let rotations = node_rotations(graph);
        let edge_res = edge_residuals(graph, &rotations);
        let anchor_res = anchor_residuals(graph, weights, anchors, config.consistency, &rotations);

        let arap = mean_norm_squared(&edge_res);
        let consistency = mean_norm_squared(&anchor_res);
        let loss = LossBreakdown { total: arap + config.alpha * consistency, arap, consistency };

        let nodes = graph.nodes();
        let edge_scale = if self.directed.is_empty() {
            0.0
        } else {
            2.0 / self.directed.len() as f64
        };
        let anchor_scale = 2.0 * config.alpha / anchors.len() as f64;

        let per_node: Vec<(Point3, Point3)> = parallel::map_range(nodes.len(), |n| {
            let aa = graph.params.rotations[n];
            let vn = nodes[n];
            let mut g_t = Point3::ZERO;
            let mut g_r = Point3::ZERO;

            // ARAP: this node as the transform owner (outgoing edges)...
            for &e in &self.outgoing[n] {
                let r = edge_res[e as usize];
                g_t += r * edge_scale;
                let k = self.directed[e as usize].1;
                let d = nodes[k as usize] - vn;
                g_r += rotate_vector_jacobian(aa, d).transpose_mul_vec(r) * edge_scale;
            }
            // ...and as the transformed neighbor (incoming edges).
            for &e in &self.incoming[n] {
                g_t -= edge_res[e as usize] * edge_scale;
            }

            // Consistency term through the interpolation weights.
            for &(ai, w) in &self.anchor_touch[n] {
                let s = anchor_res[ai as usize];
                g_t += s * (anchor_scale * w);
                if config.consistency == ConsistencyMode::Rigid {
                    let va = anchors.entries[ai as usize].original;
                    g_r += rotate_vector_jacobian(aa, va - vn).transpose_mul_vec(s)
                        * (anchor_scale * w);
                }
            }
            (g_r, g_t)
        });

        let mut grads = ParamGradients {
            rotations: Vec::with_capacity(nodes.len()),
            translations: Vec::with_capacity(nodes.len()),
        };
        for (g_r, g_t) in per_node {
            grads.rotations.push(g_r);
            grads.translations.push(g_t);
        }
        Ok((grads, loss))
    }
}

/// One-shot gradient evaluation (tests and external callers); the
/// optimization loop reuses a [`GradientContext`] instead.
pub fn gradients(
    graph: &DeformationGraph,
    weights: &InterpolationWeights,
    anchors: &AnchorSet,
    config: &OptimConfig,
) -> Result<(ParamGradients, LossBreakdown), OptimError> {
    GradientContext::new(graph, weights, anchors)?.evaluate(graph, weights, anchors, config)
}

/// One Adam update of a single scalar parameter. Returns the new
/// (param, m, v); `step` is the 1-based step count.
pub fn adam_update_scalar(
    param: f64,
    m: f64,
    v: f64,
    grad: f64,
    step: u64,
    config: &OptimConfig,
) -> (f64, f64, f64) {
    let m = config.beta1 * m + (1.0 - config.beta1) * grad;
    let v = config.beta2 * v + (1.0 - config.beta2) * grad * grad;
    let m_hat = m / (1.0 - config.beta1.powi(step as i32));
    let v_hat = v / (1.0 - config.beta2.powi(step as i32));
    (param - config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon), m, v)
}

fn adam_update_vec(
    params: &mut [Point3],
    m: &mut [Point3],
    v: &mut [Point3],
    grads: &[Point3],
    step: u64,
    config: &OptimConfig,
) {
    for i in 0..params.len() {
        let (px, mx, vx) = adam_update_scalar(params[i].x, m[i].x, v[i].x, grads[i].x, step, config);
        let (py, my, vy) = adam_update_scalar(params[i].y, m[i].y, v[i].y, grads[i].y, step, config);
        let (pz, mz, vz) = adam_update_scalar(params[i].z, m[i].z, v[i].z, grads[i].z, step, config);
        params[i] = Point3::new(px, py, pz);
        m[i] = Point3::new(mx, my, mz);
        v[i] = Point3::new(vx, vy, vz);
    }
}

/// Standard bias-corrected Adam step over all node parameters; axis-angle
/// vectors are re-canonicalized to magnitude <= pi afterwards.
pub fn adam_step(
    state: &mut OptimState,
    params: &mut GraphParams,
    grads: &ParamGradients,
    config: &OptimConfig,
) {
    state.step += 1;
    adam_update_vec(
        &mut params.rotations,
        &mut state.m_rotations,
        &mut state.v_rotations,
        &grads.rotations,
        state.step,
        config,
    );
    adam_update_vec(
        &mut params.translations,
        &mut state.m_translations,
        &mut state.v_translations,
        &grads.translations,
        state.step,
        config,
    );
    for aa in &mut params.rotations {
        *aa = canonicalize_axis_angle(*aa);
    }
}

/// Run the full optimization loop, recording one loss row per iteration
/// (evaluated at the parameters entering that iteration). Aborts with
/// [`OptimError::NonFiniteLoss`] instead of clamping: a blown-up loss means
/// bad correspondences, not something to paper over.
pub fn optimize_graph(
    graph: &mut DeformationGraph,
    weights: &InterpolationWeights,
    anchors: &AnchorSet,
    config: &OptimConfig,
) -> Result<OptimState, OptimError> {
    config.validate()?;
    let context = GradientContext::new(graph, weights, anchors)?;
    let mut state = OptimState::new(graph.node_count());
    for iteration in 0..config.iterations {
        let (grads, loss) = context.evaluate(graph, weights, anchors, config)?;
        if !loss.total.is_finite() {
            return Err(OptimError::NonFiniteLoss { iteration });
        }
        state.history.push(LossRecord {
            iteration,
            arap: loss.arap,
            consistency: loss.consistency,
            total: loss.total,
        });
        adam_step(&mut state, &mut graph.params, &grads, config);
    }
    Ok(state)
}

#[cfg(test)]
mod tests;
