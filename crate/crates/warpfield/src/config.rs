//! Pipeline-wide configuration: one JSON document overriding per-module
//! defaults field-wise. Unknown keys are a hard error.

use serde::{Deserialize, Serialize};

use crate::defgraph::RotationBlend;
use crate::optim::{ConsistencyMode, OptimConfig};

/// How surface distance is measured when gating points against the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceDistanceMode {
    /// Distance to the nearest mesh vertex (anchors are vertices).
    #[default]
    Vertex,
    /// Exact point-to-triangle distance; for coarse meshes.
    Triangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Flow / interpolation neighbor count.
    pub k: usize,
    /// Surface gate distance.
    pub tau: f64,
    /// Consistency-loss weight.
    pub alpha: f64,
    /// Adam learning rate.
    pub learning_rate: f64,
    /// Optimization iterations.
    pub iterations: usize,
    /// Deformation-graph node count after decimation.
    pub target_nodes: usize,
    /// Raw-match confidence cutoff.
    pub confidence_threshold: f64,
    /// Multi-view fusion Chebyshev radius, pixels.
    pub fuse_radius: i64,
    /// 3D filter cluster radius as a fraction of the bounding-box diagonal.
    pub eps_a_frac: f64,
    /// 3D filter deviation factor (times the cluster MAD).
    pub kappa: f64,
    /// 3D filter minimum cluster size.
    pub min_cluster: usize,
    /// Volume IoU voxel resolution per axis.
    pub metric_resolution: usize,
    /// Chamfer surface-sample count per mesh.
    pub metric_samples: usize,
    /// Seed for every stochastic step.
    pub seed: u64,
    /// Rotation interpolation scheme.
    pub rotation_blend: RotationBlend,
    /// Surface-distance definition.
    pub surface_distance: SurfaceDistanceMode,
    /// Consistency-loss residual mode.
    pub consistency: ConsistencyMode,
    /// Multi-view fusion score.
    pub fusion_score: crate::correspond::FusionScore,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: crate::flow::DEFAULT_K,
            tau: crate::flow::DEFAULT_SURFACE_GATE,
            alpha: 0.1,
            learning_rate: 0.001,
            iterations: 3000,
            target_nodes: 2000,
            confidence_threshold: crate::correspond::DEFAULT_CONFIDENCE_THRESHOLD,
            fuse_radius: crate::correspond::DEFAULT_FUSE_RADIUS,
            eps_a_frac: 0.02,
            kappa: 3.0,
            min_cluster: 3,
            metric_resolution: crate::evalsynth::DEFAULT_VOXEL_RESOLUTION,
            metric_samples: crate::evalsynth::DEFAULT_SAMPLE_COUNT,
            seed: 0,
            rotation_blend: RotationBlend::default(),
            surface_distance: SurfaceDistanceMode::default(),
            consistency: ConsistencyMode::default(),
            fusion_score: crate::correspond::FusionScore::default(),
        }
    }
}

impl PipelineConfig {
    /// Check every field against its owning module's invariant.
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("k must be >= 1".into());
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(format!("tau must be positive and finite, got {}", self.tau));
        }
        self.optim_config().validate().map_err(|e| e.to_string())?;
        if self.target_nodes == 0 {
            return Err("target_nodes must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(format!(
                "confidence_threshold must be in [0, 1], got {}",
                self.confidence_threshold
            ));
        }
        if self.fuse_radius < 1 {
            return Err(format!("fuse_radius must be >= 1, got {}", self.fuse_radius));
        }
        if !(self.eps_a_frac > 0.0) {
            return Err(format!("eps_a_frac must be positive, got {}", self.eps_a_frac));
        }
        if !(self.kappa > 0.0) {
            return Err(format!("kappa must be positive, got {}", self.kappa));
        }
        if self.min_cluster < 2 {
            return Err(format!("min_cluster must be >= 2, got {}", self.min_cluster));
        }
        if self.metric_resolution < 16 {
            return Err(format!(
                "metric_resolution must be >= 16, got {}",
                self.metric_resolution
            ));
        }
        if self.metric_samples == 0 {
            return Err("metric_samples must be >= 1".into());
        }
        Ok(())
    }

    /// The optimizer view of this configuration.
    pub fn optim_config(&self) -> OptimConfig {
        OptimConfig {
            alpha: self.alpha,
            learning_rate: self.learning_rate,
            iterations: self.iterations,
            seed: self.seed,
            consistency: self.consistency,
            ..OptimConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_match_the_documented_values() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.k, 20);
        assert_eq!(cfg.tau, 7e-5);
        assert_eq!(cfg.alpha, 0.1);
        assert_eq!(cfg.learning_rate, 0.001);
        assert_eq!(cfg.iterations, 3000);
        assert_eq!(cfg.target_nodes, 2000);
        assert_eq!(cfg.confidence_threshold, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<PipelineConfig>(r#"{"k": 10, "bogus": 1}"#);
        assert!(err.is_err());
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"iterations": 100, "alpha": 0.5}"#).unwrap();
        assert_eq!(cfg.iterations, 100);
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.k, 20);
    }

    #[test]
    fn invalid_values_fail_validation() {
        let cfg = PipelineConfig { k: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig { confidence_threshold: 1.5, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig { min_cluster: 1, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
