//! Learned deformers: the differential model (differential network + subspace
//! networks + anchored Laplacian solve) and the per-bone FDDA baseline.

mod anchors;
mod bundle;
mod eval;
mod fdda;

pub use anchors::{farthest_point_anchors, partition_anchors};
pub use bundle::{train_deformer, AnchorGroup, ModelBundle, OutputScaling, TrainOptions, BUNDLE_MAGIC, BUNDLE_VERSION, ROT6D_LAYOUT};
pub use eval::{blend_zone_vertices, evaluate, evaluate_subset, Evaluation, LinearBaseline};
pub use fdda::{dominant_bones, train_fdda, FddaBone, FddaModel};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::BinError;
use crate::dataset::{DatasetError, RigInputSpec};
use crate::mesh::{MeshError, Vec3};
use crate::neural::{NeuralError, Retention, TrainConfig};
use crate::report::ReportError;
use crate::rotation::RotationError;

#[derive(Debug, Error)]
pub enum DeformerError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("ragged batch: row {row} has width {got}, expected {expected}")]
    RaggedBatch { row: usize, expected: usize, got: usize },
    #[error("non-finite deformer output")]
    NonFiniteOutput,
    #[error("model bundle: {0}")]
    Format(#[from] BinError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Rotation(#[from] RotationError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DeformerError {
    /// True for failures of the numerics (divergence, NaN) rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Self::NonFiniteOutput
                | Self::Neural(NeuralError::Diverged { .. } | NeuralError::NonFinite { .. })
                | Self::Mesh(MeshError::NotPositiveDefinite { .. })
        )
    }
}

pub type Result<T, E = DeformerError> = std::result::Result<T, E>;

/// Anything that maps rig inputs plus the linear mesh to final positions.
pub trait Deformer: Sync {
    fn input_width(&self) -> usize;
    fn vertex_count(&self) -> usize;
    fn infer(&self, inputs: &[f64], linear: &[Vec3<f64>]) -> Result<Vec<Vec3<f64>>>;
}

fn default_hidden() -> Vec<usize> {
    vec![256, 128]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeformerConfig {
    /// Network inputs as `name:kind`; empty means every rig controller.
    pub inputs: Vec<String>,
    /// Name of the deformed mesh.
    pub mesh: Option<String>,
    pub pca: Retention,
    pub pca_max_k: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Number of subspace networks; `None` picks anchors ≈ 5% of vertices.
    pub subspaces: Option<usize>,
    pub group_size: usize,
    pub subspace_hidden: usize,
    pub anchor_weight: f64,
    pub epochs: u64,
    pub lr: f64,
    pub lr_final_factor: f64,
    pub batch_size: Option<usize>,
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl Default for DeformerConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            mesh: None,
            pca: Retention::Fraction(0.9999),
            pca_max_k: 128,
            hidden: default_hidden(),
            subspaces: None,
            group_size: 4,
            subspace_hidden: 64,
            anchor_weight: 1.0,
            epochs: 5000,
            lr: 1e-3,
            lr_final_factor: 1.0,
            batch_size: Some(32),
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl DeformerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DeformerError::Config(m));
        if self.subspaces == Some(0) {
            return bad("subspaces must be >= 1".into());
        }
        if self.group_size == 0 || self.subspace_hidden == 0 || self.hidden.iter().any(|&h| h == 0) {
            return bad("layer and group sizes must be positive".into());
        }
        self.pca.validate()?;
        if self.pca_max_k == 0 {
            return bad("pca_max_k must be >= 1".into());
        }
        if !(self.anchor_weight > 0.0 && self.anchor_weight.is_finite()) {
            return bad(format!("anchor_weight must be positive, got {}", self.anchor_weight));
        }
        if !(self.lr > 0.0 && self.lr_final_factor > 0.0) {
            return bad("lr and lr_final_factor must be positive".into());
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be >= 1".into());
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            lr_final_factor: self.lr_final_factor,
            batch_size: self.batch_size,
            checkpoint_every: self.checkpoint_every,
        }
    }

    /// Explicit input spec, if any.
    pub fn input_spec(&self) -> Result<Option<RigInputSpec>> {
        if self.inputs.is_empty() {
            return Ok(None);
        }
        Ok(Some(RigInputSpec::parse_header_line(&self.inputs.join(","))?))
    }

    /// Subspace count for a mesh of `n` vertices.
    pub fn subspace_count(&self, n: usize) -> usize {
        let s = self.subspaces.unwrap_or_else(|| ((0.05 * n as f64) / self.group_size as f64).round() as usize);
        s.max(1).min((n / self.group_size).max(1))
    }
}
