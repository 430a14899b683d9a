//! Learned approximation of nonlinear rig deformation on top of linear blend
//! skinning: Laplacian differential coordinates compressed with PCA, small
//! Cartesian subspace networks at anchor vertices, and an anchored sparse
//! least-squares reconstruction. Also ships procedural test rigs, a
//! per-bone baseline, deep-ensemble uncertainty, heat-map export and a
//! timing harness.
//!
//! Numeric code is generic over [`Real`] (`f32` / `f64`); the aliases below
//! fix the precisions the pipeline actually uses.

pub mod bench;
pub mod binio;
pub mod dataset;
pub mod deformer;
pub mod linalg;
pub mod mesh;
pub mod neural;
pub mod pipeline;
pub mod report;
pub mod rotation;
pub mod scalar;
pub mod synthrig;
pub mod uncertainty;

pub use deformer::{Deformer, DeformerConfig, DeformerError, FddaModel, ModelBundle};
pub use scalar::Real;
pub use uncertainty::EnsembleBundle;

/// Scalar of meshes, solves and datasets.
pub type MeshScalar = f64;
/// Scalar of network weights.
pub type NetScalar = f32;

pub type Mesh = mesh::TriMesh<MeshScalar>;
pub type Laplacian = mesh::LaplacianOperator<MeshScalar>;
pub type Factor = mesh::AnchoredFactor<MeshScalar>;
pub type Network = neural::Mlp<NetScalar>;
pub type NetworkState = neural::TrainState<NetScalar>;
pub type Pca = neural::PcaBasis<MeshScalar>;
pub type Transform = rotation::BoneTransform<MeshScalar>;
