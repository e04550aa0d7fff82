//! Bulk-surface reaction-diffusion on the unit disk.

pub mod cli_io;
pub mod error;
pub mod geometry;
pub mod hypothesis_checker;
pub mod integrator;
pub mod layer_potential;
pub mod monitors;
pub mod operators;
pub mod reaction_model;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type StateF64 = integrator::State<f64>;
pub type StateF32 = integrator::State<f32>;
pub type BulkMeshF64 = geometry::BulkMesh<f64>;
pub type BulkMeshF32 = geometry::BulkMesh<f32>;
pub type SurfaceMeshF64 = geometry::SurfaceMesh<f64>;
pub type MeshesF64 = geometry::Meshes<f64>;
pub type MeshesF32 = geometry::Meshes<f32>;
pub type SparseOperatorF64 = operators::SparseOperator<f64>;
pub type DiffusionOperatorF64 = operators::DiffusionOperator<f64>;
pub type PotentialSolutionF64 = layer_potential::PotentialSolution<f64>;
pub type PotentialSolutionF32 = layer_potential::PotentialSolution<f32>;
