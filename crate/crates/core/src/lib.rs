//! Conductivity imaging for electrical impedance tomography.
//!
//! The pipeline: a complete-electrode-model forward solver on structured disk
//! meshes ([`fem`]), a coordinate network with random Fourier features
//! ([`inr`]), a denoising diffusion prior trained on procedurally generated
//! shape images ([`shapes`], [`diffusion`]), and reconstruction loops that
//! fit the network to boundary voltages with the prior's score-distillation
//! residual as regularizer ([`reconstruct`]). [`metrics`] scores the results.

pub mod diffusion;
pub mod error;
pub mod fem;
pub mod grid;
pub mod inr;
pub mod mesh;
pub mod metrics;
pub mod optim;
pub mod reconstruct;
pub mod rng;
pub mod scalar;
pub mod shapes;

pub use error::{EitError, Result};
pub use scalar::Real;

pub type Mesh64 = mesh::Mesh<f64>;
pub type Mesh32 = mesh::Mesh<f32>;
pub type InrModel64 = inr::InrModel<f64>;
pub type RffEncoder64 = inr::RffEncoder<f64>;
