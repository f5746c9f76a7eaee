//! Physics-encoded spectral attention surrogate for time-dependent 2-D PDEs.
//!
//! - [`tensor`]: dense tensors, reverse-mode tape, FFT, Adam and step decay.
//! - [`pde`]: explicit finite-difference generators for Burgers,
//!   FitzHugh-Nagumo and Gray-Scott, plus the trajectory file format.
//! - [`model`]: the surrogate (physics-encoded block, spectral-enhanced block
//!   with spectral attention, forward-Euler update) and its ablation variants.
//! - [`train`]: autoregressive rollout training.
//! - [`metrics`]: RMSE, MAE, Pearson correlation, high-correlation time.

pub mod error;
pub mod metrics;
pub mod model;
pub mod pde;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{ModelConfig, PeSaNet, Variant};
pub use pde::{Field, SystemKind, SystemSpec, Trajectory};
pub use tensor::{ComplexTensor, Tensor};
