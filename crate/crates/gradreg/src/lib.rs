//! Training and analysis toolkit for the Lp gradient-perturbation
//! regularization family.
//!
//! The crate trains small classifiers (softmax regression and sigmoid MLPs)
//! with worst-case-perturbation injection, generates and visualizes
//! adversarial perturbations for any norm parameter `p ∈ [1, ∞]`, and
//! implements a probabilistic model predicting misclassification rates under
//! Gaussian input noise.
//!
//! Core numeric routines in [`num`] and [`perturb`] are generic over the
//! scalar type through the [`num::Real`] trait (`f32` or `f64`); the model
//! and training stack is fixed to `f64` via the aliases exported here.

pub mod cli;
pub mod data;
pub mod error;
pub mod model;
pub mod num;
pub mod perturb;
pub mod robust;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
pub use num::{PNorm, Rng};

/// Dense row-major matrix of 64-bit floats.
pub type Matrix = num::MatrixBase<f64>;

pub use data::Dataset;
pub use model::{ForwardTrace, GradBundle, MlpModel};
pub use perturb::PerturbSpec;
pub use robust::{MinPerturbStats, NoiseModel, RiskReport};
pub use train::TrainConfig;
