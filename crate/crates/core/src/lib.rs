//! Generative modeling of multivariate extremes.
//!
//! The pipeline standardizes data to unit-Pareto margins, extracts the angles
//! of observations with a large L1 radius, trains a Wasserstein GAN with
//! gradient penalty on their Aitchison coordinates, and samples new tail
//! observations on the original scale through a multivariate generalized
//! Pareto construction with GPD-fitted margins.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aitchison;
pub mod angular;
pub mod autodiff;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod margins;
pub mod matrix;
pub mod metrics;
pub mod sampler;
pub mod wgan;

pub use error::{Error, Result};
pub use matrix::{DataMatrix, Matrix};
