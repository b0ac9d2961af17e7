//! Simulation library for Mixup-induced label noise and the U-shaped
//! generalization dynamics it produces.
//!
//! Modules, bottom-up:
//! - [`numerics`]: eigendecomposition, spectral exponentials, quadrature, seeded RNG.
//! - [`mixup`]: synthetic sets, λ sampling, cross-entropy Mixup loss and its floor.
//! - [`noise`]: Mixup-induced conditionals, total variation, noisy-label bounds.
//! - [`dynamics`]: random-feature regression, gradient flow and its closed form,
//!   population risk and the risk bound.
//! - [`teacher_student`]: the two-layer teacher / random-feature student experiments.
//! - [`spectral`]: Marchenko-Pastur law and empirical spectra.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod mixup;
pub mod noise;
pub mod numerics;
pub mod spectral;
pub mod teacher_student;

pub use error::{MixdynError, Result};
