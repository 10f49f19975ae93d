//! β-divergence nonnegative matrix factorization with automatic relevance
//! determination of the model order.
//!
//! The solver alternates majorization-minimization updates of W and H with a
//! closed-form update of per-component relevance weights λ. Components whose
//! weight collapses to its lower bound are pruned; their count gives the
//! effective order K_eff.

// NaN must fail parameter checks, so they are written as !(x > 0.0).
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ard;
pub mod datagen;
pub mod divergence;
pub mod error;
pub mod hyper;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod mm;
pub mod rng;

pub use ard::{ard_fit, ard_fit_from, ArdConfig, ArdFit, ArdState, Penalty};
pub use divergence::{d_beta, d_beta_masked, d_beta_matrix};
pub use error::{Error, Result};
pub use matrix::{DenseMatrix, MaskMatrix};
pub use mm::{nmf_fit, nmf_fit_from, FitReport, NmfFit, NmfFitOptions, Termination};
