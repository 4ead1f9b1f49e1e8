//! Composition of per-observation diffusion scores into a multi-observation
//! posterior score for Gaussian models, with perturbation bounds and the
//! experiment harness behind the `compscore` binary.

// Negated float comparisons are used on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod compose;
pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod gaussmodel;
pub mod matkernel;
pub mod rng;

pub use compose::{compose_estimate, compose_true, ComposedScore, PrecisionKind, PrecisionSet};
pub use diffusion::{backward_sample, DiffusionSchedule, PerturbationMode, ScoreField, SharedScore};
pub use error::{Error, Result};
pub use gaussmodel::{Gaussian, GaussianLinearModel};
pub use matkernel::SymMatrix;
