//! Finite-N phase transitions for sparse recovery under block-diagonal and
//! anisotropic Fourier undersampling.
//!
//! The crate covers the whole pipeline: coefficient sets and their proximal
//! maps, measurement ensembles, an ADMM basis-pursuit solver with an
//! interior-point reference, exact block-diagonal success probabilities,
//! finite-N phase-transition predictions, Monte-Carlo campaigns, probit and
//! cloglog fitting, and numerical verifications of the structural lemmas.

pub mod coeffsets;
pub mod ensembles;
pub mod error;
pub mod exactprob;
pub mod experiments;
pub mod inference;
pub mod linalg;
pub mod predict;
pub mod rng;
pub mod solver;
pub mod verify;

pub use coeffsets::{CoefficientSet, SignalVector};
pub use ensembles::{MeasurementOperator, ProblemSizes};
pub use error::{PtlabError, Result};
pub use rng::SeedStream;
