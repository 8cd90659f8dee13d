//! Wong-Zakai regularization of white-in-time, fractional-in-space noise and
//! Galerkin solvers for the stochastic heat and wave equations on (0, 1).

pub mod drift;
pub mod error;
pub mod fit;
pub mod grid;
pub mod harness;
pub mod heat;
pub mod lemmas;
pub mod noise;
pub mod quad;
pub mod rng;
pub mod spectral;
pub mod wave;
pub mod wong_zakai;

pub use drift::DriftSpec;
pub use error::{Error, Result};
pub use grid::{Coupling, Grid, GridLadder, SobolevIndex};
