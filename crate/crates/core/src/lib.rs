//! Numerical toolkit for the small-particle asymptotics of nematic colloids:
//! single-particle minimal energies and torque vectors, Coulomb-type
//! interaction terms, glued upper-bound competitors, and the oracles used to
//! check each ingredient.

pub mod annulus;
pub mod config;
pub mod error;
pub mod exterior;
pub mod field;
pub mod interaction;
pub mod pipeline;
pub mod report;
pub mod solver;
pub mod sph;

pub use error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
