//! Neumann-Poincare spectra on smooth planar curves, shape derivatives of
//! eigenvalue clusters, and closed-form checks on the unit sphere.
//!
//! The crate is organised by layer:
//!
//! * [`geometry2d`] builds discretized curves and their perturbations.
//! * [`layer2d`] assembles Nystrom matrices for the layer operators.
//! * [`spectral`] solves for eigenvalues, clusters and Riesz projectors.
//! * [`shapederiv`] evaluates shape derivatives and their finite-difference oracles.
//! * [`sphere3d`] handles the spherical-harmonic identities in three dimensions.
//! * [`cli`] drives experiments and writes reports.

pub mod cli;
pub mod error;
pub mod fourier;
pub mod geometry2d;
pub mod layer2d;
pub mod shapederiv;
pub mod spectral;
pub mod sphere3d;
pub mod vec2;

pub use error::{Error, Result};
pub use geometry2d::{Curve, CurveKind, PerturbationField};
pub use layer2d::{DiscreteOperator, OperatorKind};
pub use spectral::{EigenCluster, RieszProjector, Spectrum};
pub use vec2::Vec2;
