//! Lattice Hamiltonian normal forms, small-divisor solvers, a Kolmogorov-style
//! KAM iteration and a spectral Galerkin NLS integrator, at desk scale.
//!
//! The crate is organized around a sparse truncated Taylor–Fourier polynomial
//! ring ([`algebra`]), block decompositions and lattice matrices ([`lattice`]),
//! the coupled homological-equation pipeline ([`homology`]), non-resonance
//! bookkeeping over a parameter grid ([`melnikov`]), the iteration itself
//! ([`kamflow`]) and the NLS model plus simulator ([`nlsmodel`]).
//!
//! All numerical kernels are generic over the scalar type through [`Scalar`]
//! (`f32` or `f64`); concrete `f64` aliases live at the crate root.

pub mod algebra;
pub mod gl2;
pub mod homology;
pub mod kamflow;
pub mod lattice;
pub mod linalg;
pub mod melnikov;
pub mod nlsmodel;

mod error;
mod fxhash;
mod scalar;

pub use error::CoreError;
pub use fxhash::{FxBuildHasher, FxHashMap, FxHashSet};
pub use scalar::Scalar;

/// Default scalar type for the CLI and the test suites.
pub type Real = f64;

pub type TfPoly64 = algebra::TfPoly<f64>;
pub type LatticeConfig64 = algebra::LatticeConfig<f64>;
pub type DomainRadii64 = algebra::DomainRadii<f64>;
