//! Reflection positivity on finite time-symmetric lattices.
//!
//! The crate builds centred Gaussian measures on a lattice with a
//! time-reflection involution, decides Gaussian reflection positivity from
//! the cross block of the covariance, decides whether polynomial densities
//! split across the reflection plane, and estimates Gram matrices of
//! characteristic functions of `exp(F)·μ` by Monte Carlo, both directly and
//! through the P/Q factorization that makes positivity manifest.

pub mod cli;
pub mod density;
pub mod error;
pub mod gaussian;
pub mod lattice;
pub mod linalg;
pub mod rp_verify;
pub mod rng;

pub use density::{Potential, SplitResult, Term};
pub use error::{Error, Result};
pub use gaussian::{Covariance, FieldSample, PqPair};
pub use lattice::{HalfVector, Lattice, SiteVector};
pub use rp_verify::{GramReport, McParams, Verdict};
