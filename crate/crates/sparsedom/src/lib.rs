//! Sparse domination machinery on finite discretized spaces of homogeneous type.
//!
//! The crate builds, on concrete finite grids:
//!
//! * quasi-metric point spaces with doubling measures ([`space`]),
//! * dyadic cube systems, shifted adjacent systems and the covering
//!   algorithm ([`dyadic`]),
//! * Muckenhoupt weights and A_p characteristics ([`weights`]),
//! * Hardy--Littlewood and sharp grand maximal truncation operators
//!   ([`maximal`]),
//! * the stopping-time sparse-family construction together with l^r
//!   sparse operators, fractional variants and sparse forms ([`sparse`]),
//! * concrete test operators: truncated Hilbert transform, Riesz
//!   potential, anisotropic Fourier multiplier and the Rademacher
//!   maximal operator ([`operators`]),
//! * a scenario runner emitting JSON/CSV reports ([`harness`]).
//!
//! Everything is exact over the finite grid: averages are weighted sums,
//! suprema are maxima over enumerable families. All randomness is seeded
//! and reports are byte-reproducible.

pub mod dyadic;
pub mod error;
pub mod harness;
pub mod maximal;
pub mod operators;
pub mod space;
pub mod sparse;
pub mod weights;

pub use error::SparseDomError;
pub use space::{Ball, GridFunction, Space};
