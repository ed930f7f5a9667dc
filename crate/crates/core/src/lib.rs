//! Numerical laboratory for degenerate and singular fully nonlinear elliptic
//! equations: Pucci operators, convex envelopes and the ABP estimate, an
//! explicit barrier, monotone solvers, and Harnack-type diagnostics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Index loops walk
// several parallel arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod abp;
pub mod barrier;
pub mod envelope;
pub mod error;
pub mod fd;
pub mod grid;
pub mod harnack;
pub mod linalg;
pub mod lp;
pub mod measure;
pub mod params;
pub mod pucci;
pub mod report;
pub mod solve;

pub use error::{Error, Result};
pub use grid::{Domain, Field, Grid, GridFunction};
pub use linalg::SymMatrix;
pub use params::StructureParams;
pub use report::VerificationReport;
