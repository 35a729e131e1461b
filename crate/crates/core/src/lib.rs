//! Recovery of structured signals from mixed sub-gaussian measurements
//! `y = B·A·x + w`.
//!
//! The crate is organized around the pieces of that model:
//!
//! - [`ensembles`]: mixing matrices `B`, row distributions for `A`, stable rank.
//! - [`structures`]: structure sets `T` (sparse cones, subspaces, unions,
//!   ReLU network ranges), projection, and linear-region enumeration.
//! - [`geometry`]: Gaussian mean widths, width and region-count bounds for
//!   network ranges, orthant counting.
//! - [`solvers`]: constrained least squares over `T` with a reported gap.
//! - [`harness`]: seeded Monte Carlo experiments and CSV output.
//! - [`cli`]: the `mixsense` command-line front end.

pub mod cli;
pub mod ensembles;
pub mod error;
pub mod fmt;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod lp;
pub mod seed;
pub mod solvers;
pub mod structures;

pub use error::{Error, Result};
