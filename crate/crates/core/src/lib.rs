//! Kinetic Monte Carlo laboratory for the asymmetric zero range process.
//!
//! The crate is organised bottom-up:
//!
//! * [`thermo`]: rate functions and the grand-canonical invariant measures
//!   (`Z`, `R`, `Φ` and derivatives, cumulants, rate function).
//! * [`kernel`]: finite-range jump kernels, drift and covariance.
//! * [`lattice`]: torus geometry, configurations, block averages, snapshots.
//! * [`dynamics`]: exact event-driven simulation under diffusive scaling.
//! * [`initcond`]: perturbation profiles, product initial measures, entropy.
//! * [`pde`]: spectral heat-equation solutions and a finite-difference
//!   solver for the nonlinear parabolic equation.
//! * [`observables`]: empirical pairings, one-block fields, convergence fits.
//! * [`ensembles`]: canonical block measures, spectral gaps, equivalence of
//!   ensembles, variance, log-Sobolev scans and exact tails.
//! * [`acceptance`]: the end-to-end verification suite.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acceptance;
pub mod dynamics;
pub mod ensembles;
mod error;
pub mod fenwick;
pub mod initcond;
pub mod kernel;
pub mod lattice;
pub mod observables;
pub mod pde;
pub mod stats;
pub mod thermo;
pub mod trig;

pub use error::{Error, Result};
