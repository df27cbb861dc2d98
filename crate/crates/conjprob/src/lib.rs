//! Semi-analytical collision probability for spacecraft conjunctions.
//!
//! The crate propagates orbital-state uncertainty through closest-approach
//! dynamics with truncated polynomial algebra (Taylor differential algebra),
//! extracts raw moments of the squared miss distance, reconstructs its
//! probability density with orthogonal-polynomial expansions, and integrates
//! the density in closed form to obtain a collision probability. Monte Carlo
//! baselines (full numerical and Taylor-map accelerated) and a benchmark
//! harness over an embedded 22-conjunction dataset are included.
//!
//! # Layout
//!
//! * [`poly`] - sparse truncated multivariate polynomials, polynomial maps,
//!   composition and map inversion
//! * [`specfun`] - log-gamma, regularized incomplete gamma/beta, factorials
//! * [`dynamics`] - Keplerian two-body propagation for point states and
//!   polynomial jets, closest-approach detection, RTN frames
//! * [`eventmap`] - Taylor maps of the closest-approach manifold (event time,
//!   state, and squared-distance maps)
//! * [`moments`] - raw moments of polynomial observables under per-axis
//!   initial uncertainty
//! * [`pdf`] - reference densities, orthonormal polynomial bases, moment
//!   matching, closed-form interval probabilities
//! * [`pipeline`] - end-to-end probability-of-collision estimators
//!   (`pc_moments`, `pc_monte_carlo`, `pc_taylor_mc`)
//! * [`dataset`], [`benchmark`], [`report`], [`config`] - embedded
//!   conjunction dataset, scenario grid, benchmark runner, report export
//!
//! Runnable walkthroughs for each capability live in `examples/`.

// `!(x > 0.0)` is the intended guard everywhere it appears: unlike
// `x <= 0.0`, it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// frozen test constants are transcribed with their published digit counts
#![allow(clippy::excessive_precision)]

pub mod benchmark;
pub mod config;
pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod eventmap;
pub mod moments;
pub mod pdf;
pub mod pipeline;
pub mod poly;
pub mod report;
pub mod specfun;

pub use error::{Error, Result};

/// Earth gravitational parameter, km^3/s^2.
pub const MU_EARTH: f64 = 398600.4418;
