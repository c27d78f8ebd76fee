//! EM for over-specified two-component Gaussian mixtures.
//!
//! When a two-component mixture is fitted to data drawn from a single
//! standard Gaussian, the location parameter is only weakly identified and EM
//! slows down on both the optimisation and the statistical side. This crate
//! provides:
//!
//! - the mixture families, densities and likelihood objectives ([`model`]);
//! - closed-form EM steps and a recorded driver ([`em`]);
//! - the pseudo-population and corrected population operators evaluated by
//!   Gauss–Hermite quadrature, contraction ratios and perturbation scans
//!   ([`population`]);
//! - the analytic side: Taylor bounds of `x tanh x`, series coefficients,
//!   localisation recursions, epoch schedules and several numerical checks
//!   ([`theory`]);
//! - Hellinger/total-variation oracles, the two-point minimax construction,
//!   log-log rate fits and likelihood-surface scans ([`stats`]);
//! - a seeded, order-independent Monte-Carlo harness ([`harness`]) and the
//!   `singular-em` command line ([`cli`]).

pub mod cli;
pub mod em;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod model;
pub mod population;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
