//! Capacity of the lossy single-mode photon channel with photon-number
//! resolving detection.
//!
//! The crate computes:
//! - closed-form reference rates ([`analytic`]),
//! - the Fock-ensemble capacity by constrained Blahut-Arimoto ([`ba`]),
//! - the coherent-state (Poisson) capacity with an adaptive mass-point prior
//!   ([`continuous`]),
//! - the semi-analytic rate of a negative-binomial Fock ensemble ([`negbin`]),
//! - sweeps and prior studies built on top of those ([`experiments`]),
//! - output formats and the command-line front end ([`report`], [`cli`]).
//!
//! Rates are in bits per channel use throughout.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod ba;
pub mod channel;
pub mod cli;
pub mod continuous;
pub mod error;
pub mod experiments;
pub mod negbin;
pub mod optimize;
pub mod prior;
pub mod quadrature;
pub mod report;
pub mod special;

pub use analytic::PhotonBudget;
pub use ba::{ba_solve, fock_capacity, CapacityResult, ConstraintSpec, CutoffPolicy, SolverConfig};
pub use channel::{ChannelMatrix, FockAlphabet, IntensityAlphabet, Transmission};
pub use continuous::{poisson_capacity, ContinuousSolverConfig, MassPointPrior};
pub use error::{Error, Result};
pub use prior::PriorDistribution;
