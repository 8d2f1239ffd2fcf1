//! Spectral-gap analysis for master-equation generators and Hermitian operators.
//!
//! The crate builds weighted Laplacians from jump rates, symmetrizes detailed-balance
//! generators, eigensolves dense Hermitian operators, and checks a lower bound
//! `μ₂ ≥ min_n V_n` for operators with ergodic ground states and infinitesimal
//! off-diagonal couplings. Every hypothesis of that bound is exposed as a separate
//! diagnostic so that it can be evaluated at finite size.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`generator`] | jump-rate generators, stochastic view, detailed balance, symmetrization |
//! | [`spectra`] | Hermitian eigensolver, ground space, spectral gap, deflation |
//! | [`bound`] | potential/kinetic split, σ, ergodicity, `U` operator, Weyl check, verdict |
//! | [`dynamics`] | master-equation integration, relaxation fit, jump-process sampler |
//! | [`ensembles`] | random graph families and M-scaling scans |
//! | [`io`] | text formats for generators and matrices |

pub mod bound;
pub mod dynamics;
pub mod ensembles;
pub mod error;
pub mod generator;
pub mod io;
pub mod rng;
pub mod spectra;

pub use error::{Error, Result};
