#![cfg_attr(not(feature = "std"), no_std)]

//! Communication-aware receding-horizon game planning.
//!
//! The crate is `no_std` (with `alloc`). It contains the vehicle model, the
//! open-loop Nash solver for constrained dynamic games, the discrete Bayesian
//! filter over intention hypotheses, the decentralized receding-horizon
//! planner and builders for the driving scenarios. File formats, trials and
//! the command line live in the `nashguard` crate.

extern crate alloc;

pub mod dynamics;
pub mod error;
pub mod game;
pub mod hypothesis;
pub mod planner;
pub(crate) mod scalar;
pub mod scenarios;

pub use error::{Error, SolveError};
