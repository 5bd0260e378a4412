//! Myopic posterior sampling for sequential experimental design.
//!
//! Each round samples a parameter from the posterior and picks the action whose expected
//! penalty one step ahead is smallest under that sample. The crate also carries the
//! baselines, the information-theoretic quantities behind the regret bounds, checkers for
//! the structural conditions on penalties, and a seeded experiment harness.

pub mod analytics;
pub mod conditions;
pub mod data;
pub mod env;
pub mod error;
pub mod inference;
pub mod models;
pub mod harness;
pub mod lookahead;
pub mod penalties;
pub mod policies;

pub use data::{Action, DataSequence, Outcome, Theta};
pub use env::{ActionGrid, Environment, FiniteModel, Model};
pub use error::{Error, Result};

/// Random generator used throughout; every stream is derived from a seed.
pub type SimRng = rand_chacha::ChaCha8Rng;
