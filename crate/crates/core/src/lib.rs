//! Solver and verification toolkit for pairwise lottery contest games.
//!
//! Two contestants per contest compete for a prize under the lottery
//! success rule with multiplicative biases. Contestants spread limited
//! effort across the contests inviting them; designers configure contests
//! within prize budgets. This crate computes the unique equilibrium
//! multiplier vector of the contestant stage, reconstructs approximate
//! effort equilibria, verifies them against independent best-response
//! oracles, and builds designer-stage equilibria for both the indivisible
//! and the divisible prize model.

pub mod dpm;
pub mod emv;
pub mod error;
pub mod ipm;
pub mod model;
pub mod numeric;
pub mod oracle;

pub use error::{Error, Result};
pub use model::{
    csf_f, utilities, validate_instance, validate_profile, winning_probabilities, ContestConfig,
    ContestId, DesignerProfile, EffortProfile, Instance, MultiplierVector, PrizeMode,
};
