//! Greedy synthesis of cost-aware cascades of abstaining prediction models.
//!
//! The crate turns logged predictions of a model pool into a cascade whose
//! average cost on a validation set is within a constant factor of optimal,
//! subject to a decomposable accuracy constraint.

pub mod abstain;
pub mod cascade;
pub mod cost;
pub mod data;
pub mod error;
pub mod oracle;
pub mod par;
pub mod synth;

pub use error::{Error, Result};
