//! Survival analysis with a multi-task deep survival network.
//!
//! The crate covers the whole pipeline: CSV ingestion and preprocessing
//! ([`dataio`]), survival domain types and censoring-aware metrics
//! ([`survival`]), a linear Cox baseline on the Efron partial likelihood
//! ([`cox`]), the two-headed network trained on the joint partial-likelihood
//! and ranking losses ([`net`]), and post-hoc interpretation ([`analysis`]).

pub mod analysis;
pub mod cox;
pub mod dataio;
pub mod efron;
pub mod error;
pub mod net;
pub mod survival;

pub use error::{Result, SurvError};
