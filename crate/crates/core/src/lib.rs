//! Privacy payoff engine: values consumers' personal data by the privacy risk
//! of revealing it, rates providers' privacy credentials, and negotiates the
//! price of a batch of records between a consumer community and a provider.

pub mod agents;
pub mod error;
pub mod harness;
pub mod negotiation;
pub mod ontology;
pub mod payoff;
pub mod risk;
pub mod trust;

pub use error::{Error, Result};
