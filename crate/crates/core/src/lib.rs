//! Distributionally robust portfolio selection over polyhedral ambiguity
//! sets, with concave separable utilities replaced by certified families of
//! supporting hyperplanes so each rebalance is a single linear program.

pub mod ambiguity;
pub mod backtest;
pub mod cli;
pub mod data;
pub mod dense_lp;
pub mod error;
pub mod oracle;
pub mod partition;
pub mod robust_lp;
pub mod roots;
pub mod synthetic;
pub mod utility;

pub use error::{Error, Result};
