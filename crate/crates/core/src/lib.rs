#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bargaining;
pub mod benchmarks;
pub mod error;
pub mod externality;
pub mod infovalue;
pub mod isotonic;
pub mod market;
pub mod optimize;
pub mod pricing;

pub use error::{Error, Result};
pub use externality::{validate_model, ExternalityModel, ValidationReport};
pub use market::{MarketShares, PriceVector};
