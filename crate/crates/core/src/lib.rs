//! Discrete-choice demand simulation with consideration sets, four demand
//! model families, maximum-likelihood estimation, and profit-maximizing
//! product-line design.

pub mod design;
pub mod engineering;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod market;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod population;
pub mod seed;
pub mod truth;

mod consideration;

pub use error::{Error, Result};
