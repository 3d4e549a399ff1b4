//! Numerical toolkit for one-shot private classical capacity of quantum
//! wiretap channels.

pub mod concentration;
pub mod covering;
pub mod divergence;
pub mod ensemble;
pub mod error;
pub mod operator;
pub mod par;
pub mod rates;
pub mod random;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod wiretap;

pub use error::{Error, Result};
