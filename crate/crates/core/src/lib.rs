//! Universal decoding relative to a class of decoding metrics.
//!
//! The library covers equivalence classes of inputs induced by a metric
//! family, random-coding ensembles, channel models, the conditional
//! Lempel-Ziv surrogate, the decoders themselves, and exact and Monte Carlo
//! tools for checking how the universal decoder compares to every metric of
//! the family.

pub mod channel;
pub mod cli;
pub mod config;
pub mod decoder;
pub mod ensemble;
pub mod error;
pub mod lz;
pub mod metric;
pub mod simulator;
pub mod types;

pub use error::{Error, Result};
pub use types::{Sequence, Symbol};
