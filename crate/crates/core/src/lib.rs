//! MR fingerprinting reconstruction: FISP simulation, subspace compression,
//! dictionary matching and a fully convolutional parameter-mapping network.

pub mod acquisition;
pub mod config;
pub mod error;
pub mod fingerprint;
pub mod matching;
pub mod model;
pub mod mrfa;
pub mod nn;
pub mod report;
pub mod subspace;

pub use error::{Error, Result};
