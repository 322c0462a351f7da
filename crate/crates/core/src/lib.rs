pub mod circuit;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod imageops;
pub mod nn;
pub mod quanv;
pub mod statevector;

pub use error::{Error, FormatError, Result};
