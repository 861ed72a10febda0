pub mod cli;
pub mod error;
pub mod experiments;
pub mod model;
pub mod replica;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
