pub mod agents;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod protocol;
pub mod render;
pub mod rng;
pub mod runner;
pub mod task;
pub mod viscorrupt;
pub mod world;

pub use error::{Error, Result};
