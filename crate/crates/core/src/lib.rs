//! Simulation sandbox for studying how data bias interacts with fairness
//! interventions on a synthetic two-group classification task.

pub mod biasinject;
pub mod cli_io;
pub mod error;
pub mod glm;
pub mod harness;
pub mod interventions;
pub mod metrics;
pub mod synthgen;

pub use error::{Result, SandboxError};
