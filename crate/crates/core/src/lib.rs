//! Nonparametric inference for Lévy-driven queues from Poisson-probed
//! workload observations.

pub mod asymptotics;
pub mod error;
pub mod exponent;
pub mod harness;
pub mod estimate;
pub mod simulate;

pub use error::{Error, Result};
pub use exponent::{LevyExponentModel, Mm1Oracle, Order};
pub use simulate::{simulate_probed_workload, ProbedSample, SimulationConfig};
