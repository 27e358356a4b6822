//! Synthetic benchmark scenarios, recovery metrics and the experiment harness.

mod experiment;
mod metrics;
mod scenario;

pub use experiment::*;
pub use metrics::*;
pub use scenario::*;
