//! Sum-rate optimisation for cooperative multi-point rate-splitting
//! downlinks with movable receive antennas.
//!
//! [`channel`] builds field-response channels, [`rate`] evaluates SINRs,
//! rates and constraints, [`gml`] is the meta-learning optimizer,
//! [`baselines`] holds the benchmark schemes and reference solvers, and
//! [`harness`] runs Monte-Carlo experiments.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod gml;
pub mod harness;
pub mod math;
pub mod rate;

pub use error::{CoreError, Result};
