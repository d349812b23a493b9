//! Quadratic and gamma-power voting: tallies, decentralization metrics,
//! whale-capping transforms, voter utility maximization and attack models.

pub mod attacks;
pub mod metrics;
mod numeric;
pub mod schemes;
pub mod stake;
pub mod transform;
pub mod utility;

pub use numeric::{compensated_sum, rel_close};
