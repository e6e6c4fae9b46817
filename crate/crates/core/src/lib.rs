//! Adaptive threshold sampling.
//!
//! Items receive random priorities from a [`PriorityFamily`]; a sample is
//! every item whose priority falls below a data-dependent threshold. As
//! long as the threshold rule does not peek at the priorities it judges,
//! estimators may treat the retained items as independent Bernoulli draws
//! with probability `F_i(tau_i)`.

pub mod distributed;
pub mod error;
pub mod estimate;
pub mod family;
pub mod harness;
pub mod item;
pub mod rng;
pub mod rules;
pub mod sampler;
mod serde_inf;
pub mod stats;
pub mod threshold;

pub use error::{Error, Result};
pub use estimate::Estimate;
pub use family::{gen_priority, Priority, PriorityFamily};
pub use item::{ItemId, WeightedItem};
pub use rules::ThresholdRule;
pub use sampler::{Sample, SampleItem, Sampler};
pub use threshold::{DegreeCap, ThresholdState};
