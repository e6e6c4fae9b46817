//! Streaming samplers and the finalized [`Sample`] they produce.

mod fast;
mod heap;
mod lazy;
mod multi;
mod stratified;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use fast::{FastPrioritySampler, FastSamplerConfig, SamplerMode};
pub use heap::HeapSampler;
pub use lazy::{LazyRule, LazySampler};
pub use multi::MultiObjectiveSampler;
pub use stratified::StratifiedSampler;

use crate::error::{Error, Result};
use crate::family::PriorityFamily;
use crate::item::{ItemId, WeightedItem};
use crate::rng::{open_unit, seeded, KeyedUniforms, SamplerRng};
use crate::threshold::ThresholdState;

/// A retained item with its pseudo-inclusion probability `F_i(tau_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleItem {
    #[serde(flatten)]
    pub item: WeightedItem,
    #[serde(rename = "F")]
    pub inclusion: f64,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub items_seen: u64,
    pub heap_ops: u64,
    pub threshold_updates: u64,
}

/// Retained items plus everything an estimator needs: the threshold,
/// the priority family and the run's seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub items: Vec<SampleItem>,
    pub threshold: ThresholdState,
    pub family: PriorityFamily,
    pub seed: u64,
    /// The item whose priority equals the threshold, when known.
    pub threshold_item: Option<SampleItem>,
    pub counters: Counters,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Highest estimator degree licensed for this sample.
    pub fn degree_cap(&self) -> usize {
        self.threshold.degree_cap.effective(self.items.len())
    }

    /// `F_i(tau_i)` recomputed from the stored threshold.
    pub fn recompute_inclusion(&self, item: &WeightedItem) -> f64 {
        self.threshold.inclusion(&self.family, item)
    }

    /// Checks the stored inclusion values and priorities against the
    /// threshold. Returns the id of the first offending item.
    pub fn check_consistency(&self) -> std::result::Result<(), ItemId> {
        for s in &self.items {
            if s.inclusion != self.recompute_inclusion(&s.item) {
                return Err(s.item.id.clone());
            }
            if let (Some(r), Some(tau)) = (s.priority, self.item_tau(&s.item)) {
                if !(r < tau) {
                    return Err(s.item.id.clone());
                }
            }
        }
        Ok(())
    }

    /// Threshold that applies to `item`'s priority, when it is defined in
    /// the family's priority space.
    pub fn item_tau(&self, item: &WeightedItem) -> Option<f64> {
        use crate::threshold::ThresholdScope::*;
        match &self.threshold.tau {
            Scalar(t) => Some(*t),
            Strata(m) => item.stratum.as_ref().and_then(|s| m.get(s)).copied(),
            Objectives(_) => None,
        }
    }

    /// Regenerates the priorities that the fast reservoir discards. Given
    /// the threshold, those are iid Uniform(0, tau) because every
    /// reservoir item has `tau <= 1/w`.
    pub fn materialize_priorities<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let tau = self.threshold.scalar_tau().ok_or_else(|| {
            Error::Config("priorities can only be regenerated under a scalar threshold".into())
        })?;
        if self.family != PriorityFamily::UniformScaled {
            return Err(Error::Config(
                "priorities can only be regenerated for the uniform family".into(),
            ));
        }
        for s in self.items.iter_mut().filter(|s| s.priority.is_none()) {
            s.priority = Some(tau.min(1.0 / s.item.weight) * open_unit(rng));
        }
        Ok(())
    }
}

/// Where per-item uniforms come from.
#[derive(Clone, Debug)]
pub enum UniformSource {
    /// Sampler-owned sequential generator.
    Stream(SamplerRng),
    /// Counter-based `U_i = f(seed, id)` shared across workers.
    Keyed(KeyedUniforms),
}

impl UniformSource {
    pub fn stream(seed: u64) -> Self {
        UniformSource::Stream(seeded(seed))
    }

    pub fn keyed(seed: u64) -> Self {
        UniformSource::Keyed(KeyedUniforms::new(seed))
    }

    #[inline]
    pub fn uniform(&mut self, id: &ItemId) -> f64 {
        match self {
            UniformSource::Stream(rng) => open_unit(rng),
            UniformSource::Keyed(k) => k.uniform(id),
        }
    }
}

/// Common streaming interface: build from a config, `add` items, then
/// `finalize` into an immutable [`Sample`].
pub trait Sampler {
    fn add(&mut self, item: WeightedItem) -> Result<()>;

    /// Number of items currently held.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn finalize(self) -> Sample
    where
        Self: Sized;
}

/// Max-ordered entry keyed by `(priority, arrival index)`.
#[derive(Clone, Debug)]
pub(crate) struct Ranked<T> {
    pub priority: f64,
    pub arrival: u64,
    pub payload: T,
}

impl<T> PartialEq for Ranked<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl<T> Eq for Ranked<T> {}

impl<T> PartialOrd for Ranked<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Ranked<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then(self.arrival.cmp(&other.arrival))
    }
}
