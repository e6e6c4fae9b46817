use super::{Counters, Sample, SampleItem, Sampler, UniformSource};
use crate::error::{Error, Result};
use crate::family::PriorityFamily;
use crate::item::WeightedItem;
use crate::threshold::{
    kth_smallest, variance_adapted_update, RejectedSummary, ThresholdState, VarianceTarget,
};

/// Threshold update used when the lazy reservoir overflows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LazyRule {
    /// Relaxed reservoir: cut to the (capacity+1)-th smallest priority.
    FixedK,
    /// Halve the threshold until the reservoir fits (Wegman).
    Wegman,
    /// Shrink from rejected-item moments after every arrival; fall back to
    /// the fixed-k cut on overflow.
    VarAdapt(VarianceTarget),
}

/// Lazy priority sampling: new items are admitted against the current
/// threshold with their priorities stored; only on overflow is the
/// threshold updated and the reservoir filtered.
#[derive(Clone, Debug)]
pub struct LazySampler {
    rule: LazyRule,
    capacity: usize,
    family: PriorityFamily,
    seed: u64,
    source: UniformSource,
    tau: f64,
    reservoir: Vec<(WeightedItem, f64)>,
    rejected: RejectedSummary,
    threshold_item: Option<(WeightedItem, f64)>,
    counters: Counters,
}

impl LazySampler {
    pub fn new(rule: LazyRule, capacity: usize, family: PriorityFamily, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidSampleSize("capacity must be at least 1".into()));
        }
        let tau = match rule {
            LazyRule::Wegman => 1.0,
            _ => f64::INFINITY,
        };
        Ok(Self {
            rule,
            capacity,
            family,
            seed,
            source: UniformSource::stream(seed),
            tau,
            reservoir: Vec::with_capacity(capacity + 1),
            rejected: RejectedSummary::default(),
            threshold_item: None,
            counters: Counters::default(),
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Stored `(item, priority)` pairs.
    pub fn reservoir(&self) -> &[(WeightedItem, f64)] {
        &self.reservoir
    }

    pub fn rejected(&self) -> &RejectedSummary {
        &self.rejected
    }

    fn proposed_threshold(&self) -> f64 {
        let priorities: Vec<f64> = self.reservoir.iter().map(|(_, r)| *r).collect();
        match self.rule {
            LazyRule::FixedK | LazyRule::VarAdapt(_) => kth_smallest(&priorities, self.capacity),
            LazyRule::Wegman => {
                let mut t = self.tau;
                while priorities.iter().filter(|&&r| r < t).count() > self.capacity {
                    t /= 2.0;
                }
                t
            }
        }
    }

    /// Set a new threshold and evict everything at or above it.
    fn apply_threshold(&mut self, tau: f64) -> Result<()> {
        if tau > self.tau {
            return Err(Error::ThresholdIncreased {
                from: self.tau,
                to: tau,
            });
        }
        self.tau = tau;
        self.counters.threshold_updates += 1;
        let mut evicted_min: Option<(WeightedItem, f64)> = None;
        let mut kept = Vec::with_capacity(self.reservoir.len());
        for (item, r) in self.reservoir.drain(..) {
            if r < tau {
                kept.push((item, r));
            } else {
                self.rejected.reject(&item);
                if evicted_min.as_ref().map_or(true, |(_, m)| r < *m) {
                    evicted_min = Some((item, r));
                }
            }
        }
        self.reservoir = kept;
        // The smallest evicted priority equals tau under the fixed-k cut.
        if let Some((item, r)) = evicted_min {
            if r == tau {
                self.threshold_item = Some((item, r));
            } else {
                self.threshold_item = None;
            }
        }
        Ok(())
    }

    /// One step of the lazy update with an externally supplied priority.
    pub fn update(&mut self, item: WeightedItem, priority: f64) -> Result<()> {
        self.counters.items_seen += 1;
        if priority < self.tau {
            self.reservoir.push((item, priority));
        } else {
            self.rejected.reject(&item);
        }
        if let LazyRule::VarAdapt(target) = self.rule {
            let next =
                variance_adapted_update(&self.rejected, self.tau, self.counters.items_seen, &target);
            if next < self.tau {
                self.apply_threshold(next)?;
            }
        }
        if self.reservoir.len() > self.capacity {
            let next = self.proposed_threshold();
            self.apply_threshold(next)?;
        }
        Ok(())
    }
}

impl Sampler for LazySampler {
    fn add(&mut self, item: WeightedItem) -> Result<()> {
        item.validate()?;
        let u = self.source.uniform(&item.id);
        let r = self.family.priority_from_uniform(item.weight, u).value;
        self.update(item, r)
    }

    fn len(&self) -> usize {
        self.reservoir.len()
    }

    fn finalize(self) -> Sample {
        let tau = self.tau;
        let family = self.family;
        let mut threshold = ThresholdState::scalar(tau);
        threshold.rejected = self.rejected;
        let threshold_item = self.threshold_item.map(|(item, r)| SampleItem {
            inclusion: family.cdf(item.weight, tau),
            item,
            priority: Some(r),
        });
        threshold.source_id = threshold_item.as_ref().map(|s| s.item.id.clone());
        let items = self
            .reservoir
            .into_iter()
            .map(|(item, r)| SampleItem {
                inclusion: family.cdf(item.weight, tau),
                item,
                priority: Some(r),
            })
            .collect();
        Sample {
            items,
            threshold,
            family,
            seed: self.seed,
            threshold_item,
            counters: self.counters,
        }
    }
}
