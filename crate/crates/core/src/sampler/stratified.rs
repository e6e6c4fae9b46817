use std::collections::{BTreeMap, BinaryHeap};

use super::{Counters, Ranked, Sample, SampleItem, Sampler, UniformSource};
use crate::error::{Error, Result};
use crate::family::PriorityFamily;
use crate::item::WeightedItem;
use crate::threshold::{RejectedSummary, ThresholdScope, ThresholdState};

/// Label used for items without a stratum.
pub const DEFAULT_STRATUM: &str = "_";

#[derive(Clone, Debug)]
struct Stratum {
    tau: f64,
    seen: u64,
    heap: BinaryHeap<Ranked<WeightedItem>>,
}

/// Stratified sampler under a total memory budget. Each stratum keeps its
/// own threshold; on overflow the most over-allocated stratum (relative
/// to proportional allocation) drops its largest priority, which becomes
/// that stratum's new threshold.
#[derive(Clone, Debug)]
pub struct StratifiedSampler {
    budget: usize,
    family: PriorityFamily,
    seed: u64,
    source: UniformSource,
    strata: BTreeMap<String, Stratum>,
    total: usize,
    rejected: RejectedSummary,
    counters: Counters,
}

impl StratifiedSampler {
    pub fn new(budget: usize, family: PriorityFamily, seed: u64) -> Result<Self> {
        if budget == 0 {
            return Err(Error::InvalidSampleSize("budget must be at least 1".into()));
        }
        Ok(Self {
            budget,
            family,
            seed,
            source: UniformSource::stream(seed),
            strata: BTreeMap::new(),
            total: 0,
            rejected: RejectedSummary::default(),
            counters: Counters::default(),
        })
    }

    /// Current `(size, threshold)` per stratum.
    pub fn allocation(&self) -> BTreeMap<&str, (usize, f64)> {
        self.strata
            .iter()
            .map(|(k, s)| (k.as_str(), (s.heap.len(), s.tau)))
            .collect()
    }

    /// Stratum maximizing `k_s - (k_tot - 1) n_s / t`; ties go to the
    /// smallest label.
    fn most_overallocated(&self) -> &str {
        let t = self.counters.items_seen as f64;
        let k_tot = self.total as f64;
        let mut best: Option<(&str, f64)> = None;
        for (label, s) in &self.strata {
            if s.heap.is_empty() {
                continue;
            }
            let excess = s.heap.len() as f64 - (k_tot - 1.0) * s.seen as f64 / t;
            if best.map_or(true, |(_, b)| excess > b) {
                best = Some((label, excess));
            }
        }
        best.expect("over budget implies a non-empty stratum").0
    }

    pub fn add_with_priority(&mut self, mut item: WeightedItem, priority: f64) -> Result<()> {
        let label = item
            .stratum
            .get_or_insert_with(|| DEFAULT_STRATUM.to_owned())
            .clone();
        if !self.strata.contains_key(&label) {
            if self.strata.len() + 1 > self.budget {
                return Err(Error::BudgetExhausted {
                    budget: self.budget,
                    strata: self.strata.len() + 1,
                });
            }
            self.strata.insert(
                label.clone(),
                Stratum {
                    tau: 1.0,
                    seen: 0,
                    heap: BinaryHeap::new(),
                },
            );
        }
        let arrival = self.counters.items_seen;
        self.counters.items_seen += 1;
        let stratum = self.strata.get_mut(&label).expect("inserted above");
        stratum.seen += 1;
        if priority < stratum.tau {
            stratum.heap.push(Ranked {
                priority,
                arrival,
                payload: item,
            });
            self.counters.heap_ops += 1;
            self.total += 1;
        } else {
            self.rejected.reject(&item);
        }
        while self.total > self.budget {
            let label = self.most_overallocated().to_owned();
            let stratum = self.strata.get_mut(&label).expect("chosen from map");
            let out = stratum.heap.pop().expect("non-empty stratum");
            stratum.tau = out.priority;
            debug_assert_eq!(stratum.tau, out.priority);
            self.counters.heap_ops += 1;
            self.counters.threshold_updates += 1;
            self.total -= 1;
            self.rejected.reject(&out.payload);
        }
        Ok(())
    }
}

impl Sampler for StratifiedSampler {
    fn add(&mut self, item: WeightedItem) -> Result<()> {
        item.validate()?;
        let u = self.source.uniform(&item.id);
        let r = self.family.priority_from_uniform(item.weight, u).value;
        self.add_with_priority(item, r)
    }

    fn len(&self) -> usize {
        self.total
    }

    fn finalize(self) -> Sample {
        let family = self.family;
        let taus: BTreeMap<String, f64> =
            self.strata.iter().map(|(k, s)| (k.clone(), s.tau)).collect();
        let mut items = Vec::with_capacity(self.total);
        for (_, s) in self.strata {
            let tau = s.tau;
            items.extend(s.heap.into_sorted_vec().into_iter().map(|e| SampleItem {
                inclusion: family.cdf(e.payload.weight, tau),
                item: e.payload,
                priority: Some(e.priority),
            }));
        }
        let mut threshold = ThresholdState::strata(taus);
        threshold.rejected = self.rejected;
        debug_assert!(matches!(threshold.tau, ThresholdScope::Strata(_)));
        Sample {
            items,
            threshold,
            family,
            seed: self.seed,
            threshold_item: None,
            counters: self.counters,
        }
    }
}
