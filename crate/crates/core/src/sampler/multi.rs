use std::collections::{BinaryHeap, HashMap};

use super::{Counters, Ranked, Sample, SampleItem, Sampler, UniformSource};
use crate::error::{Error, Result};
use crate::family::PriorityFamily;
use crate::item::WeightedItem;
use crate::threshold::{DegreeCap, ObjectiveThreshold, RejectedSummary, ThresholdScope, ThresholdState};

/// Multi-objective priority sampler. Each item draws one uniform `U_i`
/// shared by every objective; objective `j` ranks items by
/// `F_j^{-1}(U_i)` under its own weight column and keeps a fixed-size
/// bottom-k. The sample is the union, i.e. a threshold on `U_i` at
/// `max_j F_j(tau_j)`, which only supports degree-1 estimators.
#[derive(Clone, Debug)]
pub struct MultiObjectiveSampler {
    k: usize,
    objectives: Vec<(usize, PriorityFamily)>,
    seed: u64,
    source: UniformSource,
    heaps: Vec<BinaryHeap<Ranked<u64>>>,
    store: HashMap<u64, (WeightedItem, usize)>,
    rejected: RejectedSummary,
    counters: Counters,
}

impl MultiObjectiveSampler {
    /// `objectives` lists `(payload column, family)` pairs; objective `j`
    /// weighs an item by `value[column]`.
    pub fn new(k: usize, objectives: Vec<(usize, PriorityFamily)>, seed: u64) -> Result<Self> {
        Self::with_source(k, objectives, seed, UniformSource::stream(seed))
    }

    pub fn with_source(
        k: usize,
        objectives: Vec<(usize, PriorityFamily)>,
        seed: u64,
        source: UniformSource,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidSampleSize("k must be at least 1".into()));
        }
        if objectives.is_empty() {
            return Err(Error::Config("at least one objective is required".into()));
        }
        Ok(Self {
            k,
            heaps: vec![BinaryHeap::new(); objectives.len()],
            objectives,
            seed,
            source,
            store: HashMap::new(),
            rejected: RejectedSummary::default(),
            counters: Counters::default(),
        })
    }

    fn release(&mut self, slot: u64) {
        let entry = self.store.get_mut(&slot).expect("stored slot");
        entry.1 -= 1;
        if entry.1 == 0 {
            let (item, _) = self.store.remove(&slot).expect("stored slot");
            self.rejected.reject(&item);
        }
    }

    /// Offer `item` with the shared uniform `u`.
    pub fn add_with_uniform(&mut self, item: WeightedItem, u: f64) -> Result<()> {
        let slot = self.counters.items_seen;
        self.counters.items_seen += 1;
        let mut refs = 0;
        let mut released = Vec::new();
        for (j, &(column, family)) in self.objectives.iter().enumerate() {
            let w = item.value.get(column).copied().unwrap_or(0.0);
            if !(w > 0.0 && w.is_finite()) {
                continue;
            }
            let r = family.priority_from_uniform(w, u).value;
            let heap = &mut self.heaps[j];
            if heap.len() == self.k + 1 && heap.peek().is_some_and(|t| r >= t.priority) {
                continue;
            }
            heap.push(Ranked {
                priority: r,
                arrival: slot,
                payload: slot,
            });
            self.counters.heap_ops += 1;
            refs += 1;
            if heap.len() > self.k + 1 {
                let out = heap.pop().expect("non-empty");
                self.counters.heap_ops += 1;
                self.counters.threshold_updates += 1;
                if out.payload == slot {
                    refs -= 1;
                } else {
                    released.push(out.payload);
                }
            }
        }
        if refs > 0 {
            self.store.insert(slot, (item, refs));
        } else {
            self.rejected.reject(&item);
        }
        for s in released {
            self.release(s);
        }
        Ok(())
    }
}

impl Sampler for MultiObjectiveSampler {
    fn add(&mut self, item: WeightedItem) -> Result<()> {
        item.validate()?;
        let u = self.source.uniform(&item.id);
        self.add_with_uniform(item, u)
    }

    fn len(&self) -> usize {
        self.store.len()
    }

    fn finalize(self) -> Sample {
        let thresholds: Vec<ObjectiveThreshold> = self
            .objectives
            .iter()
            .zip(&self.heaps)
            .map(|(&(column, family), heap)| ObjectiveThreshold {
                column,
                family,
                tau: if heap.len() == self.k + 1 {
                    heap.peek().map_or(f64::INFINITY, |e| e.priority)
                } else {
                    f64::INFINITY
                },
            })
            .collect();
        let mut keep: Vec<u64> = self
            .heaps
            .iter()
            .zip(&thresholds)
            .flat_map(|(heap, t)| heap.iter().filter(move |e| e.priority < t.tau).map(|e| e.payload))
            .collect();
        keep.sort_unstable();
        keep.dedup();
        let mut threshold = ThresholdState {
            tau: ThresholdScope::Objectives(thresholds),
            rejected: self.rejected,
            source_id: None,
            degree_cap: DegreeCap::Fixed(1),
        };
        let mut store = self.store;
        let mut items = Vec::with_capacity(keep.len());
        for slot in keep {
            let (item, _) = store.remove(&slot).expect("kept slot is stored");
            let inclusion = threshold.inclusion(&PriorityFamily::UniformScaled, &item);
            items.push(SampleItem {
                item,
                inclusion,
                priority: None,
            });
        }
        for (_, (item, _)) in store {
            threshold.rejected.reject(&item);
        }
        Sample {
            items,
            threshold,
            family: PriorityFamily::UniformScaled,
            seed: self.seed,
            threshold_item: None,
            counters: self.counters,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{open_unit, seeded};
    use crate::sampler::HeapSampler;

    #[test]
    fn single_objective_matches_fixed_k() {
        let mut rng = seeded(21);
        for round in 0..50u64 {
            let mut multi =
                MultiObjectiveSampler::new(3, vec![(0, PriorityFamily::UniformScaled)], 0).unwrap();
            let mut heap = HeapSampler::new(3, PriorityFamily::UniformScaled, 0).unwrap();
            for i in 0..(5 + round % 20) {
                let w = 0.5 + open_unit(&mut rng);
                let u = open_unit(&mut rng);
                let item = WeightedItem::scalar(i, w, w).unwrap();
                heap.add_with_priority(item.clone(), u / w);
                multi.add_with_uniform(item, u).unwrap();
            }
            let mut a: Vec<_> = multi.finalize().items.into_iter().map(|s| s.item.id).collect();
            let mut b: Vec<_> = heap.finalize().items.into_iter().map(|s| s.item.id).collect();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn union_condition() {
        // Objective 0 favours item 1, objective 1 favours item 2.
        let fam = PriorityFamily::UniformScaled;
        let mut s = MultiObjectiveSampler::new(1, vec![(0, fam), (1, fam)], 0).unwrap();
        let mk = |i: u64, a: f64, b: f64| WeightedItem::new(i, 1.0, vec![a, b]).unwrap();
        s.add_with_uniform(mk(0, 1.0, 1.0), 0.6).unwrap();
        s.add_with_uniform(mk(1, 10.0, 0.1), 0.5).unwrap();
        s.add_with_uniform(mk(2, 0.1, 10.0), 0.5).unwrap();
        s.add_with_uniform(mk(3, 1.0, 1.0), 0.01).unwrap();
        let out = s.finalize();
        let ids: Vec<_> = out.items.iter().map(|s| s.item.id.clone()).collect();
        assert!(ids.contains(&3u64.into()));
        assert_eq!(out.threshold.degree_cap, DegreeCap::Fixed(1));
        assert!(out.check_consistency().is_ok());
        for s in &out.items {
            assert!(s.inclusion > 0.0 && s.inclusion <= 1.0);
        }
    }

    #[test]
    fn store_holds_only_live_items() {
        let fam = PriorityFamily::UniformScaled;
        let mut s = MultiObjectiveSampler::new(2, vec![(0, fam), (1, fam)], 5).unwrap();
        let mut rng = seeded(1);
        for i in 0..2000 {
            let item =
                WeightedItem::new(i, 1.0, vec![open_unit(&mut rng), open_unit(&mut rng)]).unwrap();
            s.add(item).unwrap();
            assert!(s.len() <= 2 * 3);
        }
    }
}
