use std::collections::BinaryHeap;

use super::{Counters, Ranked, Sample, SampleItem, Sampler, UniformSource};
use crate::error::{Error, Result};
use crate::family::PriorityFamily;
use crate::item::WeightedItem;
use crate::threshold::{RejectedSummary, ThresholdState};

/// Reference priority sampler: keeps the `k + 1` smallest priorities in a
/// max-heap. The largest retained priority is the threshold and the
/// other `k` items form the sample.
#[derive(Clone, Debug)]
pub struct HeapSampler {
    k: usize,
    family: PriorityFamily,
    seed: u64,
    source: UniformSource,
    heap: BinaryHeap<Ranked<WeightedItem>>,
    rejected: RejectedSummary,
    counters: Counters,
}

impl HeapSampler {
    pub fn new(k: usize, family: PriorityFamily, seed: u64) -> Result<Self> {
        Self::with_source(k, family, seed, UniformSource::stream(seed))
    }

    pub fn with_source(
        k: usize,
        family: PriorityFamily,
        seed: u64,
        source: UniformSource,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidSampleSize("k must be at least 1".into()));
        }
        Ok(Self {
            k,
            family,
            seed,
            source,
            heap: BinaryHeap::with_capacity(k + 2),
            rejected: RejectedSummary::default(),
            counters: Counters::default(),
        })
    }

    /// Offer `item` with an externally supplied priority.
    pub fn add_with_priority(&mut self, item: WeightedItem, priority: f64) {
        let arrival = self.counters.items_seen;
        self.counters.items_seen += 1;
        if self.heap.len() == self.k + 1 {
            let top = self.heap.peek().expect("heap is full");
            if priority.total_cmp(&top.priority).then(arrival.cmp(&top.arrival)).is_ge() {
                self.rejected.reject(&item);
                return;
            }
        }
        self.heap.push(Ranked {
            priority,
            arrival,
            payload: item,
        });
        self.counters.heap_ops += 1;
        if self.heap.len() > self.k + 1 {
            let out = self.heap.pop().expect("non-empty");
            self.counters.heap_ops += 1;
            self.counters.threshold_updates += 1;
            self.rejected.reject(&out.payload);
        }
    }

    /// Current threshold: the largest retained priority once `k + 1`
    /// items are held, `+inf` before that.
    pub fn tau(&self) -> f64 {
        if self.heap.len() == self.k + 1 {
            self.heap.peek().map_or(f64::INFINITY, |e| e.priority)
        } else {
            f64::INFINITY
        }
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// Sampled items with their priorities, excluding the threshold item.
    pub fn retained(&self) -> impl Iterator<Item = (&WeightedItem, f64)> {
        let tau = self.tau();
        self.heap
            .iter()
            .filter(move |e| e.priority < tau)
            .map(|e| (&e.payload, e.priority))
    }
}

impl Sampler for HeapSampler {
    fn add(&mut self, item: WeightedItem) -> Result<()> {
        item.validate()?;
        let u = self.source.uniform(&item.id);
        let r = self.family.priority_from_uniform(item.weight, u).value;
        self.add_with_priority(item, r);
        Ok(())
    }

    fn len(&self) -> usize {
        self.heap.len().min(self.k)
    }

    fn finalize(self) -> Sample {
        let tau = self.tau();
        let mut entries = self.heap.into_sorted_vec();
        let mut threshold = ThresholdState::scalar(tau);
        let mut rejected = self.rejected;
        let threshold_item = if entries.len() == self.k + 1 {
            let t = entries.pop().expect("k + 1 entries");
            rejected.reject(&t.payload);
            threshold.source_id = Some(t.payload.id.clone());
            Some(SampleItem {
                inclusion: self.family.cdf(t.payload.weight, tau),
                item: t.payload,
                priority: Some(t.priority),
            })
        } else {
            None
        };
        threshold.rejected = rejected;
        let family = self.family;
        let items = entries
            .into_iter()
            .map(|e| SampleItem {
                inclusion: family.cdf(e.payload.weight, tau),
                item: e.payload,
                priority: Some(e.priority),
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{open_unit, seeded};
    use crate::threshold::fixed_k_threshold;

    fn item(i: u64) -> WeightedItem {
        WeightedItem::scalar(i, 1.0, i as f64).unwrap()
    }

    #[test]
    fn keeps_everything_when_short() {
        let mut s = HeapSampler::new(3, PriorityFamily::UniformScaled, 1).unwrap();
        for i in 0..4 {
            s.add(item(i)).unwrap();
        }
        let out = s.finalize();
        // n = k + 1: all retained, one of them as the threshold item
        assert_eq!(out.len() + usize::from(out.threshold_item.is_some()), 4);
        let mut s = HeapSampler::new(5, PriorityFamily::UniformScaled, 1).unwrap();
        for i in 0..4 {
            s.add(item(i)).unwrap();
        }
        let out = s.finalize();
        assert_eq!(out.len(), 4);
        assert_eq!(out.threshold.scalar_tau(), Some(f64::INFINITY));
        assert!(out.items.iter().all(|s| s.inclusion == 1.0));
    }

    #[test]
    fn order_statistics_example() {
        let mut s = HeapSampler::new(2, PriorityFamily::UniformScaled, 1).unwrap();
        for (i, r) in [0.1, 0.4, 0.2, 0.9].into_iter().enumerate() {
            s.add_with_priority(item(i as u64), r);
        }
        let out = s.finalize();
        let mut kept: Vec<f64> = out.items.iter().map(|s| s.priority.unwrap()).collect();
        kept.sort_by(f64::total_cmp);
        assert_eq!(kept, vec![0.1, 0.2]);
        assert_eq!(out.threshold.scalar_tau(), Some(0.4));
        assert_eq!(out.threshold_item.as_ref().unwrap().item.id, 1u64.into());
        assert_eq!(out.threshold.rejected.count, 2);
        assert!(out.check_consistency().is_ok());
    }

    #[test]
    fn matches_offline_fixed_k() {
        let mut rng = seeded(99);
        for stream in 0..1000u64 {
            let k = 1 + (stream % 7) as usize;
            let n = (stream % 23) as usize + 1;
            let r: Vec<f64> = (0..n).map(|_| open_unit(&mut rng)).collect();
            let mut s = HeapSampler::new(k, PriorityFamily::UniformScaled, 0).unwrap();
            for (i, &p) in r.iter().enumerate() {
                s.add_with_priority(item(i as u64), p);
            }
            assert_eq!(s.tau(), fixed_k_threshold(&r, k).unwrap());
        }
    }

    #[test]
    fn ties_break_by_arrival() {
        let mut s = HeapSampler::new(1, PriorityFamily::UniformScaled, 1).unwrap();
        for i in 0..3 {
            s.add_with_priority(item(i), 0.5);
        }
        let out = s.finalize();
        assert_eq!(out.items[0].item.id, 0u64.into());
        assert_eq!(out.threshold_item.as_ref().unwrap().item.id, 1u64.into());
    }
}
