//! Fast priority reservoir for `R = U / w` priorities.
//!
//! Items whose whole priority range lies below the threshold (`1/w < tau`)
//! are "heavy" and kept with their priorities, indexed both by priority
//! (for eviction) and by weight (for demotion). Every other
//! retained item sits in a plain reservoir without a stored priority:
//! conditional on `R < tau <= 1/w` its priority is Uniform(0, tau), so the
//! reservoir's largest priority can be drawn directly as
//! `tau * Beta(m, 1)` and the evicted slot chosen uniformly at random.
//! Once no heavy items remain and a registered weight bound rules out new
//! ones, the sampler switches to a constant-work steady-state update.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng;

use super::{Counters, Sample, SampleItem, Sampler};
use crate::error::{Error, Result};
use crate::family::PriorityFamily;
use crate::item::WeightedItem;
use crate::rng::{beta_max, index, open_unit, seeded, SamplerRng};
use crate::threshold::{RejectedSummary, ThresholdState};

/// Ordering key `(value, arrival)`.
#[derive(Clone, Copy, Debug)]
struct Key {
    value: f64,
    arrival: u64,
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(self.arrival.cmp(&other.arrival))
    }
}

/// Heavy items keyed by priority, with a weight index mapping
/// `(weight, arrival)` to the priority.
#[derive(Clone, Debug, Default)]
struct HeavySet {
    by_priority: BTreeMap<Key, WeightedItem>,
    by_weight: BTreeMap<Key, f64>,
}

impl HeavySet {
    fn len(&self) -> usize {
        self.by_priority.len()
    }

    fn is_empty(&self) -> bool {
        self.by_priority.is_empty()
    }

    fn insert(&mut self, priority: f64, arrival: u64, item: WeightedItem) {
        self.by_weight.insert(
            Key {
                value: item.weight,
                arrival,
            },
            priority,
        );
        self.by_priority.insert(
            Key {
                value: priority,
                arrival,
            },
            item,
        );
    }

    fn max_priority(&self) -> Option<f64> {
        self.by_priority.last_key_value().map(|(k, _)| k.value)
    }

    fn pop_max(&mut self) -> Option<WeightedItem> {
        let (key, item) = self.by_priority.pop_last()?;
        self.by_weight.remove(&Key {
            value: item.weight,
            arrival: key.arrival,
        });
        Some(item)
    }

    /// Removes the lightest item if it is no longer heavy under `tau`.
    fn pop_light(&mut self, tau: f64) -> Option<WeightedItem> {
        let (key, _) = self.by_weight.first_key_value()?;
        if 1.0 / key.value < tau {
            return None;
        }
        let (key, priority) = self.by_weight.pop_first()?;
        self.by_priority.remove(&Key {
            value: priority,
            arrival: key.arrival,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FastSamplerConfig {
    pub k: usize,
    /// Known upper bound on item weights. Enables the automatic switch
    /// to steady state once `1/bound >= tau`.
    pub weight_bound: Option<f64>,
    /// Allow the automatic switch.
    pub auto_steady: bool,
}

impl FastSamplerConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            weight_bound: None,
            auto_steady: true,
        }
    }

    pub fn with_weight_bound(mut self, bound: f64) -> Self {
        self.weight_bound = Some(bound);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerMode {
    WithHeavyItems,
    SteadyState,
}

#[derive(Clone, Debug)]
pub struct FastPrioritySampler {
    config: FastSamplerConfig,
    seed: u64,
    rng: SamplerRng,
    tau: f64,
    reservoir: Vec<WeightedItem>,
    heavy: HeavySet,
    mode: SamplerMode,
    last_evicted: Option<WeightedItem>,
    rejected: RejectedSummary,
    counters: Counters,
    heap_ops_at_steady: u64,
}

impl FastPrioritySampler {
    pub fn new(config: FastSamplerConfig, seed: u64) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::InvalidSampleSize("k must be at least 1".into()));
        }
        if let Some(b) = config.weight_bound {
            if !(b > 0.0) {
                return Err(Error::InvalidWeight(b));
            }
        }
        Ok(Self {
            config,
            seed,
            rng: seeded(seed),
            tau: f64::INFINITY,
            reservoir: Vec::with_capacity(config.k + 1),
            heavy: HeavySet::default(),
            mode: SamplerMode::WithHeavyItems,
            last_evicted: None,
            rejected: RejectedSummary::default(),
            counters: Counters::default(),
            heap_ops_at_steady: 0,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn mode(&self) -> SamplerMode {
        self.mode
    }

    pub fn heavy_len(&self) -> usize {
        self.heavy.len()
    }

    pub fn reservoir_len(&self) -> usize {
        self.reservoir.len()
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// Items currently held, with the stored priority of heavy items.
    /// Reservoir items carry no priority: given the threshold it is
    /// Uniform(0, tau).
    pub fn retained(&self) -> impl Iterator<Item = (&WeightedItem, Option<f64>)> {
        self.heavy
            .by_priority
            .iter()
            .map(|(key, item)| (item, Some(key.value)))
            .chain(self.reservoir.iter().map(|i| (i, None)))
    }

    /// Heap operations performed since entering steady state (0 before).
    pub fn heap_ops_since_steady(&self) -> u64 {
        match self.mode {
            SamplerMode::SteadyState => self.counters.heap_ops - self.heap_ops_at_steady,
            SamplerMode::WithHeavyItems => 0,
        }
    }

    /// Manual switch to the steady-state update. Fails while heavy items
    /// are held or before the reservoir has filled.
    pub fn force_steady_state(&mut self) -> Result<()> {
        if !self.heavy.is_empty() || self.reservoir.len() != self.config.k {
            return Err(Error::Config(format!(
                "steady state needs an empty heavy set and a full reservoir ({} heavy, {} of {})",
                self.heavy.len(),
                self.reservoir.len(),
                self.config.k
            )));
        }
        self.enter_steady();
        Ok(())
    }

    fn enter_steady(&mut self) {
        self.mode = SamplerMode::SteadyState;
        self.heap_ops_at_steady = self.counters.heap_ops;
    }

    fn evict(&mut self, item: WeightedItem) {
        self.rejected.reject(&item);
        self.last_evicted = Some(item);
    }

    /// Heavy-item update with an explicit uniform `u`.
    fn add_with_heavy(&mut self, item: WeightedItem, u: f64) {
        let k = self.config.k;
        let r = u / item.weight;
        if 1.0 / item.weight < self.tau {
            let arrival = self.counters.items_seen - 1;
            self.heavy.insert(r, arrival, item);
            self.counters.heap_ops += 1;
        } else if r < self.tau {
            self.reservoir.push(item);
        } else {
            self.rejected.reject(&item);
            return;
        }

        if self.reservoir.len() + self.heavy.len() > k {
            let tau_r = self.tau * beta_max(self.reservoir.len(), &mut self.rng);
            let tau_h = self.heavy.max_priority().unwrap_or(0.0);
            self.counters.threshold_updates += 1;
            if tau_r > tau_h {
                self.tau = tau_r;
                let slot = index(self.reservoir.len(), &mut self.rng);
                let out = self.reservoir.swap_remove(slot);
                self.evict(out);
            } else {
                self.tau = tau_h;
                let out = self.heavy.pop_max().expect("heavy max exists");
                self.counters.heap_ops += 1;
                self.evict(out);
            }
            self.demote_heavy();
        }

        if self.config.auto_steady && self.heavy.is_empty() && self.reservoir.len() == k {
            if let Some(bound) = self.config.weight_bound {
                if 1.0 / bound >= self.tau {
                    self.enter_steady();
                }
            }
        }
    }

    /// Heavy items whose range no longer clears the threshold rejoin the
    /// reservoir; their priorities, conditioned on `R < tau <= 1/w`, are
    /// again Uniform(0, tau) and can be dropped.
    fn demote_heavy(&mut self) {
        while let Some(item) = self.heavy.pop_light(self.tau) {
            self.counters.heap_ops += 1;
            self.reservoir.push(item);
        }
    }

    /// Steady-state update: with `k + 1` iid Uniform(0, tau) priorities
    /// below the old threshold, the new item is the one evicted with
    /// probability `1/(k+1)`, and the new threshold is their maximum,
    /// `tau * Beta(k + 1, 1)`.
    fn add_steady(&mut self, item: WeightedItem, u: f64) -> Result<()> {
        if 1.0 / item.weight < self.tau {
            return Err(Error::HeavyItemUnderSteadyState {
                weight: item.weight,
                tau: self.tau,
            });
        }
        if u / item.weight >= self.tau {
            self.rejected.reject(&item);
            return Ok(());
        }
        let k = self.config.k;
        if self.rng.random_range(0..=k) < k {
            let slot = index(k, &mut self.rng);
            let out = std::mem::replace(&mut self.reservoir[slot], item);
            self.evict(out);
        } else {
            self.evict(item);
        }
        self.tau *= beta_max(k + 1, &mut self.rng);
        self.counters.threshold_updates += 1;
        Ok(())
    }

    /// Offer `item` with an externally drawn uniform (tests replay exact
    /// streams through this).
    pub fn add_with_uniform(&mut self, item: WeightedItem, u: f64) -> Result<()> {
        item.validate()?;
        self.counters.items_seen += 1;
        match self.mode {
            SamplerMode::WithHeavyItems => {
                self.add_with_heavy(item, u);
                Ok(())
            }
            SamplerMode::SteadyState => self.add_steady(item, u),
        }
    }
}

impl Sampler for FastPrioritySampler {
    fn add(&mut self, item: WeightedItem) -> Result<()> {
        let u = open_unit(&mut self.rng);
        self.add_with_uniform(item, u)
    }

    fn len(&self) -> usize {
        self.reservoir.len() + self.heavy.len()
    }

    fn finalize(self) -> Sample {
        let tau = self.tau;
        let family = PriorityFamily::UniformScaled;
        let mut items: Vec<SampleItem> = self
            .heavy
            .by_priority
            .into_iter()
            .map(|(key, item)| SampleItem {
                inclusion: family.cdf(item.weight, tau),
                item,
                priority: Some(key.value),
            })
            .collect();
        items.extend(self.reservoir.into_iter().map(|item| SampleItem {
            inclusion: family.cdf(item.weight, tau),
            item,
            priority: None,
        }));
        let mut threshold = ThresholdState::scalar(tau);
        threshold.rejected = self.rejected;
        let threshold_item = if tau.is_finite() {
            self.last_evicted.map(|item| SampleItem {
                inclusion: family.cdf(item.weight, tau),
                item,
                priority: Some(tau),
            })
        } else {
            None
        };
        threshold.source_id = threshold_item.as_ref().map(|s| s.item.id.clone());
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
