use std::fmt;
use std::path::Path;

use rand::RngCore;

use super::ingest::{ingest_path, InputFormat};
use crate::error::{Error, Result};
use crate::family::{gen_priority, PriorityFamily};
use crate::item::WeightedItem;
use crate::rules::ThresholdRule;
use crate::sampler::{
    FastPrioritySampler, FastSamplerConfig, HeapSampler, LazyRule, LazySampler,
    MultiObjectiveSampler, Sample, SampleItem, Sampler, StratifiedSampler,
};
use crate::threshold::{DegreeCap, ThresholdState, VarianceTarget};

/// A fixed finite population used as ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub name: String,
    pub items: Vec<WeightedItem>,
}

impl Population {
    /// `x_i = w_i = i` for `i = 1..=n`.
    pub fn linear(n: usize) -> Self {
        Self::build(format!("linear:{n}"), n, |i| (i, vec![i]))
    }

    /// `linear` items spread round-robin over `s` strata named `s0, s1, ..`.
    pub fn stratified(n: usize, s: usize) -> Self {
        let mut p = Self::linear(n);
        p.name = format!("strata:{n}:{s}");
        for (i, item) in p.items.iter_mut().enumerate() {
            item.stratum = Some(format!("s{}", i % s.max(1)));
        }
        p
    }

    /// `w_i = i^2`, `x_i = i`: most of the weight sits on the last items.
    pub fn skewed(n: usize) -> Self {
        Self::build(format!("skewed:{n}"), n, |i| (i * i, vec![i]))
    }

    /// Two payload columns `[i, n + 1 - i]` with `w_i = 1`, for objectives
    /// that weigh items in opposite orders.
    pub fn pairs(n: usize) -> Self {
        let m = n as f64 + 1.0;
        Self::build(format!("pairs:{n}"), n, |i| (1.0, vec![i, m - i]))
    }

    fn build(name: String, n: usize, f: impl Fn(f64) -> (f64, Vec<f64>)) -> Self {
        let items = (1..=n)
            .map(|i| {
                let (w, x) = f(i as f64);
                WeightedItem::new(i as u64, w, x).expect("positive weight")
            })
            .collect();
        Self { name, items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn total(&self, column: usize) -> f64 {
        self.items.iter().map(|i| i.value.get(column).copied().unwrap_or(0.0)).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.items.iter().map(|i| i.weight).sum()
    }

    /// Unbiased variance `sum (x - mean)^2 / (n - 1)` of the first column.
    pub fn variance(&self) -> f64 {
        let n = self.items.len() as f64;
        let mean = self.total(0) / n;
        self.items.iter().map(|i| (i.x() - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }

    /// `sum_i w_i 1(x_i <= x) / sum_i w_i`.
    pub fn weighted_cdf(&self, x: f64) -> f64 {
        let below: f64 = self.items.iter().filter(|i| i.x() <= x).map(|i| i.weight).sum();
        below / self.total_weight()
    }

    /// Smallest `x_i` whose weighted cdf reaches `q`.
    pub fn weighted_quantile(&self, q: f64) -> f64 {
        let mut xs: Vec<f64> = self.items.iter().map(WeightedItem::x).collect();
        xs.sort_by(f64::total_cmp);
        xs.into_iter()
            .find(|&x| self.weighted_cdf(x) >= q)
            .unwrap_or(f64::NAN)
    }

    /// `linear:<n>`, `strata:<n>:<s>`, `skewed:<n>`, `pairs:<n>`, or
    /// `file:<path>` (JSON Lines items).
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::Unknown {
            kind: "population",
            name: spec.to_owned(),
        };
        if let Some(path) = spec.strip_prefix("file:") {
            let got = ingest_path(Path::new(path), InputFormat::Jsonl)?;
            return Ok(Self {
                name: spec.to_owned(),
                items: got.items,
            });
        }
        let parts: Vec<&str> = spec.split(':').collect();
        let num = |s: &str| s.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(bad);
        match parts.as_slice() {
            ["linear", n] => Ok(Self::linear(num(n)?)),
            ["skewed", n] => Ok(Self::skewed(num(n)?)),
            ["pairs", n] => Ok(Self::pairs(num(n)?)),
            ["strata", n, s] => Ok(Self::stratified(num(n)?, num(s)?)),
            _ => Err(bad()),
        }
    }
}

/// How a replicate turns the population into a sample.
#[derive(Clone, Debug, PartialEq)]
pub enum Design {
    /// Offline: draw every priority, then apply the rule.
    Rule(ThresholdRule),
    Heap(usize),
    Fast(usize),
    Lazy(LazyRule, usize),
    Stratified(usize),
    /// Sample size and the payload column of each objective's weight.
    Multi(usize, Vec<usize>),
}

impl Design {
    /// See [`ThresholdRule::with_paper_formula`].
    pub fn with_paper_formula(self) -> Self {
        match self {
            Design::Rule(r) => Design::Rule(r.with_paper_formula()),
            Design::Lazy(LazyRule::VarAdapt(t), c) => Design::Lazy(
                LazyRule::VarAdapt(VarianceTarget {
                    paper_formula: true,
                    ..t
                }),
                c,
            ),
            other => other,
        }
    }

    /// Highest estimator degree the design supports, before looking at
    /// the sample size.
    pub fn degree_cap(&self) -> DegreeCap {
        match self {
            Design::Rule(r) => r.degree_cap(),
            Design::Multi(..) => DegreeCap::Fixed(1),
            _ => DegreeCap::SampleSize,
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Design::Rule(r) => write!(f, "{r}"),
            Design::Heap(k) => write!(f, "heap:{k}"),
            Design::Fast(k) => write!(f, "fast:{k}"),
            Design::Lazy(LazyRule::FixedK, c) => write!(f, "lazy:fixed_k:{c}"),
            Design::Lazy(LazyRule::Wegman, c) => write!(f, "lazy:wegman:{c}"),
            Design::Lazy(LazyRule::VarAdapt(t), c) => write!(f, "lazy:var_adapt:{}:{c}", t.epsilon),
            Design::Stratified(b) => write!(f, "stratified:{b}"),
            Design::Multi(k, cols) => {
                let cols: Vec<String> = cols.iter().map(ToString::to_string).collect();
                write!(f, "multi:{k}:{}", cols.join(","))
            }
        }
    }
}

impl std::str::FromStr for Design {
    type Err = Error;

    /// `heap:<k>`, `fast:<k>`, `lazy:fixed_k:<cap>`, `lazy:wegman:<cap>`,
    /// `lazy:var_adapt:<eps>:<cap>`, `stratified:<budget>`,
    /// `multi:<k>:<col>,<col>..`, or any threshold rule.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Unknown {
            kind: "sampler",
            name: s.to_owned(),
        };
        let num = |v: &str| v.parse::<usize>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["heap", k] => Ok(Design::Heap(num(k)?)),
            ["fast", k] => Ok(Design::Fast(num(k)?)),
            ["lazy", "fixed_k", c] => Ok(Design::Lazy(LazyRule::FixedK, num(c)?)),
            ["lazy", "wegman", c] => Ok(Design::Lazy(LazyRule::Wegman, num(c)?)),
            ["lazy", "var_adapt", eps, c] => {
                let eps = eps.parse::<f64>().map_err(|_| bad())?;
                Ok(Design::Lazy(LazyRule::VarAdapt(VarianceTarget::new(eps)?), num(c)?))
            }
            ["stratified", b] => Ok(Design::Stratified(num(b)?)),
            ["multi", k, cols] => Ok(Design::Multi(
                num(k)?,
                cols.split(',').map(num).collect::<Result<_>>()?,
            )),
            _ => s.parse::<ThresholdRule>().map(Design::Rule),
        }
    }
}

fn run_sampler<S: Sampler>(mut sampler: S, items: &[WeightedItem]) -> Result<Sample> {
    for item in items {
        sampler.add(item.clone())?;
    }
    Ok(sampler.finalize())
}

/// Offline rule application: every item draws a priority, the rule picks
/// a threshold, and items strictly below it are retained.
pub fn rule_sample<R: RngCore + ?Sized>(
    rule: &ThresholdRule,
    items: &[WeightedItem],
    family: PriorityFamily,
    rng: &mut R,
) -> Result<Sample> {
    let priorities = items
        .iter()
        .map(|i| gen_priority(i, &family, rng).map(|p| p.value))
        .collect::<Result<Vec<f64>>>()?;
    let tau = rule.threshold(&priorities, items);
    let mut threshold = ThresholdState::scalar(tau);
    threshold.degree_cap = rule.degree_cap();
    let mut kept = Vec::new();
    let mut source = None;
    for (item, &r) in items.iter().zip(&priorities) {
        if r < tau {
            kept.push(SampleItem {
                inclusion: family.cdf(item.weight, tau),
                item: item.clone(),
                priority: Some(r),
            });
        } else {
            threshold.rejected.reject(item);
            if r == tau && source.is_none() {
                source = Some(SampleItem {
                    inclusion: family.cdf(item.weight, tau),
                    item: item.clone(),
                    priority: Some(r),
                });
            }
        }
    }
    threshold.source_id = source.as_ref().map(|s| s.item.id.clone());
    Ok(Sample {
        items: kept,
        threshold,
        family,
        seed: 0,
        threshold_item: source,
        counters: crate::sampler::Counters {
            items_seen: items.len() as u64,
            ..Default::default()
        },
    })
}

/// One replicate of `design` on `population`.
pub fn draw_sample<R: RngCore + ?Sized>(
    design: &Design,
    population: &Population,
    family: PriorityFamily,
    rng: &mut R,
) -> Result<Sample> {
    let items = &population.items;
    match design {
        Design::Rule(rule) => rule_sample(rule, items, family, rng),
        Design::Heap(k) => run_sampler(HeapSampler::new(*k, family, rng.next_u64())?, items),
        Design::Fast(k) => {
            if family != PriorityFamily::UniformScaled {
                return Err(Error::Config("the fast reservoir supports the uniform family only".into()));
            }
            run_sampler(FastPrioritySampler::new(FastSamplerConfig::new(*k), rng.next_u64())?, items)
        }
        Design::Lazy(rule, cap) => run_sampler(LazySampler::new(*rule, *cap, family, rng.next_u64())?, items),
        Design::Stratified(budget) => {
            run_sampler(StratifiedSampler::new(*budget, family, rng.next_u64())?, items)
        }
        Design::Multi(k, cols) => {
            let objectives = cols.iter().map(|&c| (c, family)).collect();
            run_sampler(MultiObjectiveSampler::new(*k, objectives, rng.next_u64())?, items)
        }
    }
}
