//! Threshold state and the primitive threshold rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::PriorityFamily;
use crate::item::{ItemId, WeightedItem};
use crate::stats::RunningMoments;

/// Default floor on the variance-adapted sample size.
pub const DEFAULT_K_MIN: f64 = 30.0;

/// Highest estimator degree a threshold supports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeCap {
    /// Any degree up to the number of retained items.
    SampleSize,
    Fixed(usize),
}

impl DegreeCap {
    pub fn effective(&self, sample_size: usize) -> usize {
        match *self {
            DegreeCap::SampleSize => sample_size,
            DegreeCap::Fixed(d) => d.min(sample_size),
        }
    }

    pub fn min(self, other: Self) -> Self {
        match (self, other) {
            (DegreeCap::SampleSize, c) | (c, DegreeCap::SampleSize) => c,
            (DegreeCap::Fixed(a), DegreeCap::Fixed(b)) => DegreeCap::Fixed(a.min(b)),
        }
    }
}

/// Per-objective threshold of a multi-objective sample. Objective `j`
/// weighs item `i` by `value[column]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveThreshold {
    pub column: usize,
    pub family: PriorityFamily,
    #[serde(with = "crate::serde_inf")]
    pub tau: f64,
}

impl ObjectiveThreshold {
    pub fn objective_weight(&self, item: &WeightedItem) -> f64 {
        item.value.get(self.column).copied().unwrap_or(0.0).max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScope {
    Scalar(#[serde(with = "crate::serde_inf")] f64),
    Strata(#[serde(with = "crate::serde_inf::map")] BTreeMap<String, f64>),
    Objectives(Vec<ObjectiveThreshold>),
}

impl ThresholdScope {
    fn key_shape(&self) -> String {
        match self {
            ThresholdScope::Scalar(_) => "scalar".into(),
            ThresholdScope::Strata(m) => format!("strata{:?}", m.keys().collect::<Vec<_>>()),
            ThresholdScope::Objectives(o) => format!("{} objectives", o.len()),
        }
    }

    fn is_unbounded_scalar(&self) -> bool {
        matches!(self, ThresholdScope::Scalar(t) if *t == f64::INFINITY)
    }
}

/// Summary of rejected and evicted items. Samplers only feed it items
/// that fell at or above the threshold, never retained priorities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectedSummary {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_stratum: BTreeMap<String, u64>,
}

impl RejectedSummary {
    pub fn reject(&mut self, item: &WeightedItem) {
        let mut m = self.moments();
        m.push(item.x());
        self.set_moments(m);
        if let Some(s) = &item.stratum {
            *self.per_stratum.entry(s.clone()).or_default() += 1;
        }
    }

    pub fn moments(&self) -> RunningMoments {
        RunningMoments::from_parts(self.count, self.mean, self.m2)
    }

    fn set_moments(&mut self, m: RunningMoments) {
        self.count = m.count;
        self.mean = m.mean;
        self.m2 = m.m2();
    }

    pub fn std_dev(&self) -> f64 {
        self.moments().std_dev()
    }

    pub fn merge(&self, other: &Self) -> Self {
        let mut out = Self::default();
        out.set_moments(self.moments().merge(&other.moments()));
        out.per_stratum = self.per_stratum.clone();
        for (k, v) in &other.per_stratum {
            *out.per_stratum.entry(k.clone()).or_default() += v;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdState {
    pub tau: ThresholdScope,
    pub rejected: RejectedSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<ItemId>,
    pub degree_cap: DegreeCap,
}

impl ThresholdState {
    pub fn scalar(tau: f64) -> Self {
        Self {
            tau: ThresholdScope::Scalar(tau),
            rejected: RejectedSummary::default(),
            source_id: None,
            degree_cap: DegreeCap::SampleSize,
        }
    }

    pub fn unbounded() -> Self {
        Self::scalar(f64::INFINITY)
    }

    pub fn strata(taus: BTreeMap<String, f64>) -> Self {
        Self {
            tau: ThresholdScope::Strata(taus),
            ..Self::unbounded()
        }
    }

    pub fn scalar_tau(&self) -> Option<f64> {
        match self.tau {
            ThresholdScope::Scalar(t) => Some(t),
            _ => None,
        }
    }

    /// Threshold that applies to `item`'s priority under `family`, and
    /// the matching inclusion probability `F_i(tau_i)`.
    pub fn inclusion(&self, family: &PriorityFamily, item: &WeightedItem) -> f64 {
        match &self.tau {
            ThresholdScope::Scalar(t) => family.cdf(item.weight, *t),
            ThresholdScope::Strata(m) => {
                let t = item
                    .stratum
                    .as_ref()
                    .and_then(|s| m.get(s))
                    .copied()
                    .unwrap_or(0.0);
                family.cdf(item.weight, t)
            }
            ThresholdScope::Objectives(objs) => objs
                .iter()
                .map(|o| {
                    let w = o.objective_weight(item);
                    if w > 0.0 {
                        o.family.cdf(w, o.tau)
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |t: f64| {
            if t > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidThreshold(t))
            }
        };
        match &self.tau {
            ThresholdScope::Scalar(t) => check(*t),
            ThresholdScope::Strata(m) => m.values().try_for_each(|&t| check(t)),
            ThresholdScope::Objectives(o) => o.iter().try_for_each(|o| check(o.tau)),
        }
    }
}

/// `tau = R_(k+1)`, the (k+1)-th smallest priority; `+inf` when there
/// are at most `k` priorities.
pub fn fixed_k_threshold(priorities: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidSampleSize("k must be at least 1".into()));
    }
    Ok(kth_smallest(priorities, k))
}

/// Zero-based order statistic `R_(idx+1)`, `+inf` when out of range.
pub(crate) fn kth_smallest(priorities: &[f64], idx: usize) -> f64 {
    if priorities.len() <= idx {
        return f64::INFINITY;
    }
    let mut v = priorities.to_vec();
    let (_, nth, _) = v.select_nth_unstable_by(idx, f64::total_cmp);
    *nth
}

/// Wegman adaptive-sampling threshold: the power `2^-b` with
/// `2^-b <= r < 2^(1-b)`. Values above 1 start from `tau = 1`.
pub fn wegman_threshold(r: f64) -> Result<f64> {
    if r.is_nan() || r <= 0.0 {
        return Err(Error::InvalidThreshold(r));
    }
    let r = r.min(1.0);
    if r >= f64::MIN_POSITIVE {
        // Clearing the mantissa leaves the power of two at r's exponent.
        Ok(f64::from_bits(r.to_bits() & 0xfff0_0000_0000_0000))
    } else {
        let mut t = f64::MIN_POSITIVE;
        while t > r {
            t /= 2.0;
        }
        Ok(t)
    }
}

fn combine(
    a: &ThresholdState,
    b: &ThresholdState,
    pick: fn(f64, f64) -> f64,
) -> Result<ThresholdScope> {
    use ThresholdScope::*;
    Ok(match (&a.tau, &b.tau) {
        (Scalar(x), Scalar(y)) => Scalar(pick(*x, *y)),
        (Strata(x), Strata(y)) if x.keys().eq(y.keys()) => Strata(
            x.iter()
                .map(|(k, v)| (k.clone(), pick(*v, y[k])))
                .collect(),
        ),
        (Objectives(x), Objectives(y))
            if x.len() == y.len()
                && x.iter().zip(y).all(|(p, q)| p.column == q.column && p.family == q.family) =>
        {
            Objectives(
                x.iter()
                    .zip(y)
                    .map(|(p, q)| ObjectiveThreshold {
                        tau: pick(p.tau, q.tau),
                        ..p.clone()
                    })
                    .collect(),
            )
        }
        _ => {
            return Err(Error::IncompatibleThresholds(format!(
                "{} vs {}",
                a.tau.key_shape(),
                b.tau.key_shape()
            )))
        }
    })
}

/// Elementwise minimum. Preserves strong substitution compatibility of
/// the inputs; `+inf` is the identity.
pub fn merge_min(a: &ThresholdState, b: &ThresholdState) -> Result<ThresholdState> {
    if a.tau.is_unbounded_scalar() && a.rejected.count == 0 {
        return Ok(ThresholdState {
            degree_cap: a.degree_cap.min(b.degree_cap),
            ..b.clone()
        });
    }
    if b.tau.is_unbounded_scalar() && b.rejected.count == 0 {
        return merge_min(b, a);
    }
    let tau = combine(a, b, f64::min)?;
    let source_id = match (a.scalar_tau(), b.scalar_tau()) {
        (Some(x), Some(y)) if x <= y => a.source_id.clone(),
        (Some(_), Some(_)) => b.source_id.clone(),
        _ => None,
    };
    Ok(ThresholdState {
        tau,
        rejected: a.rejected.merge(&b.rejected),
        source_id,
        degree_cap: a.degree_cap.min(b.degree_cap),
    })
}

/// Elementwise maximum. Only degree-1 compatible, so the result carries
/// `degree_cap = 1`.
pub fn merge_max(a: &ThresholdState, b: &ThresholdState) -> Result<ThresholdState> {
    let tau = combine(a, b, f64::max)?;
    let source_id = match (a.scalar_tau(), b.scalar_tau()) {
        (Some(x), Some(y)) if x >= y => a.source_id.clone(),
        (Some(_), Some(_)) => b.source_id.clone(),
        _ => None,
    };
    Ok(ThresholdState {
        tau,
        rejected: a.rejected.merge(&b.rejected),
        source_id,
        degree_cap: DegreeCap::Fixed(1),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceTarget {
    /// Target relative standard error of the mean estimate.
    pub epsilon: f64,
    pub k_min: f64,
    /// Use `mu^2 / (eps^2 sigma^2)` instead of `sigma^2 / (eps^2 mu^2)`.
    pub paper_formula: bool,
}

impl VarianceTarget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self {
            epsilon,
            k_min: DEFAULT_K_MIN,
            paper_formula: false,
        })
    }

    /// Sample size needed for the mean to reach relative error `epsilon`.
    pub fn required_size(&self, mean: f64, sd: f64) -> f64 {
        if sd == 0.0 || !sd.is_finite() {
            return self.k_min;
        }
        let eps2 = self.epsilon * self.epsilon;
        let k = if self.paper_formula {
            mean * mean / (eps2 * sd * sd)
        } else {
            sd * sd / (eps2 * mean * mean)
        };
        if k.is_nan() {
            f64::INFINITY
        } else {
            k.max(self.k_min)
        }
    }
}

/// `tau_{n+1} = min(tau_n, k_hat / (n + 1))` with `k_hat` computed from
/// the rejected items' mean and standard deviation.
pub fn variance_adapted_update(
    rejected: &RejectedSummary,
    tau: f64,
    n: u64,
    target: &VarianceTarget,
) -> f64 {
    let k_hat = target.required_size(rejected.mean, rejected.std_dev());
    tau.min(k_hat / (n + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_k_examples() {
        assert_eq!(fixed_k_threshold(&[0.1, 0.4, 0.2, 0.9], 2).unwrap(), 0.4);
        assert_eq!(fixed_k_threshold(&[0.1, 0.4], 2).unwrap(), f64::INFINITY);
        assert_eq!(fixed_k_threshold(&[0.5], 3).unwrap(), f64::INFINITY);
        assert!(matches!(fixed_k_threshold(&[0.5], 0), Err(Error::InvalidSampleSize(_))));
    }

    #[test]
    fn wegman_examples() {
        // Bracket 2^-b <= r < 2^(1-b), solved by direct search over b.
        let oracle = |r: f64| {
            (0..64)
                .map(|b| 0.5f64.powi(b))
                .find(|&t| t <= r && r < 2.0 * t)
                .unwrap()
        };
        for r in [0.3, 0.5, 1.0, 0.2500001, 0.7, 1e-9] {
            assert_eq!(wegman_threshold(r).unwrap(), oracle(r), "r = {r}");
        }
        assert_eq!(wegman_threshold(0.3).unwrap(), 0.25);
        assert_eq!(wegman_threshold(0.5).unwrap(), 0.5);
        assert_eq!(wegman_threshold(1.0).unwrap(), 1.0);
        assert!(wegman_threshold(0.0).is_err());
        assert!(wegman_threshold(-1.0).is_err());
    }

    #[test]
    fn merge_min_examples() {
        let s = ThresholdState::scalar;
        assert_eq!(merge_min(&s(0.2), &s(0.5)).unwrap().scalar_tau(), Some(0.2));
        assert_eq!(merge_min(&s(f64::INFINITY), &s(0.3)).unwrap().scalar_tau(), Some(0.3));
        let strata = |a: f64, b: f64| {
            ThresholdState::strata([("a".to_string(), a), ("b".to_string(), b)].into())
        };
        let m = merge_min(&strata(0.1, 0.4), &strata(0.2, 0.3)).unwrap();
        assert_eq!(m.tau, strata(0.1, 0.3).tau);
        let odd = ThresholdState::strata([("a".to_string(), 0.1)].into());
        assert!(matches!(
            merge_min(&strata(0.1, 0.4), &odd),
            Err(Error::IncompatibleThresholds(_))
        ));
        assert!(merge_min(&s(0.1), &odd).is_err());
    }

    #[test]
    fn merge_max_examples() {
        let s = ThresholdState::scalar;
        let m = merge_max(&s(0.2), &s(0.5)).unwrap();
        assert_eq!(m.scalar_tau(), Some(0.5));
        assert_eq!(m.degree_cap, DegreeCap::Fixed(1));
        assert_eq!(merge_max(&s(f64::MIN_POSITIVE), &s(0.3)).unwrap().scalar_tau(), Some(0.3));
        let a = ThresholdState::strata([("a".to_string(), 0.1)].into());
        let b = ThresholdState::strata([("a".to_string(), 0.2)].into());
        let m = merge_max(&a, &b).unwrap();
        assert_eq!(m.tau, ThresholdScope::Strata([("a".to_string(), 0.2)].into()));
        assert_eq!(m.degree_cap, DegreeCap::Fixed(1));
    }

    #[test]
    fn merge_sums_rejections() {
        let mut a = ThresholdState::scalar(0.2);
        let mut b = ThresholdState::scalar(0.3);
        for x in [1.0, 2.0] {
            a.rejected.reject(&WeightedItem::scalar(0, 1.0, x).unwrap());
        }
        b.rejected.reject(&WeightedItem::scalar(0, 1.0, 6.0).unwrap());
        let m = merge_min(&a, &b).unwrap();
        assert_eq!(m.rejected.count, 3);
        assert!((m.rejected.mean - 3.0).abs() < 1e-12);
    }

    #[test]
    fn variance_adapted_examples() {
        let target = VarianceTarget::new(0.01).unwrap();
        assert!((target.required_size(10.0, 1.0) - 100.0).abs() < 1e-9);
        let mut rej = RejectedSummary::default();
        // mean 10, sample sd 1
        for x in [9.0, 11.0] {
            rej.reject(&WeightedItem::scalar(0, 1.0, x).unwrap());
        }
        assert!((rej.std_dev() - 2f64.sqrt()).abs() < 1e-12);
        let rej = RejectedSummary { count: 10, mean: 10.0, m2: 9.0, ..Default::default() };
        assert!((rej.std_dev() - 1.0).abs() < 1e-12);
        let tau = variance_adapted_update(&rej, 1.0, 9_999, &target);
        assert!((tau - 0.01).abs() < 1e-12);
        // sd = 0 falls back to k_min
        let flat = RejectedSummary { count: 10, mean: 10.0, m2: 0.0, ..Default::default() };
        assert_eq!(target.required_size(10.0, 0.0), 30.0);
        assert!((variance_adapted_update(&flat, 1.0, 99, &target) - 0.3).abs() < 1e-12);
        // monotone
        assert_eq!(variance_adapted_update(&rej, 0.001, 9_999, &target), 0.001);
        let paper = VarianceTarget { paper_formula: true, ..target };
        assert!((paper.required_size(10.0, 1.0) - 1e6).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn fixed_k_leaves_exactly_k_below(
            v in proptest::collection::hash_set(1u32..1_000_000, 2..60),
            k in 1usize..30,
        ) {
            let v: Vec<f64> = v.into_iter().map(|x| x as f64 * 1e-6).collect();
            prop_assume!(v.len() > k);
            let tau = fixed_k_threshold(&v, k).unwrap();
            prop_assert_eq!(v.iter().filter(|&&r| r < tau).count(), k);
        }

        #[test]
        fn wegman_brackets(r in 1e-300f64..=1.0) {
            let t = wegman_threshold(r).unwrap();
            prop_assert!(t <= r);
            prop_assert!(t > r / 2.0);
            prop_assert_eq!(t.log2().fract(), 0.0);
        }

        #[test]
        fn merge_min_laws(a in 1e-6f64..10.0, b in 1e-6f64..10.0, c in 1e-6f64..10.0, inf_a in any::<bool>()) {
            let a = if inf_a { f64::INFINITY } else { a };
            let s = ThresholdState::scalar;
            let m = |x: &ThresholdState, y: &ThresholdState| merge_min(x, y).unwrap();
            prop_assert_eq!(m(&s(a), &s(b)).tau, m(&s(b), &s(a)).tau);
            prop_assert_eq!(m(&m(&s(a), &s(b)), &s(c)).tau, m(&s(a), &m(&s(b), &s(c))).tau);
            prop_assert_eq!(m(&s(a), &s(a)).tau, s(a).tau);
            prop_assert_eq!(m(&ThresholdState::unbounded(), &s(b)).tau, s(b).tau);
        }

        #[test]
        fn variance_update_never_increases(
            tau in 1e-6f64..1.0, n in 1u64..1_000_000, mean in -100.0f64..100.0,
            m2 in 0.0f64..1e4, eps in 1e-3f64..1.0, paper in any::<bool>(),
        ) {
            let rej = RejectedSummary { count: 50, mean, m2, ..Default::default() };
            let target = VarianceTarget { epsilon: eps, k_min: 30.0, paper_formula: paper };
            prop_assert!(variance_adapted_update(&rej, tau, n, &target) <= tau);
        }
    }
}
