use super::{require_degree, Estimate};
use crate::error::{Error, Result};
use crate::item::WeightedItem;
use crate::sampler::Sample;

/// A retained item paired with the inclusion probability an estimator
/// should divide by.
#[derive(Clone, Copy, Debug)]
pub struct InclusionView<'a> {
    pub item: &'a WeightedItem,
    pub inclusion: f64,
}

fn checked_inclusion(item: &WeightedItem, inclusion: f64) -> Result<f64> {
    if inclusion > 0.0 {
        Ok(inclusion)
    } else {
        Err(Error::DegenerateInclusion(item.id.to_string()))
    }
}

/// Horvitz-Thompson total of `f` over the population.
pub fn ht_total(sample: &Sample, f: impl Fn(&WeightedItem) -> f64) -> Result<f64> {
    require_degree(sample, 1)?;
    sample.items.iter().try_fold(0.0, |acc, s| {
        Ok(acc + f(&s.item) / checked_inclusion(&s.item, s.inclusion)?)
    })
}

/// `S_hat = sum_{i in J} x_i / F_i(tau_i)` over the first payload component.
pub fn subset_sum_ht(sample: &Sample) -> Result<Estimate> {
    let total = ht_total(sample, WeightedItem::x)?;
    Ok(Estimate::scalar(total, None, 1, sample.len()))
}

/// Unbiased variance of [`subset_sum_ht`]:
/// `sum_{i in J} x_i^2 (1 - F_i) / F_i^2`. Needs a degree-2 threshold.
pub fn subset_sum_variance(sample: &Sample) -> Result<Estimate> {
    require_degree(sample, 2)?;
    let mut total = 0.0;
    let mut var = 0.0;
    for s in &sample.items {
        let f = checked_inclusion(&s.item, s.inclusion)?;
        let x = s.item.x();
        total += x / f;
        var += x * x * (1.0 - f) / (f * f);
    }
    Ok(Estimate {
        value: super::Value::Scalar(total),
        variance: Some(super::Variance::Scalar(var)),
        degree_used: 2,
        n_effective: sample.len(),
    })
}

/// Averages `base` over the `|J| + 1` samples obtained by treating each of
/// `J ∪ {s}` in turn as the threshold item, weighted by
/// `p_j ∝ f_j(tau) / F_j(tau)`. `s` is the item whose priority set the
/// threshold.
pub fn threshold_inclusion_estimate<F>(
    sample: &Sample,
    base: F,
    base_degree: usize,
) -> Result<Estimate>
where
    F: Fn(&[InclusionView<'_>]) -> f64,
{
    require_degree(sample, base_degree)?;
    let source = sample
        .threshold_item
        .as_ref()
        .ok_or(Error::MissingThresholdSource)?;
    let tau = sample
        .threshold
        .scalar_tau()
        .filter(|t| t.is_finite())
        .ok_or(Error::MissingThresholdSource)?;
    let family = sample.family;
    let pool: Vec<&WeightedItem> = sample
        .items
        .iter()
        .map(|s| &s.item)
        .chain(std::iter::once(&source.item))
        .collect();
    let mut weights = Vec::with_capacity(pool.len());
    let mut views = Vec::with_capacity(pool.len());
    for item in &pool {
        let f = family.cdf(item.weight, tau);
        views.push(InclusionView {
            item,
            inclusion: checked_inclusion(item, f)?,
        });
        weights.push(family.pdf_at(item.weight, tau) / f);
    }
    let norm: f64 = weights.iter().sum();
    if !(norm > 0.0) {
        return Err(Error::DegenerateInclusion(source.item.id.to_string()));
    }
    let mut scratch = Vec::with_capacity(views.len().saturating_sub(1));
    let mut value = 0.0;
    for (j, &wj) in weights.iter().enumerate() {
        if wj == 0.0 {
            continue;
        }
        scratch.clear();
        scratch.extend(views.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, v)| *v));
        value += base(&scratch) * wj / norm;
    }
    Ok(Estimate::scalar(value, None, base_degree, pool.len()))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::family::PriorityFamily;
    use crate::sampler::SampleItem;
    use crate::threshold::{DegreeCap, ThresholdState};

    pub(crate) fn sample_of(items: &[(f64, f64)], tau: f64) -> Sample {
        let family = PriorityFamily::UniformScaled;
        Sample {
            items: items
                .iter()
                .enumerate()
                .map(|(i, &(w, x))| {
                    let item = WeightedItem::scalar(i as u64, w, x).unwrap();
                    SampleItem {
                        inclusion: family.cdf(w, tau),
                        item,
                        priority: None,
                    }
                })
                .collect(),
            threshold: ThresholdState::scalar(tau),
            family,
            seed: 0,
            threshold_item: None,
            counters: Default::default(),
        }
    }

    fn sum_views(v: &[InclusionView<'_>]) -> f64 {
        v.iter().map(|s| s.item.x() / s.inclusion).sum()
    }

    #[test]
    fn census_total() {
        let s = sample_of(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)], f64::INFINITY);
        assert_eq!(subset_sum_ht(&s).unwrap().point(), 6.0);
        let v = subset_sum_variance(&s).unwrap();
        assert_eq!(v.scalar_variance(), Some(0.0));
    }

    #[test]
    fn single_item_plug_in() {
        let s = sample_of(&[(1.0, 5.0)], 0.5);
        assert_eq!(subset_sum_ht(&s).unwrap().point(), 10.0);
        let s = sample_of(&[(1.0, 1.0)], 0.5);
        assert_eq!(subset_sum_variance(&s).unwrap().scalar_variance(), Some(2.0));
    }

    #[test]
    fn degenerate_inclusion_is_an_error() {
        let mut s = sample_of(&[(1.0, 1.0)], 0.5);
        s.items[0].inclusion = 0.0;
        assert!(matches!(subset_sum_ht(&s), Err(Error::DegenerateInclusion(_))));
    }

    #[test]
    fn variance_refused_on_degree_one_samples() {
        let mut s = sample_of(&[(1.0, 1.0), (1.0, 2.0)], 0.5);
        s.threshold.degree_cap = DegreeCap::Fixed(1);
        assert!(matches!(
            subset_sum_variance(&s),
            Err(Error::DegreeCapViolation { degree: 2, cap: 1 })
        ));
        assert!(subset_sum_ht(&s).is_ok());
    }

    #[test]
    fn threshold_inclusion_weights_are_uniform_below_support() {
        // tau < 1/w for every item: f/F = 1/tau, so each leave-one-out
        // estimate gets weight 1/(k+1).
        let mut s = sample_of(&[(1.0, 1.0), (2.0, 4.0)], 0.2);
        let src = WeightedItem::scalar(9, 3.0, 10.0).unwrap();
        s.threshold_item = Some(SampleItem {
            inclusion: 0.6,
            item: src,
            priority: Some(0.2),
        });
        let f = [0.2, 0.4, 0.6];
        let x = [1.0, 4.0, 10.0];
        let loo: Vec<f64> = (0..3)
            .map(|j| (0..3).filter(|&i| i != j).map(|i| x[i] / f[i]).sum())
            .collect();
        let expect = loo.iter().sum::<f64>() / 3.0;
        let got = threshold_inclusion_estimate(&s, sum_views, 1).unwrap();
        assert!((got.point() - expect).abs() < 1e-12);
        assert_eq!(got.n_effective, 3);
    }

    #[test]
    fn threshold_inclusion_with_only_the_source() {
        let mut s = sample_of(&[], 0.2);
        s.threshold_item = Some(SampleItem {
            inclusion: 0.2,
            item: WeightedItem::scalar(9, 1.0, 10.0).unwrap(),
            priority: Some(0.2),
        });
        let got = threshold_inclusion_estimate(&s, |v| if v.is_empty() { -1.0 } else { 5.0 }, 1);
        assert_eq!(got.unwrap().point(), -1.0);
    }

    #[test]
    fn threshold_inclusion_needs_source() {
        let s = sample_of(&[(1.0, 1.0)], 0.2);
        assert!(matches!(
            threshold_inclusion_estimate(&s, sum_views, 1),
            Err(Error::MissingThresholdSource)
        ));
    }
}
