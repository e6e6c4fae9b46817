use rand::RngCore;

use super::ht::InclusionView;
use super::{require_degree, Estimate, Value, Variance};
use crate::error::{Error, Result};
use crate::item::WeightedItem;
use crate::rng;
use crate::sampler::Sample;
use crate::stats::RunningMoments;

/// `h(x1, x2) = (x1 - x2)^2 / 2`; its U-statistic is the unbiased variance.
pub fn variance_kernel(a: &WeightedItem, b: &WeightedItem) -> f64 {
    let d = a.x() - b.x();
    d * d / 2.0
}

/// `(2 / (n(n-1))) sum_{i<j in J} h(X_i, X_j) / (F_i F_j)`.
pub fn u_statistic_degree2<H>(sample: &Sample, kernel: H, n_population: usize) -> Result<Estimate>
where
    H: Fn(&WeightedItem, &WeightedItem) -> f64,
{
    require_degree(sample, 2)?;
    if n_population < 2 {
        return Err(Error::InsufficientSample {
            requested: 2,
            available: n_population,
        });
    }
    if sample.len() < 2 {
        return Err(Error::InsufficientSample {
            requested: 2,
            available: sample.len(),
        });
    }
    let items = &sample.items;
    if let Some(bad) = items.iter().find(|s| !(s.inclusion > 0.0)) {
        return Err(Error::DegenerateInclusion(bad.item.id.to_string()));
    }
    let mut total = 0.0;
    for (i, a) in items.iter().enumerate() {
        for b in &items[i + 1..] {
            total += kernel(&a.item, &b.item) / (a.inclusion * b.inclusion);
        }
    }
    let n = n_population as f64;
    Ok(Estimate::scalar(2.0 * total / (n * (n - 1.0)), None, 2, sample.len()))
}

/// Monte-Carlo average of a statistic over random size-`v` subsets.
#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapEstimate {
    pub mean: Vec<f64>,
    /// Per-component standard deviation across resamples.
    pub spread: Vec<f64>,
    /// Per-component standard error of `mean`.
    pub std_error: Vec<f64>,
    pub resamples: usize,
    pub subset_size: usize,
}

impl BootstrapEstimate {
    pub fn to_estimate(&self, n_effective: usize) -> Estimate {
        Estimate {
            value: Value::Vector(self.mean.clone()),
            variance: Some(Variance::Matrix(
                (0..self.mean.len())
                    .map(|i| {
                        (0..self.mean.len())
                            .map(|j| if i == j { self.std_error[i].powi(2) } else { 0.0 })
                            .collect()
                    })
                    .collect(),
            )),
            degree_used: self.subset_size,
            n_effective,
        }
    }
}

pub fn subsampled_bootstrap<F, R>(
    sample: &Sample,
    statistic: F,
    v: usize,
    resamples: usize,
    rng: &mut R,
) -> Result<BootstrapEstimate>
where
    F: Fn(&[InclusionView<'_>]) -> Vec<f64>,
    R: RngCore + ?Sized,
{
    if v > sample.len() {
        return Err(Error::InsufficientSample {
            requested: v,
            available: sample.len(),
        });
    }
    require_degree(sample, v)?;
    if resamples == 0 {
        return Err(Error::Config("bootstrap needs at least one resample".into()));
    }
    let views: Vec<InclusionView<'_>> = sample
        .items
        .iter()
        .map(|s| InclusionView {
            item: &s.item,
            inclusion: s.inclusion,
        })
        .collect();
    let mut order: Vec<usize> = (0..views.len()).collect();
    let mut subset = Vec::with_capacity(v);
    let mut moments: Vec<RunningMoments> = Vec::new();
    for _ in 0..resamples {
        for i in 0..v {
            let j = i + rng::index(order.len() - i, rng);
            order.swap(i, j);
        }
        subset.clear();
        subset.extend(order[..v].iter().map(|&i| views[i]));
        let stat = statistic(&subset);
        if moments.is_empty() {
            moments = vec![RunningMoments::default(); stat.len()];
        }
        for (m, s) in moments.iter_mut().zip(stat) {
            m.push(s);
        }
    }
    let spread: Vec<f64> = moments
        .iter()
        .map(|m| if resamples > 1 { m.std_dev() } else { 0.0 })
        .collect();
    Ok(BootstrapEstimate {
        mean: moments.iter().map(|m| m.mean).collect(),
        std_error: spread.iter().map(|s| s / (resamples as f64).sqrt()).collect(),
        spread,
        resamples,
        subset_size: v,
    })
}
