//! Small statistical helpers shared by the Monte-Carlo checkers.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Streaming mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RunningMoments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn from_parts(count: u64, mean: f64, m2: f64) -> Self {
        Self { count, mean, m2 }
    }

    /// Sum of squared deviations from the mean.
    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Combine two summaries (Chan et al. parallel update).
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        Self { count, mean, m2 }
    }

    /// Unbiased (n - 1) variance; zero for fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.count as f64).sqrt()
    }

    /// `(mean - target) / SE`. Zero spread counts as exact agreement only
    /// when the mean hits the target.
    pub fn z_score(&self, target: f64) -> f64 {
        let se = self.std_error();
        let diff = self.mean - target;
        if se > 0.0 {
            diff / se
        } else if diff.abs() <= 1e-12 * target.abs().max(1.0) {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    }
}

/// Two-sided one-sample Kolmogorov-Smirnov statistic of `data` against
/// the continuous cdf `cdf`. Sorts `data` in place.
pub fn ks_statistic(data: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    data.sort_by(f64::total_cmp);
    let n = data.len() as f64;
    data.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value `sqrt(-ln(alpha/2)/2) / sqrt(n)`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Pearson chi-square statistic of observed counts against expected
/// probabilities, with its upper-tail p-value.
pub fn chi_square(observed: &[u64], expected_prob: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), expected_prob.len());
    let total: u64 = observed.iter().sum();
    let total = total as f64;
    let stat: f64 = observed
        .iter()
        .zip(expected_prob)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&o, &p)| {
            let e = p * total;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = expected_prob.iter().filter(|&&p| p > 0.0).count().saturating_sub(1);
    let p = ChiSquared::new(dof.max(1) as f64)
        .map(|d| d.sf(stat))
        .unwrap_or(0.0);
    (stat, p)
}

/// Two-sample chi-square homogeneity test on count vectors.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let (na, nb) = (na as f64, nb as f64);
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let tot = (x + y) as f64;
        if tot == 0.0 {
            continue;
        }
        cells += 1;
        let ea = tot * na / (na + nb);
        let eb = tot * nb / (na + nb);
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    let dof = cells.saturating_sub(1).max(1) as f64;
    let p = ChiSquared::new(dof).map(|d| d.sf(stat)).unwrap_or(0.0);
    (stat, p)
}

/// Index of every size-`k` subset of `0..n` in colex order, as a bitmask.
pub fn subset_index(mask: u64, n: usize, k: usize) -> usize {
    // rank of the combination among all C(n, k) masks
    let mut rank = 0usize;
    let mut seen = 0usize;
    for i in 0..n {
        if mask & (1 << i) != 0 {
            seen += 1;
            rank += binomial(i, seen);
        }
    }
    debug_assert_eq!(seen, k);
    rank
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
