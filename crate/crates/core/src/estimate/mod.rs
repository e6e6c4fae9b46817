//! Estimators computed from a sample and its threshold.
//!
//! Each estimator declares its degree (the largest number of retained
//! items any one term multiplies together) and refuses samples whose
//! threshold does not support that degree.

mod cdf;
mod ht;
pub(crate) mod mest;
mod named;
mod ustat;

use serde::{Deserialize, Serialize};

pub use cdf::{weighted_cdf, weighted_quantile, AlphaMode};
pub use ht::{
    ht_total, subset_sum_ht, subset_sum_variance, threshold_inclusion_estimate, InclusionView,
};
pub use mest::{
    fit_weighted_loss, weighted_loss_fit, FitConfig, LogisticLoss, Loss, MFit, SquaredLoss,
};
pub use named::{estimate_by_name, EstimatorArgs};
pub use ustat::{subsampled_bootstrap, u_statistic_degree2, variance_kernel, BootstrapEstimate};

use crate::error::{Error, Result};
use crate::sampler::Sample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Variance {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

/// Point estimate with an optional variance estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Value,
    pub variance: Option<Variance>,
    pub degree_used: usize,
    pub n_effective: usize,
}

impl Estimate {
    pub fn scalar(value: f64, variance: Option<f64>, degree_used: usize, n_effective: usize) -> Self {
        Self {
            value: Value::Scalar(value),
            variance: variance.map(Variance::Scalar),
            degree_used,
            n_effective,
        }
    }

    /// Scalar value, or the first component of a vector value.
    pub fn point(&self) -> f64 {
        match &self.value {
            Value::Scalar(v) => *v,
            Value::Vector(v) => v.first().copied().unwrap_or(f64::NAN),
        }
    }

    pub fn vector(&self) -> Vec<f64> {
        match &self.value {
            Value::Scalar(v) => vec![*v],
            Value::Vector(v) => v.clone(),
        }
    }

    pub fn scalar_variance(&self) -> Option<f64> {
        match &self.variance {
            Some(Variance::Scalar(v)) => Some(*v),
            Some(Variance::Matrix(m)) => m.first().and_then(|r| r.first()).copied(),
            None => None,
        }
    }
}

/// Refuse estimators of degree above the sample's cap.
pub fn require_degree(sample: &Sample, degree: usize) -> Result<()> {
    let cap = sample.threshold.degree_cap.effective(usize::MAX);
    if degree > cap {
        return Err(Error::DegreeCapViolation { degree, cap });
    }
    Ok(())
}

/// Estimator names accepted by the CLI and harness, with their degree.
pub const ESTIMATORS: &[(&str, usize)] = &[
    ("ht", 1),
    ("variance", 2),
    ("threshold_inclusion", 1),
    ("cdf", 1),
    ("quantile", 1),
    ("mean", 1),
    ("u_variance", 2),
    ("stratum_ht", 1),
    ("objective_ht", 1),
];

pub fn estimator_degree(name: &str) -> Result<usize> {
    ESTIMATORS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, d)| *d)
        .ok_or_else(|| Error::Unknown {
            kind: "estimator",
            name: name.to_owned(),
        })
}
