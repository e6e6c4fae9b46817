use super::require_degree;
use crate::error::{Error, Result};
use crate::sampler::Sample;

/// Normalizing constant for the weighted cdf.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaMode {
    /// Known population total weight `sum_i w_i`; unbiased.
    Exact(f64),
    /// `sum_{i in J} w_i / F_i`; consistent, range exactly [0, 1].
    PlugIn,
}

impl AlphaMode {
    /// `Exact` when `alpha` is given; errors if `exact` was requested without it.
    pub fn from_parts(exact: bool, alpha: Option<f64>) -> Result<Self> {
        match (exact, alpha) {
            (false, _) => Ok(Self::PlugIn),
            (true, Some(a)) if a > 0.0 && a.is_finite() => Ok(Self::Exact(a)),
            (true, Some(a)) => Err(Error::Config(format!("alpha must be positive, got {a}"))),
            (true, None) => Err(Error::MissingAlpha),
        }
    }
}

fn ipw_weights(sample: &Sample) -> Result<Vec<(f64, f64)>> {
    require_degree(sample, 1)?;
    sample
        .items
        .iter()
        .map(|s| {
            if s.inclusion > 0.0 {
                Ok((s.item.x(), s.item.weight / s.inclusion))
            } else {
                Err(Error::DegenerateInclusion(s.item.id.to_string()))
            }
        })
        .collect()
}

/// `G_hat(x) = (1/alpha) sum_{i in J} (w_i / F_i) 1(X_i <= x)`.
pub fn weighted_cdf(sample: &Sample, x: f64, mode: AlphaMode) -> Result<f64> {
    let pts = ipw_weights(sample)?;
    let below: f64 = pts.iter().filter(|(v, _)| *v <= x).map(|(_, a)| a).sum();
    let alpha = match mode {
        AlphaMode::Exact(a) => a,
        AlphaMode::PlugIn => pts.iter().map(|(_, a)| a).sum(),
    };
    if alpha > 0.0 {
        Ok(below / alpha)
    } else {
        Ok(0.0)
    }
}

/// Left-continuous inverse of the plug-in weighted cdf:
/// the smallest retained value `x` with `G_hat(x) >= q`.
pub fn weighted_quantile(sample: &Sample, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("quantile level must lie in (0, 1), got {q}")));
    }
    let mut pts = ipw_weights(sample)?;
    if pts.is_empty() {
        return Err(Error::EmptySample);
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pts.iter().map(|(_, a)| a).sum();
    let target = q * total * (1.0 - 4.0 * f64::EPSILON);
    let mut cum = 0.0;
    for (v, a) in &pts {
        cum += a;
        if cum >= target {
            return Ok(*v);
        }
    }
    Ok(pts[pts.len() - 1].0)
}
