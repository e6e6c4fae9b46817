//! Priority distributions.
//!
//! Every family is an order-sampling shape: the priority of an item with
//! weight `w` is `R = G^{-1}(U) / w` for a common shape cdf `G`, so
//! `F_w(r) = G(w r)`. Smaller priorities are better; an item is retained
//! when its priority falls below its threshold.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::item::{check_weight, WeightedItem};
use crate::rng::open_unit;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorityFamily {
    /// `R = U / w`, i.e. Uniform(0, 1/w). Classic priority sampling.
    UniformScaled,
    /// `R ~ Exponential(rate = w)`. Efraimidis-Spirakis / bottom-k sketches.
    ExponentialRate,
    /// Lomax shape `G(t) = 1 - (1+t)^(-a)`; `a = 1` is Pareto order sampling.
    InverseCdfShape { shape_params: [f64; 1] },
}

impl Default for PriorityFamily {
    fn default() -> Self {
        PriorityFamily::UniformScaled
    }
}

impl fmt::Display for PriorityFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorityFamily::UniformScaled => f.write_str("uniform"),
            PriorityFamily::ExponentialRate => f.write_str("exponential"),
            PriorityFamily::InverseCdfShape { shape_params } => {
                write!(f, "lomax:{}", shape_params[0])
            }
        }
    }
}

impl std::str::FromStr for PriorityFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(PriorityFamily::UniformScaled),
            "exponential" => Ok(PriorityFamily::ExponentialRate),
            _ => {
                if let Some(a) = s.strip_prefix("lomax:") {
                    let a: f64 = a.parse().map_err(|_| Error::Unknown {
                        kind: "family",
                        name: s.to_owned(),
                    })?;
                    return PriorityFamily::lomax(a);
                }
                Err(Error::Unknown {
                    kind: "family",
                    name: s.to_owned(),
                })
            }
        }
    }
}

/// A generated priority together with the uniform that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Priority {
    pub value: f64,
    pub generator_u: f64,
}

impl PriorityFamily {
    pub fn lomax(a: f64) -> Result<Self> {
        if a > 0.0 && a.is_finite() {
            Ok(PriorityFamily::InverseCdfShape { shape_params: [a] })
        } else {
            Err(Error::Config(format!("lomax shape must be positive, got {a}")))
        }
    }

    fn shape_cdf(&self, t: f64) -> f64 {
        match *self {
            PriorityFamily::UniformScaled => t.min(1.0),
            PriorityFamily::ExponentialRate => -(-t).exp_m1(),
            PriorityFamily::InverseCdfShape { shape_params: [a] } => {
                -(-a * t.ln_1p()).exp_m1()
            }
        }
    }

    fn shape_pdf(&self, t: f64) -> f64 {
        match *self {
            PriorityFamily::UniformScaled => {
                if t < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            PriorityFamily::ExponentialRate => (-t).exp(),
            PriorityFamily::InverseCdfShape { shape_params: [a] } => {
                a * (-(a + 1.0) * t.ln_1p()).exp()
            }
        }
    }

    fn shape_quantile(&self, u: f64) -> f64 {
        match *self {
            PriorityFamily::UniformScaled => u,
            PriorityFamily::ExponentialRate => -(-u).ln_1p(),
            PriorityFamily::InverseCdfShape { shape_params: [a] } => {
                (-(-u).ln_1p() / a).exp_m1()
            }
        }
    }

    /// `F_w(tau)`: probability that an item of weight `w` has priority
    /// below `tau`. `tau = +inf` means "accept everything".
    pub fn cdf_at(&self, weight: f64, tau: f64) -> Result<f64> {
        check_weight(weight)?;
        if tau.is_nan() || tau < 0.0 {
            return Err(Error::InvalidThreshold(tau));
        }
        Ok(self.cdf(weight, tau))
    }

    /// Unchecked [`cdf_at`](Self::cdf_at) for validated inputs.
    #[inline]
    pub fn cdf(&self, weight: f64, tau: f64) -> f64 {
        if tau == f64::INFINITY {
            return 1.0;
        }
        self.shape_cdf(weight * tau)
    }

    /// Density of the priority at `r`; zero outside the support.
    pub fn pdf_at(&self, weight: f64, r: f64) -> f64 {
        if !(r >= 0.0) || !r.is_finite() {
            return 0.0;
        }
        weight * self.shape_pdf(weight * r)
    }

    pub fn inverse_cdf(&self, weight: f64, u: f64) -> f64 {
        self.shape_quantile(u) / weight
    }

    /// Priority of an item of weight `weight` driven by the uniform `u`.
    #[inline]
    pub fn priority_from_uniform(&self, weight: f64, u: f64) -> Priority {
        let value = match self {
            // Exact division keeps `R = U / w` bit-for-bit.
            PriorityFamily::UniformScaled => u / weight,
            _ => self.inverse_cdf(weight, u),
        };
        Priority {
            value,
            generator_u: u,
        }
    }

    /// Largest priority an item of weight `w` can have (`1/w` for the
    /// uniform family, `+inf` otherwise).
    pub fn support_max(&self, weight: f64) -> f64 {
        match self {
            PriorityFamily::UniformScaled => 1.0 / weight,
            _ => f64::INFINITY,
        }
    }
}

/// Draw a priority for `item` with the sampler-owned generator `rng`.
pub fn gen_priority<R: RngCore + ?Sized>(
    item: &WeightedItem,
    family: &PriorityFamily,
    rng: &mut R,
) -> Result<Priority> {
    check_weight(item.weight)?;
    Ok(family.priority_from_uniform(item.weight, open_unit(rng)))
}
