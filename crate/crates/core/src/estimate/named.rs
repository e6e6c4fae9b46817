use super::{
    estimator_degree, require_degree, subset_sum_ht, subset_sum_variance,
    threshold_inclusion_estimate, u_statistic_degree2, variance_kernel, weighted_cdf,
    weighted_quantile, AlphaMode, Estimate, InclusionView,
};
use crate::error::{Error, Result};
use crate::sampler::Sample;

/// Parameters some estimators need; unused ones are ignored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EstimatorArgs {
    /// Evaluation point of `cdf`.
    pub at: Option<f64>,
    /// Level of `quantile`.
    pub q: Option<f64>,
    /// Population weight total for the `cdf` ratio; plug-in when absent.
    pub alpha: Option<f64>,
    /// Population size for `u_variance`.
    pub population: Option<usize>,
    /// Stratum of `stratum_ht`.
    pub stratum: Option<String>,
    /// Payload column of `objective_ht`.
    pub column: usize,
}

fn missing(name: &str, what: &str) -> Error {
    Error::Config(format!("estimator `{name}` needs {what}"))
}

/// Runs the estimator registered under `name` (see [`super::ESTIMATORS`]).
pub fn estimate_by_name(sample: &Sample, name: &str, args: &EstimatorArgs) -> Result<Estimate> {
    let degree = estimator_degree(name)?;
    require_degree(sample, degree)?;
    let n = sample.len();
    let ht_of = |pick: &dyn Fn(&crate::sampler::SampleItem) -> Option<f64>| -> f64 {
        sample.items.iter().filter_map(|s| pick(s).map(|x| x / s.inclusion)).sum()
    };
    match name {
        "ht" => subset_sum_ht(sample),
        "variance" => subset_sum_variance(sample),
        "threshold_inclusion" => threshold_inclusion_estimate(
            sample,
            |views: &[InclusionView<'_>]| views.iter().map(|v| v.item.x() / v.inclusion).sum(),
            1,
        ),
        "cdf" => {
            let x = args.at.ok_or_else(|| missing(name, "an evaluation point"))?;
            let mode = AlphaMode::from_parts(args.alpha.is_some(), args.alpha)?;
            Ok(Estimate::scalar(weighted_cdf(sample, x, mode)?, None, 1, n))
        }
        "quantile" => {
            let q = args.q.ok_or_else(|| missing(name, "a level q"))?;
            Ok(Estimate::scalar(weighted_quantile(sample, q)?, None, 1, n))
        }
        "mean" => {
            let size = ht_of(&|_| Some(1.0));
            if !(size > 0.0) {
                return Err(Error::EmptySample);
            }
            Ok(Estimate::scalar(ht_of(&|s| Some(s.item.x())) / size, None, 1, n))
        }
        "u_variance" => {
            let pop = args.population.ok_or_else(|| missing(name, "the population size"))?;
            u_statistic_degree2(sample, variance_kernel, pop)
        }
        "stratum_ht" => {
            let want = args.stratum.as_deref().ok_or_else(|| missing(name, "a stratum"))?;
            let v = ht_of(&|s| (s.item.stratum.as_deref() == Some(want)).then(|| s.item.x()));
            Ok(Estimate::scalar(v, None, 1, n))
        }
        "objective_ht" => {
            let c = args.column;
            Ok(Estimate::scalar(ht_of(&|s| Some(s.item.value.get(c).copied().unwrap_or(0.0))), None, 1, n))
        }
        _ => unreachable!("registered estimators are handled above"),
    }
}
