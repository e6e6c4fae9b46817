use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::design::{draw_sample, Design, Population};
use super::{fmt_num, monte_carlo, Report, Verdict};
use crate::error::{Error, Result};
use crate::estimate::{
    estimator_degree, subset_sum_ht, subset_sum_variance, threshold_inclusion_estimate,
    u_statistic_degree2, variance_kernel, weighted_cdf, AlphaMode, InclusionView,
};
use crate::family::PriorityFamily;
use crate::sampler::Sample;

fn default_name() -> String {
    "unbiasedness".into()
}

fn default_family() -> String {
    "uniform".into()
}

fn default_replicates() -> u64 {
    100_000
}

fn default_tolerance() -> f64 {
    4.0
}

/// A Monte-Carlo verification run, loadable from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub population: String,
    pub sampler: String,
    #[serde(default = "default_family")]
    pub family: String,
    pub estimators: Vec<String>,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance_se: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn new(population: &str, sampler: &str, estimators: &[&str]) -> Self {
        Self {
            name: default_name(),
            population: population.to_owned(),
            sampler: sampler.to_owned(),
            family: default_family(),
            estimators: estimators.iter().map(|s| (*s).to_owned()).collect(),
            replicates: default_replicates(),
            seed: 0,
            tolerance_se: default_tolerance(),
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Parses every referenced component.
    pub fn resolve(&self) -> Result<(Population, Design, PriorityFamily)> {
        if self.replicates < 2 {
            return Err(Error::Config("replicates must be at least 2".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators configured".into()));
        }
        if !(self.tolerance_se > 0.0) {
            return Err(Error::Config("tolerance_se must be positive".into()));
        }
        for e in &self.estimators {
            estimator_degree(e)?;
        }
        Ok((
            Population::parse(&self.population)?,
            self.sampler.parse()?,
            self.family.parse()?,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorCheck {
    pub estimator: String,
    pub target: String,
    pub truth: f64,
    pub mean: f64,
    pub std_error: f64,
    #[serde(with = "crate::serde_inf")]
    pub z: f64,
    pub empirical_variance: f64,
    /// Variance of plain HT on the same replicates, for estimators that
    /// refine it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_variance: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnbiasednessReport {
    pub name: String,
    pub population: String,
    pub sampler: String,
    pub family: String,
    pub replicates: u64,
    pub seed: u64,
    pub tolerance_se: f64,
    pub checks: Vec<EstimatorCheck>,
    pub verdict: Verdict,
}

impl UnbiasednessReport {
    pub fn check(&self, estimator: &str) -> Option<&EstimatorCheck> {
        self.checks.iter().find(|c| c.estimator == estimator)
    }
}

impl Report for UnbiasednessReport {
    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "unbiasedness: {} on {} ({}), {} replicates, seed {}",
            self.sampler, self.population, self.family, self.replicates, self.seed
        );
        let _ = writeln!(
            s,
            "{:<20} {:<24} {:>14} {:>14} {:>12} {:>9} {:>6}",
            "estimator", "target", "truth", "mean", "se", "z", ""
        );
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<20} {:<24} {:>14} {:>14} {:>12} {:>9.3} {:>6}",
                c.estimator,
                c.target,
                fmt_num(c.truth),
                fmt_num(c.mean),
                fmt_num(c.std_error),
                c.z,
                c.verdict
            );
            if let Some(base) = c.baseline_variance {
                let _ = writeln!(
                    s,
                    "{:<20} variance {} vs plain HT {}",
                    "",
                    fmt_num(c.empirical_variance),
                    fmt_num(base)
                );
            }
        }
        let _ = writeln!(s, "verdict: {}", self.verdict);
        s
    }
}

/// One observed quantity per replicate.
struct Slot {
    estimator: String,
    target: String,
    truth: f64,
    /// Slot holding the plain HT value on the same replicate.
    baseline: Option<usize>,
    /// Only recorded, not checked.
    auxiliary: bool,
}

fn ht_of_views(views: &[InclusionView<'_>]) -> f64 {
    views.iter().map(|v| v.item.x() / v.inclusion).sum()
}

fn ti_or_ht(sample: &Sample) -> Result<f64> {
    if sample.threshold_item.is_none() {
        return Ok(subset_sum_ht(sample)?.point());
    }
    Ok(threshold_inclusion_estimate(sample, ht_of_views, 1)?.point())
}

fn strata_labels(p: &Population) -> Vec<String> {
    p.items
        .iter()
        .filter_map(|i| i.stratum.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn objective_columns(design: &Design) -> Vec<usize> {
    match design {
        Design::Multi(_, cols) => cols.clone(),
        _ => vec![0],
    }
}

/// Runs `replicates` sample-and-estimate rounds and compares each
/// estimator's mean with its population value.
pub fn verify_unbiasedness(config: &ExperimentConfig) -> Result<UnbiasednessReport> {
    let (population, design, family) = config.resolve()?;
    let cap = design.degree_cap().effective(usize::MAX);
    for e in &config.estimators {
        let degree = estimator_degree(e)?;
        if degree > cap {
            return Err(Error::DegreeCapViolation { degree, cap });
        }
    }
    let total = population.total(0);
    let strata = strata_labels(&population);
    let cols = objective_columns(&design);
    let cdf_point = population.weighted_quantile(0.5);
    let alpha = AlphaMode::Exact(population.total_weight());

    let mut slots = Vec::new();
    let slot = |estimator: &str, target: String, truth: f64| Slot {
        estimator: estimator.to_owned(),
        target,
        truth,
        baseline: None,
        auxiliary: false,
    };
    for e in &config.estimators {
        match e.as_str() {
            "ht" => slots.push(slot(e, "total".into(), total)),
            "variance" => slots.push(slot(e, "var_hat - (S_hat - S)^2".into(), 0.0)),
            "threshold_inclusion" => {
                slots.push(Slot {
                    baseline: Some(slots.len() + 1),
                    ..slot(e, "total".into(), total)
                });
                slots.push(Slot {
                    auxiliary: true,
                    ..slot("ht", "total".into(), total)
                });
            }
            "cdf" => slots.push(slot(
                e,
                format!("G({cdf_point})"),
                population.weighted_cdf(cdf_point),
            )),
            "u_variance" => slots.push(slot(e, "variance".into(), population.variance())),
            "stratum_ht" => {
                if strata.is_empty() {
                    return Err(Error::Config("stratum_ht needs a stratified population".into()));
                }
                for s in &strata {
                    let truth = population
                        .items
                        .iter()
                        .filter(|i| i.stratum.as_deref() == Some(s))
                        .map(|i| i.x())
                        .sum();
                    slots.push(slot(e, format!("stratum {s}"), truth));
                }
            }
            "objective_ht" => {
                for &c in &cols {
                    slots.push(slot(e, format!("column {c}"), population.total(c)));
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "estimator `{other}` is consistent but not unbiased; it has no unbiasedness check"
                )))
            }
        }
    }

    let estimators = config.estimators.clone();
    let n_pop = population.len();
    let moments = monte_carlo(config.replicates, config.seed, slots.len(), |rng, out| {
        let sample = draw_sample(&design, &population, family, rng)?;
        let mut i = 0;
        for e in &estimators {
            match e.as_str() {
                "ht" => {
                    out[i] = subset_sum_ht(&sample)?.point();
                    i += 1;
                }
                "variance" => {
                    let v = subset_sum_variance(&sample)?;
                    out[i] = v.scalar_variance().unwrap_or(0.0) - (v.point() - total).powi(2);
                    i += 1;
                }
                "threshold_inclusion" => {
                    out[i] = ti_or_ht(&sample)?;
                    out[i + 1] = subset_sum_ht(&sample)?.point();
                    i += 2;
                }
                "cdf" => {
                    out[i] = weighted_cdf(&sample, cdf_point, alpha)?;
                    i += 1;
                }
                "u_variance" => {
                    out[i] = if sample.len() < 2 {
                        0.0
                    } else {
                        u_statistic_degree2(&sample, variance_kernel, n_pop)?.point()
                    };
                    i += 1;
                }
                "stratum_ht" => {
                    for s in &strata {
                        out[i] = sample
                            .items
                            .iter()
                            .filter(|it| it.item.stratum.as_deref() == Some(s))
                            .map(|it| it.item.x() / it.inclusion)
                            .sum();
                        i += 1;
                    }
                }
                "objective_ht" => {
                    for &c in &cols {
                        out[i] = sample
                            .items
                            .iter()
                            .map(|it| it.item.value.get(c).copied().unwrap_or(0.0) / it.inclusion)
                            .sum();
                        i += 1;
                    }
                }
                _ => unreachable!("validated above"),
            }
        }
        Ok(())
    })?;

    let checks: Vec<EstimatorCheck> = slots
        .iter()
        .zip(&moments)
        .filter(|(s, _)| !s.auxiliary)
        .map(|(s, m)| {
            let z = m.z_score(s.truth);
            let baseline_variance = s.baseline.map(|b| moments[b].variance());
            let variance_ok = baseline_variance.is_none_or(|b| m.variance() <= b);
            EstimatorCheck {
                estimator: s.estimator.clone(),
                target: s.target.clone(),
                truth: s.truth,
                mean: m.mean,
                std_error: m.std_error(),
                z,
                empirical_variance: m.variance(),
                baseline_variance,
                verdict: Verdict::from_pass(z.abs() <= config.tolerance_se && variance_ok),
            }
        })
        .collect();
    let verdict = Verdict::from_pass(checks.iter().all(|c| c.verdict.passed()));
    Ok(UnbiasednessReport {
        name: config.name.clone(),
        population: population.name.clone(),
        sampler: design.to_string(),
        family: family.to_string(),
        replicates: config.replicates,
        seed: config.seed,
        tolerance_se: config.tolerance_se,
        checks,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_from_json_defaults() {
        let c = ExperimentConfig::from_json(
            r#"{"population":"linear:6","sampler":"fixed_k:3","estimators":["ht"]}"#,
        )
        .unwrap();
        assert_eq!(c.replicates, 100_000);
        assert_eq!(c.tolerance_se, 4.0);
        assert!(ExperimentConfig::from_json(r#"{"population":"linear:6"}"#).is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"population":"linear:6","sampler":"fixed_k:3","estimators":[],"bogus":1}"#
        )
        .is_err());
    }

    #[test]
    fn unknown_components_are_refused() {
        let mut c = ExperimentConfig::new("linear:6", "fixed_k:3", &["nope"]);
        assert!(matches!(verify_unbiasedness(&c), Err(Error::Unknown { .. })));
        c.estimators = vec!["quantile".into()];
        assert!(matches!(verify_unbiasedness(&c), Err(Error::Config(_))));
        c.estimators = vec!["ht".into()];
        c.replicates = 1;
        assert!(verify_unbiasedness(&c).is_err());
    }

    #[test]
    fn variance_refused_under_multi_objective() {
        let c = ExperimentConfig::new("pairs:6", "multi:2:0,1", &["variance"]);
        assert!(matches!(
            verify_unbiasedness(&c),
            Err(Error::DegreeCapViolation { degree: 2, cap: 1 })
        ));
    }

    #[test]
    fn small_run_is_deterministic() {
        let mut c = ExperimentConfig::new("linear:6", "fixed_k:3", &["ht", "threshold_inclusion"]);
        c.replicates = 2000;
        c.seed = 3;
        let a = verify_unbiasedness(&c).unwrap();
        let b = verify_unbiasedness(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.checks.len(), 2);
        assert!(a.checks[1].baseline_variance.is_some());
    }
}
