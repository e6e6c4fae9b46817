use std::collections::BinaryHeap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use super::{fan_out, fmt_num, Report, Verdict};
use crate::distributed::{waste_report, MergeStrategy, SampleEnvelope};
use crate::error::{Error, Result};
use crate::family::PriorityFamily;
use crate::item::WeightedItem;
use crate::rng::{open_unit, SamplerRng};
use crate::sampler::{Counters, Sample, SampleItem};
use crate::stats::{ks_critical, ks_statistic, RunningMoments};
use crate::threshold::ThresholdState;

fn default_runs() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributedWasteSpec {
    pub nodes: usize,
    pub k: usize,
    pub n_per_node: u64,
    #[serde(default = "default_runs")]
    pub runs: u64,
    #[serde(default)]
    pub seed: u64,
    /// Expected mean of the merged (minimum) threshold, checked to within
    /// `relative_tolerance` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_tau_min: Option<f64>,
    #[serde(default = "default_rel_tol")]
    pub relative_tolerance: f64,
}

fn default_rel_tol() -> f64 {
    0.05
}

impl DistributedWasteSpec {
    pub fn new(nodes: usize, k: usize, n_per_node: u64) -> Self {
        Self {
            nodes,
            k,
            n_per_node,
            runs: 1,
            seed: 0,
            reference_tau_min: None,
            relative_tolerance: default_rel_tol(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.k == 0 || self.runs == 0 {
            return Err(Error::Config("nodes, k and runs must be positive".into()));
        }
        if self.n_per_node <= self.k as u64 {
            return Err(Error::Config(format!(
                "each node needs more than k = {} items, got {}",
                self.k, self.n_per_node
            )));
        }
        Ok(())
    }
}

/// Runs one node: `n` unit-weight items with uniform priorities, keeping
/// the `k` smallest. Ids are `id_offset + i`.
pub fn simulate_node(k: usize, n: u64, id_offset: u64, rng: &mut SamplerRng) -> SampleEnvelope {
    // Positive doubles order like their bit patterns.
    let mut heap: BinaryHeap<(u64, u64)> = BinaryHeap::with_capacity(k + 2);
    let mut heap_ops = 0u64;
    for i in 0..n {
        let u = open_unit(rng).to_bits();
        if heap.len() <= k {
            heap.push((u, i));
            heap_ops += 1;
        } else if u < heap.peek().expect("non-empty").0 {
            heap.pop();
            heap.push((u, i));
            heap_ops += 2;
        }
    }
    let family = PriorityFamily::UniformScaled;
    let to_item = |(bits, i): (u64, u64), tau: f64| {
        let r = f64::from_bits(bits);
        SampleItem {
            inclusion: family.cdf(1.0, tau),
            item: WeightedItem::scalar(id_offset + i, 1.0, 1.0).expect("unit weight"),
            priority: Some(r),
        }
    };
    let (tau, source) = if heap.len() == k + 1 {
        let top = heap.pop().expect("k + 1 entries");
        (f64::from_bits(top.0), Some(top))
    } else {
        (f64::INFINITY, None)
    };
    let mut threshold = ThresholdState::scalar(tau);
    threshold.rejected.count = n - heap.len() as u64;
    threshold.rejected.mean = 1.0;
    let threshold_item = source.map(|s| to_item(s, tau));
    threshold.source_id = threshold_item.as_ref().map(|s| s.item.id.clone());
    let mut items: Vec<SampleItem> = heap.into_vec().into_iter().map(|e| to_item(e, tau)).collect();
    items.sort_by(|a, b| a.item.id.cmp(&b.item.id));
    SampleEnvelope::new(Sample {
        items,
        threshold,
        family,
        seed: 0,
        threshold_item,
        counters: Counters {
            items_seen: n,
            heap_ops,
            threshold_updates: 0,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrategySummary {
    pub strategy: MergeStrategy,
    pub mean_transferred: f64,
    pub mean_retained: f64,
    pub retention: f64,
    pub mean_threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NamedCheck {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WasteExperimentReport {
    pub spec: DistributedWasteSpec,
    pub node_threshold_mean: f64,
    /// Mean of Beta(k + 1, n - k), the law of the (k+1)-th smallest of n
    /// uniforms.
    pub node_threshold_expected: f64,
    pub node_threshold_ks: f64,
    pub ks_critical_001: f64,
    pub strategies: Vec<StrategySummary>,
    /// Retention of the min merge over retention of the naive strategy.
    pub advantage: f64,
    pub checks: Vec<NamedCheck>,
    pub verdict: Verdict,
}

impl WasteExperimentReport {
    pub fn strategy(&self, s: MergeStrategy) -> &StrategySummary {
        self.strategies.iter().find(|x| x.strategy == s).expect("both strategies reported")
    }

    pub fn check(&self, name: &str) -> Option<&NamedCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl Report for WasteExperimentReport {
    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn to_text(&self) -> String {
        let s = &self.spec;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "distributed waste: {} nodes, k {}, n {} per node, {} runs, seed {}",
            s.nodes, s.k, s.n_per_node, s.runs, s.seed
        );
        let _ = writeln!(
            out,
            "node threshold mean {} (Beta mean {}), KS {} (critical {})",
            fmt_num(self.node_threshold_mean),
            fmt_num(self.node_threshold_expected),
            fmt_num(self.node_threshold_ks),
            fmt_num(self.ks_critical_001)
        );
        let _ = writeln!(
            out,
            "{:<10} {:>14} {:>14} {:>12} {:>14}",
            "strategy", "transferred", "retained", "retention", "threshold"
        );
        for st in &self.strategies {
            let _ = writeln!(
                out,
                "{:<10} {:>14.1} {:>14.1} {:>12} {:>14}",
                st.strategy.to_string(),
                st.mean_transferred,
                st.mean_retained,
                fmt_num(st.retention),
                fmt_num(st.mean_threshold)
            );
        }
        let _ = writeln!(out, "min-merge advantage: {}x", fmt_num(self.advantage));
        for c in &self.checks {
            let _ = writeln!(
                out,
                "check {:<40} value {:>12} target {:>12} {}",
                c.name,
                fmt_num(c.value),
                fmt_num(c.target),
                c.verdict
            );
        }
        let _ = writeln!(out, "verdict: {}", self.verdict);
        out
    }
}

struct RunOutcome {
    node_taus: Vec<f64>,
    min: (usize, usize, f64),
    naive: (usize, usize, f64),
}

fn run_once(spec: &DistributedWasteSpec, run: u64) -> Result<RunOutcome> {
    let n = spec.n_per_node;
    let run_seed = spec.seed.wrapping_add(run.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let nodes = fan_out(
        spec.nodes as u64,
        run_seed,
        Vec::new,
        |acc: &mut Vec<SampleEnvelope>, rng| {
            acc.push(simulate_node(spec.k, n, 0, rng));
            Ok(())
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    )?;
    let nodes: Vec<SampleEnvelope> = nodes
        .into_iter()
        .enumerate()
        .map(|(j, mut env)| {
            let offset = j as u64 * n;
            let shift = |s: &mut SampleItem| {
                if let crate::item::ItemId::Int(i) = s.item.id {
                    s.item.id = (i + offset).into();
                }
            };
            env.sample.items.iter_mut().for_each(shift);
            if let Some(t) = env.sample.threshold_item.as_mut() {
                shift(t);
                env.sample.threshold.source_id = Some(t.item.id.clone());
            }
            env.sample.seed = run_seed;
            env.sources = vec![run_seed ^ j as u64];
            env
        })
        .collect();
    let summary = |s: MergeStrategy| -> Result<(usize, usize, f64)> {
        let r = waste_report(&nodes, s)?;
        Ok((r.transferred, r.retained, r.merged_threshold))
    };
    Ok(RunOutcome {
        node_taus: nodes
            .iter()
            .map(|e| e.sample.threshold.scalar_tau().unwrap_or(f64::INFINITY))
            .collect(),
        min: summary(MergeStrategy::MinMerge)?,
        naive: summary(MergeStrategy::NaiveTopk)?,
    })
}

/// Simulates `runs` rounds of `nodes` independent node samples and merges
/// them with both strategies.
pub fn run_distributed_waste(spec: &DistributedWasteSpec) -> Result<WasteExperimentReport> {
    spec.validate()?;
    let mut node_taus = Vec::new();
    let mut per = [(RunningMoments::default(), RunningMoments::default(), RunningMoments::default()); 2];
    let mut dominated = true;
    for run in 0..spec.runs {
        let o = run_once(spec, run)?;
        node_taus.extend(o.node_taus);
        for (acc, (t, r, tau)) in per.iter_mut().zip([o.min, o.naive]) {
            acc.0.push(t as f64);
            acc.1.push(r as f64);
            acc.2.push(tau);
        }
        dominated &= o.min.1 >= o.naive.1;
    }
    let strategies: Vec<StrategySummary> = [MergeStrategy::MinMerge, MergeStrategy::NaiveTopk]
        .into_iter()
        .zip(&per)
        .map(|(strategy, (t, r, tau))| StrategySummary {
            strategy,
            mean_transferred: t.mean,
            mean_retained: r.mean,
            retention: r.mean / t.mean,
            mean_threshold: tau.mean,
        })
        .collect();

    let k = spec.k as f64;
    let n = spec.n_per_node as f64;
    let beta = Beta::new(k + 1.0, n - k).map_err(|e| Error::Config(e.to_string()))?;
    let node_threshold_mean = node_taus.iter().sum::<f64>() / node_taus.len() as f64;
    let ks = ks_statistic(&mut node_taus.clone(), |x| beta.cdf(x));
    let crit = ks_critical(node_taus.len(), 0.001);
    let m = spec.nodes as f64;
    let naive_ret = strategies[1].retention;
    let advantage = strategies[0].retention / naive_ret;

    let check = |name: &str, value: f64, target: f64, pass: bool| NamedCheck {
        name: name.to_owned(),
        value,
        target,
        verdict: Verdict::from_pass(pass),
    };
    let mut checks = vec![
        check("node thresholds follow Beta(k+1, n-k)", ks, crit, ks <= crit),
        check(
            "naive retention is 1/m",
            naive_ret,
            1.0 / m,
            (naive_ret * m - 1.0).abs() <= 0.05,
        ),
        check(
            "min merge keeps at least the naive survivors",
            f64::from(u8::from(dominated)),
            1.0,
            dominated,
        ),
    ];
    if spec.nodes == 1 {
        let same = strategies[0].mean_retained == strategies[1].mean_retained;
        checks.push(check("single node: strategies agree", advantage, 1.0, same));
    }
    if let Some(reference) = spec.reference_tau_min {
        let got = strategies[0].mean_threshold;
        checks.push(check(
            "mean merged threshold matches reference",
            got,
            reference,
            ((got - reference) / reference).abs() <= spec.relative_tolerance,
        ));
    }
    let verdict = Verdict::from_pass(checks.iter().all(|c| c.verdict.passed()));
    Ok(WasteExperimentReport {
        spec: spec.clone(),
        node_threshold_mean,
        node_threshold_expected: (k + 1.0) / (n + 1.0),
        node_threshold_ks: ks,
        ks_critical_001: crit,
        strategies,
        advantage,
        checks,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn node_keeps_k_smallest() {
        let env = simulate_node(5, 200, 1000, &mut seeded(3));
        assert_eq!(env.sample.len(), 5);
        let tau = env.sample.threshold.scalar_tau().unwrap();
        assert!(env.sample.items.iter().all(|s| s.priority.unwrap() < tau && s.inclusion == tau));
        assert!(env.sample.items.iter().all(|s| matches!(s.item.id, crate::item::ItemId::Int(i) if i >= 1000)));
        assert_eq!(env.sample.threshold_item.as_ref().unwrap().priority, Some(tau));
        assert!(env.sample.check_consistency().is_ok());
    }

    #[test]
    fn single_node_strategies_agree() {
        let mut spec = DistributedWasteSpec::new(1, 10, 500);
        spec.runs = 3;
        let r = run_distributed_waste(&spec).unwrap();
        assert_eq!(r.strategies[0].retention, 1.0);
        assert_eq!(r.strategies[1].retention, 1.0);
        assert_eq!(r.check("single node: strategies agree").unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(run_distributed_waste(&DistributedWasteSpec::new(2, 10, 10)).is_err());
        assert!(run_distributed_waste(&DistributedWasteSpec::new(0, 10, 100)).is_err());
    }
}
