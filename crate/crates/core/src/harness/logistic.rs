use std::collections::VecDeque;
use std::fmt::Write;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{fmt_num, Report, Verdict};
use crate::error::{Error, Result};
use crate::estimate::mest::logistic;
use crate::estimate::{fit_weighted_loss, FitConfig, LogisticLoss};
use crate::item::{ItemId, WeightedItem};
use crate::rng::{open_unit, seeded_stream};
use crate::family::PriorityFamily;
use crate::sampler::{FastPrioritySampler, FastSamplerConfig, HeapSampler};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotMode {
    /// Case-control probabilities from the current fit.
    #[default]
    Fitted,
    /// `p = 1/2` for every item; both designs then coincide.
    Half,
    /// The generating model itself. A diagnostic upper bound on what a
    /// perfect pilot could achieve.
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticSimSpec {
    pub n_points: usize,
    /// Coefficient scale: `beta(t) = c (sin pi t, cos pi t)`.
    pub c: f64,
    /// Items between refits.
    pub batch: usize,
    /// Forward-decay rate: item weights grow as `exp(decay * t)`.
    pub decay: f64,
    pub k: usize,
    pub seed: u64,
    /// Independent runs, seeded `seed, seed + 1, ..`; errors are pooled.
    pub replicates: u64,
    /// Items used for the initial full-data fit.
    pub init_points: usize,
    pub eval_points: usize,
    pub surprise_floor: f64,
    /// Case-control weights are capped at this quantile of recent ones.
    pub cap_quantile: f64,
    pub cap_window: usize,
    pub pilot: PilotMode,
    pub sampler: StreamSampler,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_bayes_error: Option<f64>,
    pub bayes_tolerance: f64,
}

impl Default for LogisticSimSpec {
    fn default() -> Self {
        Self {
            n_points: 1_000_000,
            c: 2.8,
            batch: 50,
            decay: std::f64::consts::LN_2 / 0.1,
            k: 1000,
            seed: 0,
            replicates: 1,
            init_points: 1000,
            eval_points: 100,
            surprise_floor: 1e-3,
            cap_quantile: 0.999,
            cap_window: 10_000,
            pilot: PilotMode::Fitted,
            sampler: StreamSampler::Fast,
            min_ratio: None,
            reference_bayes_error: None,
            bayes_tolerance: 0.015,
        }
    }
}

impl LogisticSimSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.c > 0.0) {
            return bad("c must be positive");
        }
        if self.batch == 0 || self.k == 0 || self.eval_points == 0 || self.cap_window == 0 || self.replicates == 0 {
            return bad("batch, k, replicates, eval_points and cap_window must be positive");
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return bad("decay must be a finite non-negative rate");
        }
        if self.init_points == 0 || self.n_points <= self.init_points {
            return bad("n_points must exceed init_points > 0");
        }
        if !(self.surprise_floor > 0.0 && self.surprise_floor <= 1.0) {
            return bad("surprise_floor must lie in (0, 1]");
        }
        if !(self.cap_quantile > 0.0 && self.cap_quantile <= 1.0) {
            return bad("cap_quantile must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn beta_at(&self, t: f64) -> [f64; 2] {
        let a = std::f64::consts::PI * t;
        [self.c * a.sin(), self.c * a.cos()]
    }
}

/// `E[min(p, 1 - p)]` for `p = logistic(c Z)`, `Z` standard normal: the
/// error of the Bayes classifier, by midpoint quadrature.
pub fn bayes_error(c: f64) -> f64 {
    let steps = 20_000;
    let h = 10.0 / steps as f64;
    (0..steps)
        .map(|i| {
            let z = (i as f64 + 0.5) * h;
            2.0 * (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt() * logistic(-c * z) * h
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRow {
    pub index: usize,
    pub t: f64,
    pub truth: [f64; 2],
    pub full: [f64; 2],
    pub decay_only: [f64; 2],
    pub case_control: [f64; 2],
    pub err_decay_only: f64,
    pub err_case_control: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NamedCheck {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub verdict: Verdict,
}

/// Outcome of one seeded run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogisticRun {
    pub seed: u64,
    /// Mean of `min(p, 1 - p)` over the generated items.
    pub bayes_error: f64,
    /// Share of labels the true boundary misclassifies.
    pub bayes_misclassification: f64,
    pub mean_error_decay_only: f64,
    pub mean_error_case_control: f64,
    pub refits: u64,
    pub failed_refits: u64,
    pub priority_mutations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogisticReport {
    pub spec: LogisticSimSpec,
    pub bayes_error: f64,
    pub bayes_misclassification: f64,
    pub mean_error_decay_only: f64,
    pub mean_error_case_control: f64,
    /// Pooled decay-only error over pooled case-control error.
    pub error_ratio: f64,
    pub failed_refits: u64,
    pub priority_mutations: u64,
    pub runs: Vec<LogisticRun>,
    /// Evaluation series of the first run.
    pub series: Vec<EvalRow>,
    pub checks: Vec<NamedCheck>,
    pub verdict: Verdict,
}

impl LogisticReport {
    /// Evaluation series as CSV, for plotting.
    pub fn series_csv(&self) -> String {
        let mut s = String::from(
            "index,t,true_b1,true_b2,full_b1,full_b2,decay_b1,decay_b2,lcc_b1,lcc_b2,err_decay,err_lcc\n",
        );
        for r in &self.series {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.index,
                r.t,
                r.truth[0],
                r.truth[1],
                r.full[0],
                r.full[1],
                r.decay_only[0],
                r.decay_only[1],
                r.case_control[0],
                r.case_control[1],
                r.err_decay_only,
                r.err_case_control
            );
        }
        s
    }
}

impl Report for LogisticReport {
    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn to_text(&self) -> String {
        let s = &self.spec;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "streaming logistic regression: n {}, k {}, c {}, batch {}, decay {:.4}, seed {}, runs {}",
            s.n_points, s.k, s.c, s.batch, s.decay, s.seed, s.replicates
        );
        let _ = writeln!(
            out,
            "bayes error {} (misclassified {})",
            fmt_num(self.bayes_error),
            fmt_num(self.bayes_misclassification)
        );
        let _ = writeln!(out, "{:>8} {:>14} {:>14} {:>10}", "seed", "decay only", "case-control", "ratio");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{:>8} {:>14} {:>14} {:>10}",
                r.seed,
                fmt_num(r.mean_error_decay_only),
                fmt_num(r.mean_error_case_control),
                fmt_num(r.mean_error_decay_only / r.mean_error_case_control)
            );
        }
        let _ = writeln!(
            out,
            "{:>8} {:>14} {:>14} {:>10}",
            "pooled",
            fmt_num(self.mean_error_decay_only),
            fmt_num(self.mean_error_case_control),
            fmt_num(self.error_ratio)
        );
        let _ = writeln!(
            out,
            "failed refits {}, priority mutations {}",
            self.failed_refits, self.priority_mutations
        );
        for c in &self.checks {
            let _ = writeln!(
                out,
                "check {:<32} value {:>12} target {:>12} {}",
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

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamSampler {
    /// Reservoir with heavy items (constant-time updates).
    #[default]
    Fast,
    /// Exact `k` smallest priorities.
    Heap,
}

enum Backend {
    Fast(FastPrioritySampler),
    Heap(HeapSampler),
}

/// One stream sampler with its running fit.
struct Track {
    sampler: Backend,
    /// Priority each item had when offered.
    offered: Vec<f64>,
    fit: [f64; 2],
    mutations: u64,
    failed: u64,
}

impl Track {
    fn new(spec: &LogisticSimSpec, seed: u64) -> Result<Self> {
        Ok(Self {
            sampler: match spec.sampler {
                StreamSampler::Fast => Backend::Fast(FastPrioritySampler::new(FastSamplerConfig::new(spec.k), seed)?),
                StreamSampler::Heap => Backend::Heap(HeapSampler::new(spec.k, PriorityFamily::UniformScaled, seed)?),
            },
            offered: vec![f64::NAN; spec.n_points],
            fit: [0.0; 2],
            mutations: 0,
            failed: 0,
        })
    }

    fn offer(&mut self, index: usize, weight: f64, t: f64, row: &[f64; 3], u: f64) -> Result<()> {
        self.offered[index] = u / weight;
        let item = WeightedItem {
            id: ItemId::Int(index as u64),
            weight,
            value: row.to_vec(),
            stratum: None,
            arrival_time: Some(t),
        };
        match &mut self.sampler {
            Backend::Fast(f) => f.add_with_uniform(item, u),
            Backend::Heap(h) => {
                h.add_with_priority(item, u / weight);
                Ok(())
            }
        }
    }

    /// Weighted fit on the retained items, coefficient `g(t_i) / F_i(tau)`.
    fn refit(&mut self, decay: f64, config: &FitConfig) {
        let (tau, retained): (f64, Vec<(&WeightedItem, Option<f64>)>) = match &self.sampler {
            Backend::Fast(f) => (f.tau(), f.retained().collect()),
            Backend::Heap(h) => (h.tau(), h.retained().map(|(i, r)| (i, Some(r))).collect()),
        };
        let mut data = Vec::with_capacity(retained.len());
        for (item, stored) in retained {
            if let (Some(r), ItemId::Int(i)) = (stored, &item.id) {
                if r != self.offered[*i as usize] {
                    self.mutations += 1;
                }
            }
            let g = (decay * item.arrival_time.unwrap_or(0.0)).exp();
            let inclusion = (item.weight * tau).min(1.0);
            data.push((g / inclusion, item.value.as_slice()));
        }
        let loss = LogisticLoss::new(2, false);
        match fit_weighted_loss(&loss, &data, config, Some(&self.fit)) {
            Ok(f) => self.fit = [f.theta[0], f.theta[1]],
            Err(_) => self.failed += 1,
        }
    }
}


fn full_fit(data: &[[f64; 3]], weights: &[f64], start: [f64; 2], config: &FitConfig) -> Result<[f64; 2]> {
    let pairs: Vec<(f64, &[f64])> = data.iter().zip(weights).map(|(r, &g)| (g, &r[..])).collect();
    let f = fit_weighted_loss(&LogisticLoss::new(2, false), &pairs, config, Some(&start))?;
    Ok([f.theta[0], f.theta[1]])
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn quantile(window: &VecDeque<f64>, q: f64) -> f64 {
    let mut v: Vec<f64> = window.iter().copied().collect();
    let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    *v.select_nth_unstable_by(idx, f64::total_cmp).1
}

/// Streams a drifting logistic model through two forward-decay priority
/// samplers, one weighting by decay alone and one by decay times the
/// pilot model's surprise, and tracks how far each sample's weighted fit
/// is from the full-data decay-weighted fit.
pub fn run_logistic_sim(spec: &LogisticSimSpec) -> Result<LogisticReport> {
    spec.validate()?;
    let seeds: Vec<u64> = (0..spec.replicates).map(|r| spec.seed.wrapping_add(r)).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut results = Vec::with_capacity(seeds.len());
    if threads <= 1 {
        for &seed in &seeds {
            results.push(run_once(spec, seed)?);
        }
    }
    for group in seeds.chunks(threads).filter(|_| threads > 1) {
        let done: Vec<Result<(LogisticRun, Vec<EvalRow>)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = group.iter().map(|&seed| scope.spawn(move || run_once(spec, seed))).collect();
            handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
        });
        for r in done {
            results.push(r?);
        }
    }
    let runs: Vec<LogisticRun> = results.iter().map(|(r, _)| r.clone()).collect();
    let series = results.into_iter().next().map(|(_, s)| s).unwrap_or_default();
    let m = runs.len() as f64;
    let avg = |f: fn(&LogisticRun) -> f64| runs.iter().map(f).sum::<f64>() / m;
    let bayes_error = avg(|r| r.bayes_error);
    let e_dec = avg(|r| r.mean_error_decay_only);
    let e_lcc = avg(|r| r.mean_error_case_control);
    let ratio = e_dec / e_lcc;
    let mutations: u64 = runs.iter().map(|r| r.priority_mutations).sum();
    let check = |name: &str, value: f64, target: f64, pass: bool| NamedCheck {
        name: name.to_owned(),
        value,
        target,
        verdict: Verdict::from_pass(pass),
    };
    let mut checks = vec![check("stored priorities unchanged", mutations as f64, 0.0, mutations == 0)];
    if let Some(r) = spec.reference_bayes_error {
        checks.push(check(
            "optimal prediction error",
            bayes_error,
            r,
            (bayes_error - r).abs() <= spec.bayes_tolerance,
        ));
    }
    if let Some(r) = spec.min_ratio {
        checks.push(check("L2 error ratio", ratio, r, ratio >= r));
    }
    let verdict = Verdict::from_pass(checks.iter().all(|c| c.verdict.passed()));
    Ok(LogisticReport {
        spec: spec.clone(),
        bayes_error,
        bayes_misclassification: avg(|r| r.bayes_misclassification),
        mean_error_decay_only: e_dec,
        mean_error_case_control: e_lcc,
        error_ratio: ratio,
        failed_refits: runs.iter().map(|r| r.failed_refits).sum(),
        priority_mutations: mutations,
        runs,
        series,
        checks,
        verdict,
    })
}

fn run_once(spec: &LogisticSimSpec, seed: u64) -> Result<(LogisticRun, Vec<EvalRow>)> {
    let n = spec.n_points;
    let mut rng = seeded_stream(seed, 0);
    let mut times: Vec<f64> = (0..n).map(|_| open_unit(&mut rng)).collect();
    times.sort_by(f64::total_cmp);
    let mut data = Vec::with_capacity(n);
    let mut bayes = 0.0;
    let mut wrong = 0usize;
    for &t in &times {
        let x1: f64 = StandardNormal.sample(&mut rng);
        let x2: f64 = StandardNormal.sample(&mut rng);
        let b = spec.beta_at(t);
        let eta = b[0] * x1 + b[1] * x2;
        let p = logistic(eta);
        let y = if open_unit(&mut rng) < p { 1.0 } else { 0.0 };
        bayes += p.min(1.0 - p);
        wrong += usize::from((y == 1.0) != (eta > 0.0));
        data.push([y, x1, x2]);
    }
    let weights: Vec<f64> = times.iter().map(|t| (spec.decay * t).exp()).collect();

    let sampler_seed = seed ^ 0x5EED_5A3B_1E00_0001;
    let mut decay_only = Track::new(spec, sampler_seed)?;
    let mut case_control = Track::new(spec, sampler_seed)?;
    let mut urng = seeded_stream(seed, 1);
    let config = FitConfig::default();
    let mut window: VecDeque<f64> = VecDeque::with_capacity(spec.cap_window);
    let mut cap = 1.0f64;
    let mut pilot: Option<[f64; 2]> = None;
    let mut full = [0.0; 2];
    let mut refits = 0u64;
    let mut series = Vec::new();
    let mut next_eval = 1usize;
    let eval_index = |e: usize| (e * n).div_ceil(spec.eval_points);

    let mut start = 0;
    while start < n {
        let end = if start < spec.init_points {
            spec.init_points
        } else {
            (start + spec.batch).min(n)
        };
        for i in start..end {
            let row = &data[i];
            let p = match (spec.pilot, pilot) {
                (PilotMode::Fitted, Some(b)) => logistic(b[0] * row[1] + b[1] * row[2]),
                (PilotMode::Oracle, _) => {
                    let b = spec.beta_at(times[i]);
                    logistic(b[0] * row[1] + b[1] * row[2])
                }
                _ => 0.5,
            };
            let surprise = if row[0] == 0.0 { p } else { 1.0 - p };
            let s = surprise.min(cap).max(spec.surprise_floor);
            if window.len() == spec.cap_window {
                window.pop_front();
            }
            window.push_back(s);
            let u = open_unit(&mut urng);
            decay_only.offer(i, weights[i], times[i], row, u)?;
            case_control.offer(i, weights[i] * s, times[i], row, u)?;
        }
        if end == spec.init_points {
            full = full_fit(&data[..end], &weights[..end], full, &config).unwrap_or(full);
            decay_only.fit = full;
            case_control.fit = full;
        } else {
            decay_only.refit(spec.decay, &config);
            case_control.refit(spec.decay, &config);
            refits += 1;
        }
        pilot = Some(case_control.fit);
        cap = quantile(&window, spec.cap_quantile).max(spec.surprise_floor);
        while next_eval <= spec.eval_points && end >= eval_index(next_eval) {
            next_eval += 1;
            if end <= spec.init_points {
                continue;
            }
            full = full_fit(&data[..end], &weights[..end], full, &config)?;
            let t = times[end - 1];
            series.push(EvalRow {
                index: end,
                t,
                truth: spec.beta_at(t),
                full,
                decay_only: decay_only.fit,
                case_control: case_control.fit,
                err_decay_only: dist(decay_only.fit, full),
                err_case_control: dist(case_control.fit, full),
            });
        }
        start = end;
    }

    let m = series.len().max(1) as f64;
    let run = LogisticRun {
        seed,
        bayes_error: bayes / n as f64,
        bayes_misclassification: wrong as f64 / n as f64,
        mean_error_decay_only: series.iter().map(|r| r.err_decay_only).sum::<f64>() / m,
        mean_error_case_control: series.iter().map(|r| r.err_case_control).sum::<f64>() / m,
        refits,
        failed_refits: decay_only.failed + case_control.failed,
        priority_mutations: decay_only.mutations + case_control.mutations,
    };
    Ok((run, series))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bayes_error_of_the_default_scale() {
        let b = bayes_error(2.8);
        assert!((b - 0.1734).abs() < 1e-3, "{b}");
        assert!((bayes_error(1e-9) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn spec_validation() {
        let mut s = LogisticSimSpec::default();
        assert!(s.validate().is_ok());
        s.c = 0.0;
        assert!(s.validate().is_err());
        s = LogisticSimSpec { batch: 0, ..Default::default() };
        assert!(s.validate().is_err());
        s = LogisticSimSpec { n_points: 10, ..Default::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn coincident_designs_give_identical_fits() {
        let spec = LogisticSimSpec {
            n_points: 6000,
            k: 200,
            decay: 0.0,
            pilot: PilotMode::Half,
            eval_points: 10,
            ..Default::default()
        };
        let r = run_logistic_sim(&spec).unwrap();
        assert_eq!(r.error_ratio, 1.0);
        assert_eq!(r.priority_mutations, 0);
        assert_eq!(r.series.len(), 9);
    }

    #[test]
    fn small_run_is_deterministic() {
        let spec = LogisticSimSpec {
            n_points: 5000,
            k: 200,
            eval_points: 5,
            seed: 4,
            ..Default::default()
        };
        let a = run_logistic_sim(&spec).unwrap();
        let b = run_logistic_sim(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.mean_error_case_control.is_finite());
    }
}
