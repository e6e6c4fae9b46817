use std::collections::HashMap;
use std::fmt::Write;

use serde::Serialize;

use super::design::{draw_sample, Design, Population};
use super::{fmt_num, monte_carlo, Report, Verdict};
use crate::error::{Error, Result};
use crate::family::PriorityFamily;
use crate::item::ItemId;

/// Largest population the factorization check enumerates subsets of.
pub const MAX_POPULATION: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactorEntry {
    /// Item ids in the index set.
    pub set: Vec<String>,
    pub mean: f64,
    pub std_error: f64,
    #[serde(with = "crate::serde_inf")]
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeSummary {
    pub degree: usize,
    pub sets: usize,
    #[serde(with = "crate::serde_inf")]
    pub max_abs_z: f64,
    pub within_cap: bool,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactorizationReport {
    pub design: String,
    pub population: String,
    pub family: String,
    pub v: usize,
    pub trials: u64,
    pub seed: u64,
    pub declared_degree_cap: String,
    pub tolerance_se: f64,
    pub degrees: Vec<DegreeSummary>,
    /// Share of index sets with `|z| > 2`; near 5% when the standard
    /// errors are calibrated.
    pub frac_abs_z_over_2: f64,
    pub calibrated: bool,
    pub entries: Vec<FactorEntry>,
    pub verdict: Verdict,
}

impl FactorizationReport {
    pub fn degree(&self, d: usize) -> Option<&DegreeSummary> {
        self.degrees.iter().find(|s| s.degree == d)
    }
}

impl Report for FactorizationReport {
    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "factorization check: {} on {} ({})", self.design, self.population, self.family);
        let _ = writeln!(
            s,
            "trials {}  seed {}  v {}  declared degree cap {}",
            self.trials, self.seed, self.v, self.declared_degree_cap
        );
        let _ = writeln!(s, "{:>6} {:>6} {:>12} {:>10} {:>6}", "degree", "sets", "max|z|", "in cap", "");
        for d in &self.degrees {
            let _ = writeln!(
                s,
                "{:>6} {:>6} {:>12} {:>10} {:>6}",
                d.degree,
                d.sets,
                fmt_num(d.max_abs_z),
                d.within_cap,
                d.verdict
            );
        }
        let mut worst: Vec<&FactorEntry> = self.entries.iter().collect();
        worst.sort_by(|a, b| b.z.abs().total_cmp(&a.z.abs()));
        let _ = writeln!(s, "largest deviations:");
        for e in worst.iter().take(5) {
            let _ = writeln!(
                s,
                "  {{{}}}  mean {}  se {}  z {}",
                e.set.join(","),
                fmt_num(e.mean),
                fmt_num(e.std_error),
                fmt_num(e.z)
            );
        }
        let _ = writeln!(
            s,
            "share |z|>2: {:.4} ({})",
            self.frac_abs_z_over_2,
            if self.calibrated { "calibrated" } else { "miscalibrated" }
        );
        let _ = writeln!(s, "verdict: {}", self.verdict);
        s
    }
}

/// All index sets of size `1..=v`, by size then lexicographically.
fn index_sets(n: usize, v: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for size in 1..=v {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.clone());
            let Some(pos) = (0..size).rev().find(|&i| idx[i] < n - size + i) else {
                break;
            };
            idx[pos] += 1;
            for j in pos + 1..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

/// Estimates `E[prod_{i in S} Z_i / F_i(tau_i)]` for every index set `S`
/// with `|S| <= v`; each should equal 1 when the design is compatible up
/// to degree `|S|`.
pub fn check_factorization(
    design: &Design,
    population: &Population,
    family: PriorityFamily,
    v: usize,
    trials: u64,
    seed: u64,
) -> Result<FactorizationReport> {
    let n = population.len();
    if n == 0 || n > MAX_POPULATION {
        return Err(Error::Config(format!(
            "factorization check needs 1..={MAX_POPULATION} items, got {n}"
        )));
    }
    if v == 0 || v > n {
        return Err(Error::Config(format!("degree v = {v} must lie in 1..={n}")));
    }
    if trials < 2 {
        return Err(Error::Config("need at least two trials".into()));
    }
    let index: HashMap<&ItemId, usize> = population.items.iter().enumerate().map(|(i, it)| (&it.id, i)).collect();
    let sets = index_sets(n, v);
    let moments = monte_carlo(trials, seed, sets.len(), |rng, out| {
        let sample = draw_sample(design, population, family, rng)?;
        let mut q = vec![0.0; n];
        for s in &sample.items {
            if let Some(&i) = index.get(&s.item.id) {
                q[i] = 1.0 / s.inclusion;
            }
        }
        for (o, set) in out.iter_mut().zip(&sets) {
            *o = set.iter().map(|&i| q[i]).product();
        }
        Ok(())
    })?;
    let tolerance = 4.0;
    let cap = design.degree_cap().effective(usize::MAX);
    let entries: Vec<FactorEntry> = sets
        .iter()
        .zip(&moments)
        .map(|(set, m)| FactorEntry {
            set: set.iter().map(|&i| population.items[i].id.to_string()).collect(),
            mean: m.mean,
            std_error: m.std_error(),
            z: m.z_score(1.0),
        })
        .collect();
    let degrees: Vec<DegreeSummary> = (1..=v)
        .map(|d| {
            let zs: Vec<f64> = sets
                .iter()
                .zip(&entries)
                .filter(|(s, _)| s.len() == d)
                .map(|(_, e)| e.z.abs())
                .collect();
            let max_abs_z = zs.iter().copied().fold(0.0, |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
            DegreeSummary {
                degree: d,
                sets: zs.len(),
                max_abs_z,
                within_cap: d <= cap,
                verdict: Verdict::from_pass(max_abs_z <= tolerance),
            }
        })
        .collect();
    let over2 = entries.iter().filter(|e| !(e.z.abs() <= 2.0)).count();
    let frac = over2 as f64 / entries.len() as f64;
    let verdict = Verdict::from_pass(degrees.iter().all(|d| d.verdict.passed()));
    Ok(FactorizationReport {
        design: design.to_string(),
        population: population.name.clone(),
        family: family.to_string(),
        v,
        trials,
        seed,
        declared_degree_cap: match design.degree_cap() {
            crate::threshold::DegreeCap::SampleSize => "sample size".into(),
            crate::threshold::DegreeCap::Fixed(d) => d.to_string(),
        },
        tolerance_se: tolerance,
        degrees,
        frac_abs_z_over_2: frac,
        calibrated: frac < 0.10,
        entries,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_sets_enumerate_all_subsets() {
        let s = index_sets(4, 2);
        assert_eq!(s.len(), 4 + 6);
        assert_eq!(s[4], vec![0, 1]);
        assert_eq!(s[9], vec![2, 3]);
        assert_eq!(index_sets(5, 5).len(), 31);
    }

    #[test]
    fn rejects_large_populations() {
        let d = Design::Rule(crate::rules::ThresholdRule::FixedK(2));
        let p = Population::linear(13);
        assert!(check_factorization(&d, &p, PriorityFamily::UniformScaled, 1, 100, 1).is_err());
        let p = Population::linear(4);
        assert!(check_factorization(&d, &p, PriorityFamily::UniformScaled, 5, 100, 1).is_err());
    }

    #[test]
    fn census_factorizes_exactly() {
        let d = Design::Rule(crate::rules::ThresholdRule::Identity);
        let p = Population::linear(4);
        let r = check_factorization(&d, &p, PriorityFamily::UniformScaled, 4, 50, 1).unwrap();
        assert!(r.entries.iter().all(|e| e.mean == 1.0 && e.z == 0.0));
        assert_eq!(r.verdict, Verdict::Pass);
    }
}
