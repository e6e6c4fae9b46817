//! Experiment drivers, Monte-Carlo verification and report output.

mod design;
mod factor;
mod ingest;
mod logistic;
mod unbiased;
mod waste;

use std::fmt;
use std::thread;

use serde::{Deserialize, Serialize};

pub use design::{draw_sample, rule_sample, Design, Population};
pub use factor::{check_factorization, FactorEntry, FactorizationReport};
pub use ingest::{ingest, ingest_path, InputFormat, Ingested};
pub use logistic::{bayes_error, run_logistic_sim, EvalRow, LogisticReport, LogisticRun, LogisticSimSpec, PilotMode, StreamSampler};
pub use unbiased::{verify_unbiasedness, EstimatorCheck, ExperimentConfig, UnbiasednessReport};
pub use waste::{run_distributed_waste, simulate_node, DistributedWasteSpec, StrategySummary, WasteExperimentReport};

use crate::error::Result;
use crate::rng::{seeded_stream, SamplerRng};
use crate::stats::RunningMoments;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

/// A report renders as a text table or a JSON record; both depend only on
/// the experiment's configuration and seed.
pub trait Report: Serialize {
    fn verdict(&self) -> Verdict;
    fn to_text(&self) -> String;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            _ => Err(crate::Error::Unknown {
                kind: "report format",
                name: s.to_owned(),
            }),
        }
    }
}

pub fn render<R: Report>(report: &R, format: ReportFormat) -> Result<String> {
    Ok(match format {
        ReportFormat::Text => report.to_text(),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            s
        }
    })
}

/// Replicates are split into this many chunks whatever the thread count,
/// so results do not depend on the machine.
const CHUNKS: u64 = 16;

/// Runs `replicates` independent replicates, replicate `r` drawing from
/// stream `r` of `seed`. Each chunk folds into its own accumulator; the
/// accumulators are merged in chunk order.
pub fn fan_out<A, F, M>(replicates: u64, seed: u64, init: impl Fn() -> A + Sync, run: F, merge: M) -> Result<A>
where
    A: Send,
    F: Fn(&mut A, &mut SamplerRng) -> Result<()> + Sync,
    M: Fn(A, A) -> A,
{
    let chunks = CHUNKS.min(replicates.max(1));
    let bounds = |c: u64| (c * replicates / chunks, (c + 1) * replicates / chunks);
    let run_chunk = |c: u64| -> Result<A> {
        let mut acc = init();
        let (lo, hi) = bounds(c);
        for r in lo..hi {
            let mut rng = seeded_stream(seed, r);
            run(&mut acc, &mut rng)?;
        }
        Ok(acc)
    };
    let threads = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(chunks as usize);
    let mut results: Vec<Option<Result<A>>> = (0..chunks).map(|_| None).collect();
    if threads <= 1 {
        for (c, slot) in results.iter_mut().enumerate() {
            *slot = Some(run_chunk(c as u64));
        }
    } else {
        thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let run_chunk = &run_chunk;
                    scope.spawn(move || {
                        (t as u64..chunks)
                            .step_by(threads)
                            .map(|c| (c, run_chunk(c)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (c, r) in h.join().expect("replicate worker panicked") {
                    results[c as usize] = Some(r);
                }
            }
        });
    }
    let mut acc: Option<A> = None;
    for r in results {
        let r = r.expect("every chunk ran")?;
        acc = Some(match acc {
            None => r,
            Some(a) => merge(a, r),
        });
    }
    Ok(acc.unwrap_or_else(init))
}

/// Monte-Carlo moments of a vector of `dim` observations per replicate.
pub fn monte_carlo<F>(replicates: u64, seed: u64, dim: usize, observe: F) -> Result<Vec<RunningMoments>>
where
    F: Fn(&mut SamplerRng, &mut [f64]) -> Result<()> + Sync,
{
    fan_out(
        replicates,
        seed,
        || (vec![RunningMoments::default(); dim], vec![0.0; dim]),
        |(acc, buf), rng| {
            buf.iter_mut().for_each(|b| *b = 0.0);
            observe(rng, buf)?;
            for (m, x) in acc.iter_mut().zip(buf.iter()) {
                m.push(*x);
            }
            Ok(())
        },
        |(a, buf), (b, _)| (a.iter().zip(&b).map(|(x, y)| x.merge(y)).collect(), buf),
    )
    .map(|(m, _)| m)
}

pub(crate) fn fmt_num(v: f64) -> String {
    if v.is_finite() && v != 0.0 && (v.abs() >= 1e6 || v.abs() < 1e-3) {
        format!("{v:.4e}")
    } else {
        format!("{v:.6}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn fan_out_is_chunk_deterministic() {
        let sum = |reps| {
            fan_out(
                reps,
                5,
                || 0u64,
                |a, rng| {
                    *a = a.wrapping_add(rng.next_u64() >> 8);
                    Ok(())
                },
                |a, b| a.wrapping_add(b),
            )
            .unwrap()
        };
        assert_eq!(sum(1000), sum(1000));
        assert_ne!(sum(1000), sum(999));
        assert_eq!(sum(0), 0);
    }

    #[test]
    fn monte_carlo_mean() {
        let m = monte_carlo(20_000, 1, 2, |rng, out| {
            let u = crate::rng::open_unit(rng);
            out[0] = u;
            out[1] = u * u;
            Ok(())
        })
        .unwrap();
        assert_eq!(m[0].count, 20_000);
        assert!(m[0].z_score(0.5).abs() < 4.0);
        assert!(m[1].z_score(1.0 / 3.0).abs() < 4.0);
    }

    #[test]
    fn errors_propagate() {
        let r = monte_carlo(10, 1, 1, |_, _| Err(crate::Error::EmptySample));
        assert!(matches!(r, Err(crate::Error::EmptySample)));
    }
}
