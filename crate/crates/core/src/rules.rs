//! Composable threshold rules evaluated on a whole priority vector.
//!
//! Rule names follow the config/CLI grammar: `fixed_k:<k>`, `wegman:<k>`,
//! `var_adapt:<eps>`, `seq(<r1>,<r2>)`, `min(<r1>,<r2>)`, `max(<r1>,<r2>)`,
//! plus `identity` and the deliberately broken `peek`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::item::WeightedItem;
use crate::threshold::{
    kth_smallest, variance_adapted_update, wegman_threshold, DegreeCap, RejectedSummary,
    VarianceTarget,
};

#[derive(Clone, Debug, PartialEq)]
pub enum ThresholdRule {
    /// `tau = R_(k+1)`.
    FixedK(usize),
    /// Largest power of 1/2 not above `R_(k+1)`.
    Wegman(usize),
    /// Streaming variance-adapted rule fed by rejected items.
    VarAdapt(VarianceTarget),
    /// `tau = +inf`: keep everything.
    Identity,
    /// `tau = R_(1)`. Looks at the priorities it is supposed to judge, so
    /// no item is ever retained and no factorization exists.
    Peek,
    Min(Box<ThresholdRule>, Box<ThresholdRule>),
    Max(Box<ThresholdRule>, Box<ThresholdRule>),
    /// Apply the first rule, then the second to the survivors.
    Seq(Box<ThresholdRule>, Box<ThresholdRule>),
}

impl ThresholdRule {
    pub fn min(a: ThresholdRule, b: ThresholdRule) -> Self {
        ThresholdRule::Min(Box::new(a), Box::new(b))
    }

    pub fn max(a: ThresholdRule, b: ThresholdRule) -> Self {
        ThresholdRule::Max(Box::new(a), Box::new(b))
    }

    pub fn sequential(first: ThresholdRule, second: ThresholdRule) -> Self {
        ThresholdRule::Seq(Box::new(first), Box::new(second))
    }

    /// Switches every variance-adapted component to the
    /// `mean^2 / (eps^2 sd^2)` sample-size formula.
    pub fn with_paper_formula(self) -> Self {
        match self {
            ThresholdRule::VarAdapt(t) => ThresholdRule::VarAdapt(VarianceTarget {
                paper_formula: true,
                ..t
            }),
            ThresholdRule::Min(a, b) => ThresholdRule::min(a.with_paper_formula(), b.with_paper_formula()),
            ThresholdRule::Max(a, b) => ThresholdRule::max(a.with_paper_formula(), b.with_paper_formula()),
            ThresholdRule::Seq(a, b) => ThresholdRule::sequential(a.with_paper_formula(), b.with_paper_formula()),
            other => other,
        }
    }

    /// Degree of substitution compatibility the rule guarantees.
    pub fn degree_cap(&self) -> DegreeCap {
        match self {
            ThresholdRule::FixedK(_)
            | ThresholdRule::Wegman(_)
            | ThresholdRule::VarAdapt(_)
            | ThresholdRule::Identity => DegreeCap::SampleSize,
            ThresholdRule::Peek => DegreeCap::Fixed(0),
            ThresholdRule::Min(a, b) | ThresholdRule::Seq(a, b) => {
                a.degree_cap().min(b.degree_cap())
            }
            ThresholdRule::Max(a, b) => a.degree_cap().min(b.degree_cap()).min(DegreeCap::Fixed(1)),
        }
    }

    /// Threshold for priorities `priorities` of items with payloads
    /// `items` (same order, arrival order). Payloads are only read by the
    /// variance-adapted rule.
    pub fn threshold(&self, priorities: &[f64], items: &[WeightedItem]) -> f64 {
        debug_assert!(items.is_empty() || items.len() == priorities.len());
        match self {
            ThresholdRule::FixedK(k) => kth_smallest(priorities, *k),
            ThresholdRule::Wegman(k) => {
                wegman_threshold(kth_smallest(priorities, *k)).unwrap_or(f64::INFINITY)
            }
            ThresholdRule::VarAdapt(target) => var_adapt_stream(priorities, items, target),
            ThresholdRule::Identity => f64::INFINITY,
            ThresholdRule::Peek => priorities.iter().copied().fold(f64::INFINITY, f64::min),
            ThresholdRule::Min(a, b) => a.threshold(priorities, items).min(b.threshold(priorities, items)),
            ThresholdRule::Max(a, b) => a.threshold(priorities, items).max(b.threshold(priorities, items)),
            ThresholdRule::Seq(a, b) => {
                let t1 = a.threshold(priorities, items);
                let keep: Vec<usize> = (0..priorities.len()).filter(|&i| priorities[i] < t1).collect();
                let sub_r: Vec<f64> = keep.iter().map(|&i| priorities[i]).collect();
                let sub_items: Vec<WeightedItem> = if items.is_empty() {
                    Vec::new()
                } else {
                    keep.iter().map(|&i| items[i].clone()).collect()
                };
                t1.min(b.threshold(&sub_r, &sub_items))
            }
        }
    }
}

/// Replays the variance-adapted rule over the stream: items at or above
/// the running threshold (on arrival or after a decrease) feed the
/// rejected-item moments.
fn var_adapt_stream(priorities: &[f64], items: &[WeightedItem], target: &VarianceTarget) -> f64 {
    let mut tau = f64::INFINITY;
    let mut rejected = RejectedSummary::default();
    let mut held: Vec<usize> = Vec::new();
    let zero = WeightedItem {
        id: 0.into(),
        weight: 1.0,
        value: vec![0.0],
        stratum: None,
        arrival_time: None,
    };
    let payload = |i: usize| items.get(i).unwrap_or(&zero);
    for (n, &r) in priorities.iter().enumerate() {
        if r < tau {
            held.push(n);
        } else {
            rejected.reject(payload(n));
        }
        let next = variance_adapted_update(&rejected, tau, n as u64 + 1, target);
        if next < tau {
            tau = next;
            held.retain(|&i| {
                let keep = priorities[i] < tau;
                if !keep {
                    rejected.reject(payload(i));
                }
                keep
            });
        }
    }
    tau
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdRule::FixedK(k) => write!(f, "fixed_k:{k}"),
            ThresholdRule::Wegman(k) => write!(f, "wegman:{k}"),
            ThresholdRule::VarAdapt(t) => write!(f, "var_adapt:{}", t.epsilon),
            ThresholdRule::Identity => f.write_str("identity"),
            ThresholdRule::Peek => f.write_str("peek"),
            ThresholdRule::Min(a, b) => write!(f, "min({a},{b})"),
            ThresholdRule::Max(a, b) => write!(f, "max({a},{b})"),
            ThresholdRule::Seq(a, b) => write!(f, "seq({a},{b})"),
        }
    }
}

impl FromStr for ThresholdRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let unknown = || Error::Unknown {
            kind: "threshold rule",
            name: s.to_owned(),
        };
        for (head, ctor) in [
            ("seq(", ThresholdRule::sequential as fn(_, _) -> _),
            ("min(", ThresholdRule::min),
            ("max(", ThresholdRule::max),
        ] {
            if let Some(rest) = s.strip_prefix(head) {
                let inner = rest.strip_suffix(')').ok_or_else(unknown)?;
                let split = top_level_comma(inner).ok_or_else(unknown)?;
                let a = inner[..split].parse()?;
                let b = inner[split + 1..].parse()?;
                return Ok(ctor(a, b));
            }
        }
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        let parse_k = || -> Result<usize> {
            let k: usize = arg.parse().map_err(|_| unknown())?;
            if k == 0 {
                return Err(Error::InvalidSampleSize("k must be at least 1".into()));
            }
            Ok(k)
        };
        match name {
            "fixed_k" => Ok(ThresholdRule::FixedK(parse_k()?)),
            "wegman" => Ok(ThresholdRule::Wegman(parse_k()?)),
            "var_adapt" => {
                let eps: f64 = arg.parse().map_err(|_| unknown())?;
                Ok(ThresholdRule::VarAdapt(VarianceTarget::new(eps)?))
            }
            "identity" if arg.is_empty() => Ok(ThresholdRule::Identity),
            "peek" if arg.is_empty() => Ok(ThresholdRule::Peek),
            _ => Err(unknown()),
        }
    }
}

fn top_level_comma(s: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => return Some(i),
            _ => {}
        }
    }
    None
}
