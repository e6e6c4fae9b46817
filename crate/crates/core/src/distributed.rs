//! Serializable samples and the min-threshold merge.
//!
//! An envelope file is JSON Lines: one header record followed by one
//! record per retained item. Field order is fixed by the struct
//! definitions, so identical envelopes serialize to identical bytes.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::PriorityFamily;
use crate::sampler::{Counters, Sample, SampleItem};
use crate::threshold::{kth_smallest, merge_min, ThresholdScope, ThresholdState};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SampleEnvelope {
    pub format_version: u32,
    /// Seeds of the node runs that contributed to this sample.
    pub sources: Vec<u64>,
    pub sample: Sample,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    family: PriorityFamily,
    threshold: ThresholdState,
    seed: u64,
    sources: Vec<u64>,
    counters: Counters,
    mergeable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold_item: Option<SampleItem>,
    items: usize,
}

impl SampleEnvelope {
    pub fn new(sample: Sample) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            sources: vec![sample.seed],
            sample,
        }
    }

    /// True when every item carries its priority, which merging needs to
    /// re-filter against a smaller threshold.
    pub fn mergeable(&self) -> bool {
        self.sample.items.iter().all(|s| s.priority.is_some())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let s = &self.sample;
        let header = Header {
            format_version: self.format_version,
            family: s.family,
            threshold: s.threshold.clone(),
            seed: s.seed,
            sources: self.sources.clone(),
            counters: s.counters,
            mergeable: self.mergeable(),
            threshold_item: s.threshold_item.clone(),
            items: s.items.len(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for item in &s.items {
            serde_json::to_writer(&mut out, item)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits utf-8")
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let bad = |line: usize, reason: String| Error::Envelope { line, reason };
        let mut lines = input.lines().enumerate().filter(|(_, l)| match l {
            Ok(l) => !l.trim().is_empty(),
            Err(_) => true,
        });
        let (_, first) = lines.next().ok_or_else(|| bad(1, "empty envelope".into()))?;
        let header: Header = serde_json::from_str(&first?).map_err(|e| bad(1, e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(
                1,
                format!("unsupported format_version {}", header.format_version),
            ));
        }
        let mut items = Vec::with_capacity(header.items);
        for (i, line) in lines {
            let item: SampleItem =
                serde_json::from_str(&line?).map_err(|e| bad(i + 1, e.to_string()))?;
            items.push(item);
        }
        if items.len() != header.items {
            return Err(bad(
                1,
                format!("header announces {} items, found {}", header.items, items.len()),
            ));
        }
        let env = Self {
            format_version: header.format_version,
            sources: header.sources,
            sample: Sample {
                items,
                threshold: header.threshold,
                family: header.family,
                seed: header.seed,
                threshold_item: header.threshold_item,
                counters: header.counters,
            },
        };
        if header.mergeable && !env.mergeable() {
            return Err(bad(1, "marked mergeable but some items lack priorities".into()));
        }
        Ok(env)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

fn check_inputs(envelopes: &[SampleEnvelope]) -> Result<PriorityFamily> {
    let first = envelopes
        .first()
        .ok_or_else(|| Error::Config("nothing to merge".into()))?;
    let family = first.sample.family;
    let mut seen = HashSet::new();
    for env in envelopes {
        if env.sample.family != family {
            return Err(Error::IncompatibleFamilies(
                family.to_string(),
                env.sample.family.to_string(),
            ));
        }
        for s in &env.sample.items {
            if s.priority.is_none() {
                return Err(Error::Config(format!(
                    "item {} has no stored priority; the envelope is not mergeable",
                    s.item.id
                )));
            }
            if !seen.insert(&s.item.id) {
                return Err(Error::DuplicateItem(s.item.id.to_string()));
            }
        }
    }
    Ok(family)
}

/// Keeps the items below `threshold` and recomputes their inclusion
/// probabilities; dropped items join the rejected summary.
fn refilter(
    envelopes: &[SampleEnvelope],
    family: PriorityFamily,
    mut threshold: ThresholdState,
    threshold_item: Option<SampleItem>,
) -> Result<SampleEnvelope> {
    if matches!(threshold.tau, ThresholdScope::Objectives(_)) {
        return Err(Error::Config("multi-objective samples cannot be re-filtered".into()));
    }
    let mut sample = Sample {
        items: Vec::new(),
        threshold: ThresholdState::unbounded(),
        family,
        seed: envelopes[0].sample.seed,
        threshold_item: None,
        counters: Counters::default(),
    };
    let mut sources = Vec::new();
    let mut dropped = Vec::new();
    for env in envelopes {
        sources.extend_from_slice(&env.sources);
        let c = env.sample.counters;
        sample.counters.items_seen += c.items_seen;
        sample.counters.heap_ops += c.heap_ops;
        sample.counters.threshold_updates += c.threshold_updates;
        sample.items.extend(env.sample.items.iter().cloned());
    }
    sample.threshold = threshold.clone();
    let all = std::mem::take(&mut sample.items);
    for s in all {
        let keep = match sample.item_tau(&s.item) {
            Some(t) => s.priority.is_some_and(|r| r < t),
            None => true,
        };
        if keep {
            sample.items.push(s);
        } else {
            dropped.push(s);
        }
    }
    for s in &dropped {
        threshold.rejected.reject(&s.item);
    }
    sample.threshold = threshold;
    for s in &mut sample.items {
        s.inclusion = sample.threshold.inclusion(&family, &s.item);
    }
    sample.threshold_item = threshold_item.map(|mut s| {
        s.inclusion = sample.threshold.inclusion(&family, &s.item);
        s
    });
    if sample.threshold_item.is_none() {
        sample.threshold.source_id = None;
    }
    Ok(SampleEnvelope {
        format_version: FORMAT_VERSION,
        sources,
        sample,
    })
}

/// Min-threshold merge: `tau = min_j tau_j`, items are the union filtered
/// to `R_i < tau`, and the degree cap is the smallest input cap.
pub fn merge_samples(envelopes: &[SampleEnvelope]) -> Result<SampleEnvelope> {
    let family = check_inputs(envelopes)?;
    let mut threshold = envelopes[0].sample.threshold.clone();
    for env in &envelopes[1..] {
        threshold = merge_min(&threshold, &env.sample.threshold)?;
    }
    let source = envelopes
        .iter()
        .filter(|e| e.sample.threshold.source_id.is_some() && e.sample.threshold_item.is_some())
        .find(|e| e.sample.threshold.source_id == threshold.source_id)
        .and_then(|e| e.sample.threshold_item.clone())
        .filter(|s| threshold.scalar_tau().is_some() && s.priority == threshold.scalar_tau());
    refilter(envelopes, family, threshold, source)
}

/// Threshold a naive coordinator would use: the (k+1)-th smallest
/// priority over the union of transferred items, `k` the largest node
/// sample size, capped by the smallest node threshold.
pub fn naive_threshold(envelopes: &[SampleEnvelope]) -> Result<f64> {
    check_inputs(envelopes)?;
    let k = envelopes.iter().map(|e| e.sample.len()).max().unwrap_or(0);
    let mut priorities = Vec::new();
    let mut tau_min = f64::INFINITY;
    for env in envelopes {
        let t = env.sample.threshold.scalar_tau().ok_or_else(|| {
            Error::Config("the naive strategy needs scalar thresholds".into())
        })?;
        tau_min = tau_min.min(t);
        priorities.extend(env.sample.items.iter().filter_map(|s| s.priority));
    }
    Ok(kth_smallest(&priorities, k).min(tau_min))
}

/// Union re-thresholded at [`naive_threshold`]. This is the min merge
/// followed by a fixed-size rule, so it is still a valid sample.
pub fn merge_naive(envelopes: &[SampleEnvelope]) -> Result<SampleEnvelope> {
    let tau = naive_threshold(envelopes)?;
    let merged = merge_samples(envelopes)?;
    let mut threshold = merged.sample.threshold.clone();
    threshold.tau = ThresholdScope::Scalar(tau);
    let source = merged
        .sample
        .items
        .iter()
        .find(|s| s.priority == Some(tau))
        .cloned()
        .or_else(|| merged.sample.threshold_item.clone().filter(|s| s.priority == Some(tau)));
    threshold.source_id = source.as_ref().map(|s| s.item.id.clone());
    let mut out = refilter(std::slice::from_ref(&merged), merged.sample.family, threshold, source)?;
    out.sources = merged.sources;
    out.sample.threshold.rejected = merged.sample.threshold.rejected.clone();
    for s in merged.sample.items.iter().filter(|s| s.priority >= Some(tau)) {
        out.sample.threshold.rejected.reject(&s.item);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeStrategy {
    MinMerge,
    NaiveTopk,
}

impl fmt::Display for MergeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MergeStrategy::MinMerge => "min",
            MergeStrategy::NaiveTopk => "naive",
        })
    }
}

impl std::str::FromStr for MergeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" | "min_merge" => Ok(MergeStrategy::MinMerge),
            "naive" | "naive_topk" => Ok(MergeStrategy::NaiveTopk),
            _ => Err(Error::Unknown {
                kind: "merge strategy",
                name: s.to_owned(),
            }),
        }
    }
}

pub fn merge_with(envelopes: &[SampleEnvelope], strategy: MergeStrategy) -> Result<SampleEnvelope> {
    match strategy {
        MergeStrategy::MinMerge => merge_samples(envelopes),
        MergeStrategy::NaiveTopk => merge_naive(envelopes),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WasteReport {
    pub strategy: MergeStrategy,
    pub nodes: usize,
    pub transferred: usize,
    pub retained: usize,
    pub retention: f64,
    #[serde(with = "crate::serde_inf")]
    pub merged_threshold: f64,
    #[serde(with = "crate::serde_inf::vec")]
    pub node_thresholds: Vec<f64>,
}

pub fn waste_report(envelopes: &[SampleEnvelope], strategy: MergeStrategy) -> Result<WasteReport> {
    let merged = merge_with(envelopes, strategy)?;
    let transferred: usize = envelopes.iter().map(|e| e.sample.len()).sum();
    let retained = merged.sample.len();
    Ok(WasteReport {
        strategy,
        nodes: envelopes.len(),
        transferred,
        retained,
        retention: if transferred == 0 {
            1.0
        } else {
            retained as f64 / transferred as f64
        },
        merged_threshold: merged.sample.threshold.scalar_tau().unwrap_or(f64::NAN),
        node_thresholds: envelopes
            .iter()
            .map(|e| e.sample.threshold.scalar_tau().unwrap_or(f64::NAN))
            .collect(),
    })
}
