//! Browser demo: three small experiments exposed to JavaScript.
//!
//! Each `#[wasm_bindgen]` entry point returns a JSON string; the plain
//! functions underneath are what the native tests exercise.

use athres::distributed::{merge_with, waste_report, MergeStrategy};
use athres::estimate::{weighted_cdf, AlphaMode};
use athres::harness::{draw_sample, simulate_node, Design, Population};
use athres::rng::{seeded, seeded_stream};
use athres::{PriorityFamily, ThresholdRule, WeightedItem};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Per-item inclusion behaviour of a fixed-size priority sample.
#[derive(Debug, Serialize)]
pub struct InclusionTable {
    pub weights: Vec<f64>,
    /// Share of trials in which each item was sampled.
    pub frequency: Vec<f64>,
    /// Trial average of `Z_i / F_i(tau)`; 1 for every item in expectation.
    pub ht_ratio: Vec<f64>,
    pub trials: u32,
}

pub fn inclusion_frequencies(weights: &[f64], k: usize, trials: u32, seed: u64) -> athres::Result<InclusionTable> {
    let items = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| WeightedItem::scalar(i as u64, w, w))
        .collect::<athres::Result<Vec<_>>>()?;
    let population = Population {
        name: "demo".into(),
        items,
    };
    let design = Design::Rule(ThresholdRule::FixedK(k));
    let mut rng = seeded(seed);
    let n = weights.len();
    let mut hits = vec![0u32; n];
    let mut ratio = vec![0.0; n];
    for _ in 0..trials {
        let sample = draw_sample(&design, &population, PriorityFamily::UniformScaled, &mut rng)?;
        for s in &sample.items {
            if let athres::ItemId::Int(i) = s.item.id {
                hits[i as usize] += 1;
                ratio[i as usize] += 1.0 / s.inclusion;
            }
        }
    }
    let t = f64::from(trials.max(1));
    Ok(InclusionTable {
        weights: weights.to_vec(),
        frequency: hits.iter().map(|&h| f64::from(h) / t).collect(),
        ht_ratio: ratio.iter().map(|r| r / t).collect(),
        trials,
    })
}

/// Node thresholds and the two merge strategies on simulated nodes.
#[derive(Debug, Serialize)]
pub struct DistributedView {
    pub node_thresholds: Vec<f64>,
    pub min_merge_threshold: f64,
    pub naive_threshold: f64,
    pub transferred: usize,
    pub min_merge_retained: usize,
    pub naive_retained: usize,
}

pub fn distributed_thresholds(nodes: usize, k: usize, n_per_node: u64, seed: u64) -> athres::Result<DistributedView> {
    if nodes == 0 || k == 0 || n_per_node <= k as u64 {
        return Err(athres::Error::Config("need nodes >= 1 and n_per_node > k >= 1".into()));
    }
    let envelopes: Vec<_> = (0..nodes)
        .map(|j| {
            let mut rng = seeded_stream(seed, j as u64);
            simulate_node(k, n_per_node, j as u64 * n_per_node, &mut rng)
        })
        .collect();
    let min = waste_report(&envelopes, MergeStrategy::MinMerge)?;
    let naive = waste_report(&envelopes, MergeStrategy::NaiveTopk)?;
    let naive_tau = merge_with(&envelopes, MergeStrategy::NaiveTopk)?
        .sample
        .threshold
        .scalar_tau()
        .unwrap_or(f64::INFINITY);
    Ok(DistributedView {
        node_thresholds: min.node_thresholds,
        min_merge_threshold: min.merged_threshold,
        naive_threshold: naive_tau,
        transferred: min.transferred,
        min_merge_retained: min.retained,
        naive_retained: naive.retained,
    })
}

/// Weighted CDF of a population against its estimate from one sample.
#[derive(Debug, Serialize)]
pub struct CdfCurve {
    pub xs: Vec<f64>,
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
    pub sample_size: usize,
}

pub fn cdf_curve(values: &[f64], weights: &[f64], k: usize, seed: u64, points: usize) -> athres::Result<CdfCurve> {
    if values.len() != weights.len() || values.is_empty() {
        return Err(athres::Error::Config("values and weights must be non-empty and equally long".into()));
    }
    let items = values
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(i, (&x, &w))| WeightedItem::scalar(i as u64, w, x))
        .collect::<athres::Result<Vec<_>>>()?;
    let population = Population {
        name: "demo".into(),
        items,
    };
    let mut rng = seeded(seed);
    let sample = draw_sample(&Design::Heap(k), &population, PriorityFamily::UniformScaled, &mut rng)?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let points = points.max(2);
    let xs: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let alpha = AlphaMode::Exact(population.total_weight());
    Ok(CdfCurve {
        truth: xs.iter().map(|&x| population.weighted_cdf(x)).collect(),
        estimate: xs
            .iter()
            .map(|&x| weighted_cdf(&sample, x, alpha))
            .collect::<athres::Result<_>>()?,
        xs,
        sample_size: sample.len(),
    })
}

fn to_js<T: Serialize>(r: athres::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = inclusionFrequencies)]
pub fn js_inclusion_frequencies(weights: Vec<f64>, k: usize, trials: u32, seed: u32) -> Result<String, JsError> {
    to_js(inclusion_frequencies(&weights, k, trials, u64::from(seed)))
}

#[wasm_bindgen(js_name = distributedThresholds)]
pub fn js_distributed_thresholds(nodes: usize, k: usize, n_per_node: u32, seed: u32) -> Result<String, JsError> {
    to_js(distributed_thresholds(nodes, k, u64::from(n_per_node), u64::from(seed)))
}

#[wasm_bindgen(js_name = cdfCurve)]
pub fn js_cdf_curve(values: Vec<f64>, weights: Vec<f64>, k: usize, seed: u32, points: usize) -> Result<String, JsError> {
    to_js(cdf_curve(&values, &weights, k, u64::from(seed), points))
}
