use std::path::PathBuf;

use athres::distributed::SampleEnvelope;
use athres::harness::{draw_sample, Design, Population};
use athres::rng::seeded;
use athres::{PriorityFamily, WeightedItem};

pub fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/envelope_v1.jsonl")
}

/// The envelope `tests/golden/envelope_v1.jsonl` was written from.
/// `ATHRES_BLESS=1` rewrites the file.
pub fn golden_envelope() -> athres::Result<SampleEnvelope> {
    let items = vec![
        WeightedItem::scalar(1u64, 1.0, 3.5)?,
        WeightedItem::scalar("north-7", 2.5, -1.0)?.with_stratum("north"),
        WeightedItem::new(3u64, 6.0, vec![1.0, 0.25, -2.0])?.with_arrival_time(0.75),
        WeightedItem::scalar(4u64, 10.0, 1e-9)?,
        WeightedItem::scalar("x\"q", 4.0, 0.1)?,
        WeightedItem::scalar(6u64, 3.0, 2.0)?,
        WeightedItem::scalar(7u64, 0.5, -0.0)?,
    ];
    let population = Population {
        name: "golden".into(),
        items,
    };
    let sample = draw_sample(&Design::Heap(4), &population, PriorityFamily::UniformScaled, &mut seeded(2024))?;
    Ok(SampleEnvelope::new(sample))
}
