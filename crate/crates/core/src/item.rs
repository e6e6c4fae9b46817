use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque item identifier. Integer ids avoid an allocation per item on
/// synthetic streams; string ids come from ingested records.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ItemId {
    Int(u64),
    Str(String),
}

impl ItemId {
    /// Stable 64-bit key (FNV-1a), independent of the std hasher so that
    /// keyed priorities reproduce across builds and machines.
    pub fn stable_hash(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(PRIME);
            }
        };
        match self {
            ItemId::Int(v) => {
                feed(&[0]);
                feed(&v.to_le_bytes());
            }
            ItemId::Str(s) => {
                feed(&[1]);
                feed(s.as_bytes());
            }
        }
        h
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ItemId::Int(v) => write!(f, "{v}"),
            ItemId::Str(s) => f.write_str(s),
        }
    }
}

impl From<u64> for ItemId {
    fn from(v: u64) -> Self {
        ItemId::Int(v)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        ItemId::Str(s.to_owned())
    }
}

impl From<String> for ItemId {
    fn from(s: String) -> Self {
        ItemId::Str(s)
    }
}

/// An observation with a positive weight. `value` holds the payload: a
/// scalar measurement, or a response followed by covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedItem {
    pub id: ItemId,
    #[serde(rename = "w")]
    pub weight: f64,
    #[serde(rename = "x")]
    pub value: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
    #[serde(default, rename = "t", skip_serializing_if = "Option::is_none")]
    pub arrival_time: Option<f64>,
}

impl WeightedItem {
    pub fn new(id: impl Into<ItemId>, weight: f64, value: Vec<f64>) -> Result<Self> {
        check_weight(weight)?;
        Ok(Self {
            id: id.into(),
            weight,
            value,
            stratum: None,
            arrival_time: None,
        })
    }

    /// Item whose payload is the single scalar `x`.
    pub fn scalar(id: impl Into<ItemId>, weight: f64, x: f64) -> Result<Self> {
        Self::new(id, weight, vec![x])
    }

    pub fn with_stratum(mut self, stratum: impl Into<String>) -> Self {
        self.stratum = Some(stratum.into());
        self
    }

    pub fn with_arrival_time(mut self, t: f64) -> Self {
        self.arrival_time = Some(t);
        self
    }

    /// First payload component; `0.0` for an empty payload.
    pub fn x(&self) -> f64 {
        self.value.first().copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        check_weight(self.weight)
    }
}

pub(crate) fn check_weight(weight: f64) -> Result<()> {
    if weight > 0.0 && weight.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidWeight(weight))
    }
}
