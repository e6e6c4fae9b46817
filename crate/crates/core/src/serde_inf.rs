//! Serde helpers that write non-finite floats as the strings `"inf"`,
//! `"-inf"` and `"nan"` (JSON has no literals for them).

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Wire {
    Num(f64),
    Text(String),
}

fn to_wire(v: f64) -> Wire {
    if v == f64::INFINITY {
        Wire::Text("inf".into())
    } else if v == f64::NEG_INFINITY {
        Wire::Text("-inf".into())
    } else if v.is_nan() {
        Wire::Text("nan".into())
    } else {
        Wire::Num(v)
    }
}

fn from_wire<E: de::Error>(w: Wire) -> Result<f64, E> {
    match w {
        Wire::Num(v) => Ok(v),
        Wire::Text(s) if s == "inf" => Ok(f64::INFINITY),
        Wire::Text(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        Wire::Text(s) if s == "nan" => Ok(f64::NAN),
        Wire::Text(s) => Err(E::custom(format!("expected number or \"inf\", got {s:?}"))),
    }
}

pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    to_wire(*v).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    from_wire(Wire::deserialize(d)?)
}

pub mod map {
    use std::collections::BTreeMap;

    use super::*;

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        let wire: BTreeMap<&String, Wire> = m.iter().map(|(k, v)| (k, to_wire(*v))).collect();
        wire.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        BTreeMap::<String, Wire>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| from_wire(v).map(|v| (k, v)))
            .collect()
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let wire: Vec<Wire> = v.iter().map(|x| to_wire(*x)).collect();
        wire.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Wire>::deserialize(d)?.into_iter().map(from_wire).collect()
    }
}
