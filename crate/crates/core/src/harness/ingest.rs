use std::io::{BufRead, Read};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::item::{ItemId, WeightedItem};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InputFormat {
    #[default]
    Jsonl,
    Csv,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(InputFormat::Jsonl),
            "csv" => Ok(InputFormat::Csv),
            _ => Err(Error::Unknown {
                kind: "input format",
                name: s.to_owned(),
            }),
        }
    }
}

/// Validated items in input order, plus the records that were dropped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ingested {
    pub items: Vec<WeightedItem>,
    pub rejected: usize,
    /// `(line, reason)` for each dropped record.
    pub problems: Vec<(usize, String)>,
}

impl Ingested {
    fn reject(&mut self, line: usize, reason: impl Into<String>) {
        self.rejected += 1;
        self.problems.push((line, reason.into()));
    }

    fn accept(&mut self, line: usize, item: WeightedItem) {
        match item.validate() {
            Ok(()) => self.items.push(item),
            Err(e) => self.reject(line, e.to_string()),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Payload {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Deserialize)]
struct Record {
    id: ItemId,
    w: f64,
    x: Payload,
    #[serde(default)]
    stratum: Option<String>,
    #[serde(default)]
    t: Option<f64>,
}

impl From<Record> for WeightedItem {
    fn from(r: Record) -> Self {
        WeightedItem {
            id: r.id,
            weight: r.w,
            value: match r.x {
                Payload::One(v) => vec![v],
                Payload::Many(v) => v,
            },
            stratum: r.stratum,
            arrival_time: r.t,
        }
    }
}

fn ingest_jsonl<R: BufRead>(input: R) -> Result<Ingested> {
    let mut out = Ingested::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Record>(&line) {
            Ok(r) => out.accept(i + 1, r.into()),
            Err(e) => out.reject(i + 1, e.to_string()),
        }
    }
    Ok(out)
}

fn parse_id(s: &str) -> ItemId {
    s.parse::<u64>().map_or_else(|_| ItemId::Str(s.to_owned()), ItemId::Int)
}

/// Columns: `id`, `w`, payload columns named `x` or `x<suffix>` (in
/// header order), and optional `stratum` and `t`.
fn ingest_csv<R: Read>(input: R) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let (Some(id_col), Some(w_col)) = (find("id"), find("w")) else {
        return Err(Error::Config("csv input needs `id` and `w` columns".into()));
    };
    let x_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with('x'))
        .map(|(i, _)| i)
        .collect();
    if x_cols.is_empty() {
        return Err(Error::Config("csv input needs at least one `x` column".into()));
    }
    let stratum_col = find("stratum");
    let t_col = find("t");
    let mut out = Ingested::default();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                out.reject(line, e.to_string());
                continue;
            }
        };
        let num = |c: usize| -> std::result::Result<f64, String> {
            let f = rec.get(c).unwrap_or("");
            f.parse::<f64>().map_err(|_| format!("not a number: {f:?}"))
        };
        let parsed = (|| {
            let weight = num(w_col)?;
            let value = x_cols.iter().map(|&c| num(c)).collect::<std::result::Result<Vec<_>, _>>()?;
            let t = match t_col.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
                Some(s) => Some(s.parse::<f64>().map_err(|_| format!("not a number: {s:?}"))?),
                None => None,
            };
            Ok::<_, String>(WeightedItem {
                id: parse_id(rec.get(id_col).unwrap_or("")),
                weight,
                value,
                stratum: stratum_col
                    .and_then(|c| rec.get(c))
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned),
                arrival_time: t,
            })
        })();
        match parsed {
            Ok(item) => out.accept(line, item),
            Err(reason) => out.reject(line, reason),
        }
    }
    Ok(out)
}

pub fn ingest<R: BufRead>(input: R, format: InputFormat) -> Result<Ingested> {
    match format {
        InputFormat::Jsonl => ingest_jsonl(input),
        InputFormat::Csv => ingest_csv(input),
    }
}

/// Reads a file, or stdin when `path` is `-`.
pub fn ingest_path(path: &Path, format: InputFormat) -> Result<Ingested> {
    if path.as_os_str() == "-" {
        let stdin = std::io::stdin();
        return ingest(stdin.lock(), format);
    }
    let f = std::fs::File::open(path)?;
    ingest(std::io::BufReader::new(f), format)
}
