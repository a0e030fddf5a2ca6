//! Table and report writers.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use crate::params::Format;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

/// Shortest decimal that round-trips to the same `f64`.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:?}")
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => fmt_float(*x),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(i) => json!(i),
            Cell::Float(x) => json!(x),
            Cell::Text(s) => json!(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

/// A command's result: a table (CSV or JSON) or a report (JSON only).
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Table(Table),
    Report(Value),
}

pub struct Header<'a> {
    pub command: &'a str,
    pub timestamp: Option<String>,
}

pub fn render(artifact: &Artifact, format: Format, header: &Header, parameters: &Value) -> Result<String, String> {
    let mut s = String::new();
    match (artifact, format) {
        (Artifact::Table(t), Format::Csv) => {
            if let Some(ts) = &header.timestamp {
                let _ = writeln!(s, "# amo-lab {} {ts}", header.command);
            }
            let _ = writeln!(s, "{}", t.columns.join(","));
            for row in &t.rows {
                let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                let _ = writeln!(s, "{}", cells.join(","));
            }
        }
        (Artifact::Report(_), Format::Csv) => {
            return Err(format!("{} only produces JSON reports", header.command));
        }
        (a, Format::Json) => {
            let result = match a {
                Artifact::Report(v) => v.clone(),
                Artifact::Table(t) => Value::Array(
                    t.rows
                        .iter()
                        .map(|r| {
                            Value::Object(
                                t.columns
                                    .iter()
                                    .map(|c| c.to_string())
                                    .zip(r.iter().map(Cell::json))
                                    .collect(),
                            )
                        })
                        .collect(),
                ),
            };
            let mut doc = serde_json::Map::new();
            doc.insert("command".into(), json!(header.command));
            if let Some(ts) = &header.timestamp {
                doc.insert("generated_at".into(), json!(ts));
            }
            doc.insert("parameters".into(), parameters.clone());
            doc.insert("result".into(), result);
            s = serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| e.to_string())?;
            s.push('\n');
        }
    }
    Ok(s)
}

pub fn emit(text: &str, out: Option<&Path>) -> std::io::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text),
        None => {
            let mut o = std::io::stdout().lock();
            o.write_all(text.as_bytes())?;
            o.flush()
        }
    }
}
