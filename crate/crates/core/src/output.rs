//! Tabular results rendered as versioned CSV or JSON.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

pub const SCHEMA: &str = "lyapdim v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::input(format!("unknown format {other}"))),
        }
    }
}

/// Rows with named columns plus `key = value` summary entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub summary: Vec<(String, Value)>,
}

/// JSON number, or null for NaN and infinities.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), ..Default::default() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: Value) {
        self.summary.push((key.into(), value));
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# {SCHEMA}\n# table = {}\n{}\n", self.name, self.columns.join(","));
        for row in &self.rows {
            out.push_str(&row.iter().map(csv_cell).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        for (k, v) in &self.summary {
            out.push_str(&format!("# {k} = {}\n", csv_cell(v)));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let summary: Map<String, Value> = self.summary.iter().cloned().collect();
        json!({
            "schema": SCHEMA,
            "table": self.name,
            "columns": self.columns,
            "rows": self.rows,
            "summary": summary,
        })
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.to_json()).expect("tables serialize");
                s.push('\n');
                s
            }
        }
    }
}

/// Renders several tables; JSON output becomes an array.
pub fn render_all(tables: &[Table], format: Format) -> String {
    match format {
        Format::Csv => tables.iter().map(Table::to_csv).collect::<Vec<_>>().join("\n"),
        Format::Json => {
            let all: Vec<Value> = tables.iter().map(Table::to_json).collect();
            let mut s = serde_json::to_string_pretty(&Value::Array(all)).expect("tables serialize");
            s.push('\n');
            s
        }
    }
}

/// Writes to `path`, or stdout when absent.
pub fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}
