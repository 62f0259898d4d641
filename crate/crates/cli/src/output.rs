use std::io::{self, Write};

use serde_json::{Map, Value};

use crate::config::{Format, RunConfig};

/// Result of one command: scalar results plus one table.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub results: Vec<(String, Value)>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Report {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { results: Vec::new(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn result(&mut self, key: impl Into<String>, value: impl Into<Value>) {
        self.results.push((key.into(), value.into()));
    }

    pub fn row(&mut self, cells: Vec<Value>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => "nan".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn header(cfg: &RunConfig) -> Vec<(String, String)> {
    let mut h = vec![("version".to_string(), env!("CARGO_PKG_VERSION").to_string())];
    h.extend(cfg.resolved().into_iter().map(|(k, v)| (k.to_string(), v)));
    h.push(("alpha".into(), arw_core::experiments::ALPHA.to_string()));
    h
}

pub fn write_report(cfg: &RunConfig, report: &Report, out: &mut dyn Write) -> io::Result<()> {
    match cfg.format {
        Format::Csv => write_csv(cfg, report, out),
        Format::Json => write_json(cfg, report, out),
    }
}

fn write_csv(cfg: &RunConfig, report: &Report, out: &mut dyn Write) -> io::Result<()> {
    writeln!(out, "# arw {}", env!("CARGO_PKG_VERSION"))?;
    for (k, v) in header(cfg).iter().skip(1) {
        writeln!(out, "# {k}={v}")?;
    }
    for (k, v) in &report.results {
        writeln!(out, "# result.{k}={}", cell(v))?;
    }
    writeln!(out, "{}", report.columns.join(","))?;
    for row in &report.rows {
        let cells: Vec<String> = row.iter().map(cell).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

fn write_json(cfg: &RunConfig, report: &Report, out: &mut dyn Write) -> io::Result<()> {
    let metadata: Map<String, Value> = header(cfg).into_iter().map(|(k, v)| (k, Value::String(v))).collect();
    let results: Map<String, Value> = report.results.iter().cloned().collect();
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| Value::Object(report.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect()))
        .collect();
    let mut doc = Map::new();
    doc.insert("metadata".into(), Value::Object(metadata));
    doc.insert("results".into(), Value::Object(results));
    doc.insert("rows".into(), Value::Array(rows));
    serde_json::to_writer_pretty(&mut *out, &Value::Object(doc))?;
    writeln!(out)
}
