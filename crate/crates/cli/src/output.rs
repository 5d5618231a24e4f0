use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Resolved;
use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) if v.is_nan() => "nan".into(),
            Cell::Num(v) if v.is_infinite() => if *v > 0.0 { "inf" } else { "-inf" }.into(),
            // 17 significant digits
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Empty => String::new(),
        }
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// What a subcommand produced.
pub struct Report {
    pub command: &'static str,
    pub table: Option<Table>,
    pub results: Value,
    /// `Some(false)` turns into exit code 1.
    pub pass: Option<bool>,
}

impl Report {
    pub fn json(&self, config: &Resolved) -> Value {
        let mut v = json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": config,
            "results": self.results,
        });
        if let Some(pass) = self.pass {
            v["verdict"] = json!(if pass { "PASS" } else { "FAIL" });
        }
        v
    }
}

pub fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the CSV to `output_path` and the JSON report beside it, or prints
/// the CSV (or, without a table, the JSON) to stdout.
pub fn emit(report: &Report, config: &Resolved) -> Result<()> {
    let json = serde_json::to_string_pretty(&report.json(config)).expect("serializable") + "\n";
    match &config.output_path {
        Some(p) => {
            let base = PathBuf::from(p);
            let json_path = base.with_extension("json");
            if let Some(t) = &report.table {
                let csv_path = if json_path == base {
                    base.with_extension("csv")
                } else {
                    base
                };
                write(&csv_path, &t.to_csv())?;
                println!("wrote {}", csv_path.display());
            }
            write(&json_path, &json)?;
            println!("wrote {}", json_path.display());
        }
        None => match &report.table {
            Some(t) => print!("{}", t.to_csv()),
            None => print!("{json}"),
        },
    }
    if let Some(pass) = report.pass {
        eprintln!("verdict: {}", if pass { "PASS" } else { "FAIL" });
    }
    Ok(())
}
