//! Tables written as CSV or JSON with a provenance header.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self { tool: "ionxy", version: env!("CARGO_PKG_VERSION"), config_hash, seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) => json!(v.to_string()),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub struct Writer {
    pub dir: PathBuf,
    pub format: Format,
    pub provenance: Provenance,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, format: Format, provenance: Provenance) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), format, provenance, written: Vec::new() })
    }

    pub fn table(&mut self, stem: &str, table: &Table) -> Result<(), CliError> {
        let (path, bytes) = match self.format {
            Format::Csv => (self.dir.join(format!("{stem}.csv")), self.csv_bytes(table)?),
            Format::Json => {
                let rows: Vec<Value> = table.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
                (self.dir.join(format!("{stem}.json")), self.json_bytes(json!({ "columns": table.columns, "rows": rows }))?)
            }
        };
        self.write(path, bytes)
    }

    /// Structured document, always JSON.
    pub fn document<T: Serialize>(&mut self, stem: &str, data: &T) -> Result<(), CliError> {
        let bytes = self.json_bytes(serde_json::to_value(data)?)?;
        self.write(self.dir.join(format!("{stem}.json")), bytes)
    }

    fn csv_bytes(&self, table: &Table) -> Result<Vec<u8>, CliError> {
        let p = &self.provenance;
        let mut out = format!(
            "# tool: {}\n# version: {}\n# config_hash: {}\n# seed: {}\n",
            p.tool, p.version, p.config_hash, p.seed
        )
        .into_bytes();
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&table.columns)?;
        for row in &table.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        out.extend(w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?);
        Ok(out)
    }

    fn json_bytes(&self, data: Value) -> Result<Vec<u8>, CliError> {
        let doc = json!({ "header": self.provenance, "data": data });
        let mut bytes = serde_json::to_vec_pretty(&doc)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    fn write(&mut self, path: PathBuf, bytes: Vec<u8>) -> Result<(), CliError> {
        fs::write(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }
}
