//! Deterministic artifact writers: CSV with '#'-prefixed metadata headers
//! and 17-significant-digit floats, JSON with a {"meta", "data"} envelope.
//! No timestamps anywhere; identical configs must produce bitwise-identical
//! files regardless of worker count.

use crate::config::RunConfig;
use std::io::Write;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One CSV cell; `Blank` marks a value undefined at this row (the status
/// column says why).
#[derive(Clone, Debug)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Blank,
}

impl Cell {
    fn write(&self, out: &mut impl Write) -> std::io::Result<()> {
        match self {
            Cell::Int(v) => write!(out, "{v}"),
            Cell::Float(v) => write!(out, "{v:.16e}"),
            Cell::Text(v) => write!(out, "{v}"),
            Cell::Blank => Ok(()),
        }
    }
}

pub struct CsvTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

fn meta_lines(config: &RunConfig) -> Vec<String> {
    vec![
        format!("# qmanifold {VERSION}"),
        format!("# command: {}", config.command.as_kebab()),
        format!("# model: {}", config.model.describe()),
        format!(
            "# config: {}",
            serde_json::to_string(config).expect("config serializes")
        ),
    ]
}

pub fn write_csv(
    path: &str,
    config: &RunConfig,
    table: &CsvTable,
) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    for line in meta_lines(config) {
        writeln!(out, "{line}")?;
    }
    writeln!(out, "# columns: {}", table.columns.join(","))?;
    writeln!(out, "{}", table.columns.join(","))?;
    for row in &table.rows {
        debug_assert_eq!(row.len(), table.columns.len());
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                write!(out, ",")?;
            }
            cell.write(&mut out)?;
        }
        writeln!(out)?;
    }
    out.flush()
}

pub fn write_json(
    path: &str,
    config: &RunConfig,
    data: serde_json::Value,
) -> std::io::Result<()> {
    let envelope = serde_json::json!({
        "meta": {
            "tool": format!("qmanifold {VERSION}"),
            "command": config.command.as_kebab(),
            "model": config.model.describe(),
            "config": serde_json::to_value(config).expect("config serializes"),
        },
        "data": data,
    });
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &envelope)?;
    writeln!(out)?;
    out.flush()
}
