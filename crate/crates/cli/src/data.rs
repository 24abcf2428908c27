//! Panel CSV input and output.

use crate::error::{CliError, CliResult};
use std::path::Path;

/// An `n × m` numeric panel with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Panel {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Parses a panel: one header row, then one finite number per cell.
pub fn parse_panel(text: &str, source: &str) -> CliResult<Panel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{source}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(CliError::Data(format!("{source}: missing header row")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{source}: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(names.len());
        for (j, field) in rec.iter().enumerate() {
            if field.is_empty() {
                return Err(CliError::Data(format!("{source}: line {line}, column {}: missing value", names[j])));
            }
            let v: f64 = field
                .parse()
                .map_err(|_| CliError::Data(format!("{source}: line {line}, column {}: not a number: {field:?}", names[j])))?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("{source}: line {line}, column {}: non-finite value", names[j])));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{source}: no data rows")));
    }
    Ok(Panel { names, rows })
}

pub fn read_panel(path: &Path) -> CliResult<(Panel, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| CliError::Data(format!("{}: not UTF-8", path.display())))?;
    Ok((parse_panel(text, &path.display().to_string())?, bytes))
}

/// CSV text of a header plus numeric rows, using shortest round-trip
/// float formatting.
pub fn format_table(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
