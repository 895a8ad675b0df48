use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::config::Format;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Num(x) if x.is_finite() => format!("{x:.16e}"),
            Cell::Num(x) => x.to_string(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as u64)
    }
}

impl From<u64> for Cell {
    fn from(i: u64) -> Self {
        Cell::Int(i)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_owned())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// A rectangular result plus scalar summary entries (written as trailing
/// comment lines in CSV).
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Vec<(String, Cell)>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            ..Table::default()
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl Into<Cell>) {
        self.summary.push((key.into(), value.into()));
    }

    pub fn render(&self, format: Format, command: &str, timestamp: &str) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Csv => self.render_csv(command, timestamp),
            Format::Json => Ok(self.render_json(command, timestamp)),
        }
    }

    fn render_csv(&self, command: &str, timestamp: &str) -> Result<Vec<u8>, CliError> {
        let mut out = format!("# fracpme v{} {command} {timestamp}\n", env!("CARGO_PKG_VERSION")).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::to_csv))?;
            }
            w.flush()?;
        }
        for (key, value) in &self.summary {
            writeln!(out, "# {key} = {}", value.to_csv())?;
        }
        Ok(out)
    }

    fn render_json(&self, command: &str, timestamp: &str) -> Vec<u8> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::to_json).collect()))
            .collect();
        let summary: Map<String, Value> = self.summary.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
        let doc = json!({
            "meta": {
                "tool": "fracpme",
                "version": env!("CARGO_PKG_VERSION"),
                "command": command,
                "timestamp": timestamp,
            },
            "columns": self.columns,
            "rows": rows,
            "summary": summary,
        });
        let mut out = serde_json::to_vec_pretty(&doc).expect("table serializes");
        out.push(b'\n');
        out
    }
}

/// Writes through a temporary file in the destination directory so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_floats_carry_seventeen_digits() {
        let mut t = Table::new(&["x", "label"]);
        t.push(vec![Cell::Num(0.1), "a,b".into()]);
        t.note("eta", 1.0 / 3.0);
        let text = String::from_utf8(t.render(Format::Csv, "solve", "2000-01-01T00:00:00Z").unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# fracpme v") && lines[0].ends_with(" solve 2000-01-01T00:00:00Z"));
        assert_eq!(lines[1], "x,label");
        assert_eq!(lines[2], "1.0000000000000001e-1,\"a,b\"");
        assert_eq!(lines[3], "# eta = 3.3333333333333331e-1");
        assert_eq!(lines[2].split(',').next().unwrap().parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn json_maps_nan_to_null() {
        let mut t = Table::new(&["x"]);
        t.push(vec![Cell::Num(f64::NAN)]);
        let doc: Value = serde_json::from_slice(&t.render(Format::Json, "fd", "t").unwrap()).unwrap();
        assert_eq!(doc["rows"][0][0], Value::Null);
        assert_eq!(doc["meta"]["command"], "fd");
    }
}
