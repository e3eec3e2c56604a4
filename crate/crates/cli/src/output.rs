//! Deterministic JSON and CSV writers.
//!
//! Floats are written with 17 significant digits so every value survives a
//! text round trip; object keys come out sorted.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::error::CliResult;

/// `x` with 17 significant digits, or `None` when not finite. Negative
/// zero is written as zero.
pub fn fmt_f64(x: f64) -> Option<String> {
    let x = if x == 0.0 { 0.0 } else { x };
    x.is_finite().then(|| format!("{x:.16e}"))
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |k: usize| "  ".repeat(k);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                out.push_str(&n.to_string());
            } else {
                match n.as_f64().and_then(fmt_f64) {
                    Some(s) => out.push_str(&s),
                    None => out.push_str("null"),
                }
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            // short scalar arrays stay on one line
            if a.iter().all(|x| !x.is_array() && !x.is_object()) {
                out.push('[');
                for (k, x) in a.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(x, indent, out);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (k, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(x, indent + 1, out);
                out.push_str(if k + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            out.push_str("{\n");
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            for (k, key) in keys.iter().enumerate() {
                let _ = write!(out, "{}{}: ", pad(indent + 1), Value::String((*key).clone()));
                write_value(&m[*key], indent + 1, out);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Pretty JSON with sorted keys and 17-digit floats.
pub fn to_json(v: &Value) -> String {
    let mut s = String::new();
    write_value(v, 0, &mut s);
    s.push('\n');
    s
}

/// One CSV cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => fmt_f64(*x).unwrap_or_else(|| {
                if x.is_nan() {
                    "nan".into()
                } else if *x > 0.0 {
                    "inf".into()
                } else {
                    "-inf".into()
                }
            }),
            Cell::Text(t) => t.clone(),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Text(String::new()), Cell::Float)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

/// A plot-ready table: `columns` pairs each name with a description that is
/// written to the sidecar `<name>.columns.txt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub title: String,
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, title: &str, columns: &[(&str, &str)]) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            columns: columns.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", self.name)))?;
        w.write_record(self.columns.iter().map(|c| c.0.as_str()))?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.flush()?;
        let mut side = format!("# {}\n", self.title);
        for (name, desc) in &self.columns {
            let _ = writeln!(side, "{name}: {desc}");
        }
        std::fs::write(dir.join(format!("{}.columns.txt", self.name)), side)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -2.5] {
            let s = fmt_f64(x).unwrap();
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        let v = json!({"b": 1, "a": [0.1, null, "x"], "c": {"z": f64::NAN}});
        let s = to_json(&v);
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"][0].as_f64(), Some(0.1));
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let t = Table::new("empty", "nothing", &[("n", "size"), ("v", "value")]);
        t.write(dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("empty.csv")).unwrap(), "n,v\n");
        assert!(std::fs::read_to_string(dir.path().join("empty.columns.txt")).unwrap().contains("v: value"));
    }
}
