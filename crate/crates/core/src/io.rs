//! Schema files and CSV ingestion.
//!
//! Schema file: one column per line, either `name integer|real lower upper` or
//! `name categorical c1,c2,...`. Blank lines and `#` comments are ignored.
//! Datasets are RFC-4180 CSV with a header naming every schema column.

use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{DpError, Result};
use crate::types::{validate_record, ColumnSpec, Dataset, Schema};

pub fn parse_schema(text: &str) -> Result<Schema> {
    let mut columns = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = strip_comment(line).trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| DpError::Schema(format!("line {}: {msg}", lineno + 1));
        let mut parts = line.split_whitespace();
        let name = parts.next().expect("non-empty line");
        let kind = parts.next().ok_or_else(|| err(format!("column `{name}` has no kind")))?;
        let rest: Vec<&str> = parts.collect();
        let col = match kind {
            "integer" | "real" => {
                let [lo, hi] = rest[..] else {
                    return Err(err(format!("`{name} {kind}` needs exactly `lower upper`")));
                };
                let parse = |s: &str| -> Result<f64> {
                    s.parse::<f64>().map_err(|_| err(format!("bad bound `{s}`")))
                };
                let (lo, hi) = (parse(lo)?, parse(hi)?);
                if kind == "integer" {
                    ColumnSpec::integer(name, lo, hi)
                } else {
                    ColumnSpec::real(name, lo, hi)
                }
            }
            "categorical" => {
                let joined = rest.join(" ");
                let cats: Vec<String> = joined
                    .split(',')
                    .map(str::trim)
                    .filter(|c| !c.is_empty())
                    .map(String::from)
                    .collect();
                ColumnSpec::categorical(name, cats)
            }
            other => return Err(err(format!("unknown column kind `{other}`"))),
        };
        columns.push(col);
    }
    Schema::new(columns)
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    parse_schema(&std::fs::read_to_string(path)?)
}

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(head, _)| head)
}

/// Counts reported by CSV ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct IngestReport {
    pub rows: usize,
    pub clamped_values: usize,
}

/// Reads a CSV whose header names every schema column (in any order).
pub fn read_dataset<R: Read>(schema: Arc<Schema>, reader: R) -> Result<(Dataset, IngestReport)> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv.headers()?.clone();
    let mut order = Vec::with_capacity(schema.len());
    for col in schema.columns() {
        let pos = headers.iter().position(|h| h.trim() == col.name).ok_or_else(|| {
            DpError::Schema(format!("CSV header is missing column `{}`", col.name))
        })?;
        order.push(pos);
    }
    if headers.len() != schema.len() {
        return Err(DpError::Schema(format!(
            "CSV has {} columns but the schema declares {}",
            headers.len(),
            schema.len()
        )));
    }

    let mut report = IngestReport::default();
    let mut rows = Vec::new();
    for result in csv.records() {
        let line = result?;
        let raw: Vec<&str> = order.iter().map(|&i| line.get(i).unwrap_or("")).collect();
        let v = validate_record(&schema, &raw)?;
        report.clamped_values += v.clamped;
        rows.push(v.record);
    }
    report.rows = rows.len();
    Ok((Dataset::new(schema, rows)?, report))
}

pub fn load_dataset(schema: Arc<Schema>, path: impl AsRef<Path>) -> Result<(Dataset, IngestReport)> {
    read_dataset(schema, std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ColumnKind, Value};

    const SCHEMA: &str = "\
# example
age integer 0 100
income real 0 1e6   # dollars
gender categorical M,F,other
";

    #[test]
    fn parses_schema_lines() {
        let s = parse_schema(SCHEMA).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.columns()[0].kind, ColumnKind::Integer { lower: 0.0, upper: 100.0 });
        assert_eq!(s.columns()[1].bounds(), Some((0.0, 1e6)));
        assert_eq!(s.columns()[2].categories().unwrap(), ["M", "F", "other"]);
    }

    #[test]
    fn schema_errors() {
        assert!(parse_schema("age integer 0").is_err());
        assert!(parse_schema("age float 0 1").is_err());
        assert!(parse_schema("age integer 5 1").is_err());
        assert!(parse_schema("x categorical").is_err());
        assert!(parse_schema("").is_err());
    }

    #[test]
    fn reads_csv_in_any_column_order_and_clamps() {
        let schema = Arc::new(parse_schema(SCHEMA).unwrap());
        let csv = "gender,age,income\nM,67,50000\nF,140,-5\nother,33,1000\n";
        let (d, rep) = read_dataset(schema, csv.as_bytes()).unwrap();
        assert_eq!(rep, IngestReport { rows: 3, clamped_values: 2 });
        assert_eq!(d.rows()[1].0[0], Value::Number(100.0));
        assert_eq!(d.rows()[1].0[1], Value::Number(0.0));
        assert_eq!(d.rows()[0].0[2], Value::Category(0));
    }

    #[test]
    fn csv_header_mismatch() {
        let schema = Arc::new(parse_schema(SCHEMA).unwrap());
        assert!(read_dataset(schema.clone(), "age,income\n1,2\n".as_bytes()).is_err());
        let extra = "age,income,gender,zip\n1,2,M,3\n";
        assert!(read_dataset(schema, extra.as_bytes()).is_err());
    }
}
