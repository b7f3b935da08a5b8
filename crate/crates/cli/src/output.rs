//! Rendering of command results as JSON lines or plain-text tables.

use std::fmt::Write as _;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

/// Renders `item` as one compact JSON line, or as a key/value table.
pub fn render<T: Serialize>(item: &T, format: Format) -> String {
    let value = serde_json::to_value(item).expect("results are always serialisable");
    match format {
        Format::Json => value.to_string(),
        Format::Table => table(&value),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        Value::Array(items) if items.iter().all(|i| !i.is_object() && !i.is_array()) => {
            items.iter().map(scalar).collect::<Vec<_>>().join(", ")
        }
        other => other.to_string(),
    }
}

fn is_record_list(v: &Value) -> bool {
    matches!(v, Value::Array(items) if !items.is_empty() && items.iter().all(Value::is_object))
}

fn table(value: &Value) -> String {
    let Value::Object(map) = value else {
        return scalar(value);
    };
    let mut out = String::new();
    let mut lists = Vec::new();
    let mut flat = Vec::new();
    flatten("", map, &mut flat, &mut lists);
    let width = flat.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &flat {
        writeln!(out, "{k:<width$}  {v}").unwrap();
    }
    for (name, rows) in lists {
        writeln!(out, "\n{name}:").unwrap();
        out.push_str(&grid(rows));
    }
    out.trim_end().to_owned()
}

fn flatten<'a>(
    prefix: &str,
    map: &'a serde_json::Map<String, Value>,
    flat: &mut Vec<(String, String)>,
    lists: &mut Vec<(String, &'a [Value])>,
) {
    for (k, v) in map {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(inner) => flatten(&key, inner, flat, lists),
            Value::Array(items) if is_record_list(v) => lists.push((key, items)),
            _ => flat.push((key, scalar(v))),
        }
    }
}

/// Column-aligned table for a list of flat objects.
fn grid(rows: &[Value]) -> String {
    let mut headers: Vec<&str> = Vec::new();
    for row in rows {
        for k in row.as_object().expect("checked by is_record_list").keys() {
            if !headers.contains(&k.as_str()) {
                headers.push(k);
            }
        }
    }
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| headers.iter().map(|h| r.get(*h).map_or_else(|| "-".into(), scalar)).collect())
        .collect();
    let widths: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| cells.iter().map(|c| c[i].len()).chain([h.len()]).max().unwrap_or(0))
        .collect();
    let line = |items: Vec<&str>| {
        items
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_owned()
    };
    let mut out = String::new();
    writeln!(out, "{}", line(headers.clone())).unwrap();
    for row in &cells {
        writeln!(out, "{}", line(row.iter().map(String::as_str).collect())).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn table_flattens_nested_objects_and_lists() {
        let v = json!({
            "name": "pricing",
            "totals": {"epsilon": 0.5, "delta": 0.0},
            "rows": [{"price": 1.0, "p": 0.2}, {"price": 3.01, "p": 0.8}],
            "labels": ["a", "b"],
        });
        let t = render(&v, Format::Table);
        assert!(t.contains("totals.epsilon  0.5"), "{t}");
        assert!(t.contains("labels          a, b"), "{t}");
        assert!(t.contains("rows:\np    price\n0.2  1.0"), "{t}");
    }

    #[test]
    fn json_is_one_line() {
        let v = json!({"a": [1, 2], "b": {"c": null}});
        assert_eq!(render(&v, Format::Json), r#"{"a":[1,2],"b":{"c":null}}"#);
    }
}
