//! Text format for query files.
//!
//! ```text
//! # comment
//! kind: histogram
//! column: age
//! where: age >= 18 AND gender = F
//! bins: age:0,18,65,100; gender; region
//! ```
//!
//! `kind` is required. `where` clauses are `column op value` joined by `AND`
//! with `op` one of `= == != < <= > >=`. Each `;`-separated bin dimension is a
//! categorical column name, or `column:e0,e1,...` with edges spanning the
//! column's bounds.

use std::path::Path;

use crate::error::{DpError, Result};

use super::{BinDim, BinSpec, CmpOp, Comparison, Predicate, Query, QueryKind};

pub fn parse_query(text: &str) -> Result<Query> {
    let mut kind = None;
    let mut column = None;
    let mut predicate = None;
    let mut bins = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| DpError::Query(format!("line {}: {msg}", i + 1));
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| err(format!("expected `key: value`, got `{line}`")))?;
        let value = value.trim();
        let slot_taken = |taken: bool| if taken { Err(err(format!("duplicate key `{key}`"))) } else { Ok(()) };
        match key.trim().to_ascii_lowercase().as_str() {
            "kind" => {
                slot_taken(kind.is_some())?;
                kind = Some(value.parse::<QueryKind>().map_err(err)?);
            }
            "column" => {
                slot_taken(column.is_some())?;
                if value.is_empty() {
                    return Err(err("empty column name".into()));
                }
                column = Some(value.to_owned());
            }
            "where" => {
                slot_taken(predicate.is_some())?;
                predicate = Some(parse_predicate(value).map_err(|e| err(e.to_string()))?);
            }
            "bins" => {
                slot_taken(bins.is_some())?;
                bins = Some(parse_bins(value).map_err(|e| err(e.to_string()))?);
            }
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }
    let kind = kind.ok_or_else(|| DpError::Query("query file has no `kind`".into()))?;
    Ok(Query { kind, column, predicate, bins })
}

pub fn load_query(path: impl AsRef<Path>) -> Result<Query> {
    parse_query(&std::fs::read_to_string(path)?)
}

/// Parses `a >= 1 AND b = x`. The `AND` keyword is case-insensitive.
pub fn parse_predicate(text: &str) -> Result<Predicate> {
    let mut clauses = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for tok in text.split_whitespace() {
        if tok.eq_ignore_ascii_case("and") {
            clauses.push(parse_comparison(&current.join(" "))?);
            current.clear();
        } else {
            current.push(tok);
        }
    }
    clauses.push(parse_comparison(&current.join(" "))?);
    Ok(Predicate { clauses })
}

fn parse_comparison(text: &str) -> Result<Comparison> {
    const OPS: [(&str, CmpOp); 7] = [
        (">=", CmpOp::Ge),
        ("<=", CmpOp::Le),
        ("!=", CmpOp::Ne),
        ("==", CmpOp::Eq),
        ("=", CmpOp::Eq),
        ("<", CmpOp::Lt),
        (">", CmpOp::Gt),
    ];
    let pos = text
        .find(['<', '>', '=', '!'])
        .ok_or_else(|| DpError::Query(format!("no comparison operator in `{text}`")))?;
    let rest = &text[pos..];
    let (sym, op) = OPS
        .iter()
        .find(|(sym, _)| rest.starts_with(sym))
        .ok_or_else(|| DpError::Query(format!("bad operator in `{text}`")))?;
    let column = text[..pos].trim();
    let value = rest[sym.len()..].trim();
    if column.is_empty() || value.is_empty() {
        return Err(DpError::Query(format!("incomplete comparison `{text}`")));
    }
    Ok(Comparison { column: column.to_owned(), op: *op, value: value.to_owned() })
}

pub fn parse_bins(text: &str) -> Result<BinSpec> {
    let mut dims = Vec::new();
    for part in text.split(';').map(str::trim) {
        if part.is_empty() {
            return Err(DpError::Query("empty bin dimension".into()));
        }
        match part.split_once(':') {
            None => dims.push(BinDim::Categorical { column: part.to_owned() }),
            Some((col, edges)) => {
                let edges = edges
                    .split(',')
                    .map(|e| {
                        e.trim()
                            .parse::<f64>()
                            .map_err(|_| DpError::Query(format!("bad bin edge `{e}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                dims.push(BinDim::Numeric { column: col.trim().to_owned(), edges });
            }
        }
    }
    Ok(BinSpec { dims })
}
