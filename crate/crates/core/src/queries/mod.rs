//! Aggregate queries over a bounded schema: exact evaluation, global
//! sensitivity derivation and the private release pipeline.

mod feasibility;
mod parse;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::accountant::PrivacyAccountant;
use crate::error::{DpError, Result};
use crate::mechanisms::{gaussian_mechanism, laplace_mechanism, GaussianCalibration};
use crate::sampling::RngStream;
use crate::types::{Adjacency, ColumnKind, Dataset, MechanismRelease, PrivacyParams, Record, Schema, Sensitivity, Value};

use feasibility::{is_satisfiable, is_tautology};
pub use parse::{load_query, parse_bins, parse_predicate, parse_query};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Count,
    Sum,
    Mean,
    Histogram,
}

impl FromStr for QueryKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "count" => Ok(QueryKind::Count),
            "sum" => Ok(QueryKind::Sum),
            "mean" => Ok(QueryKind::Mean),
            "histogram" => Ok(QueryKind::Histogram),
            other => Err(format!("unknown query kind `{other}`")),
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryKind::Count => "count",
            QueryKind::Sum => "sum",
            QueryKind::Mean => "mean",
            QueryKind::Histogram => "histogram",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    fn negate(self) -> Self {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// `column op value`; the value is interpreted against the column's type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub column: String,
    pub op: CmpOp,
    pub value: String,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.column, self.op.symbol(), self.value)
    }
}

/// Conjunction of comparisons.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Predicate {
    pub clauses: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BinDim {
    /// One bin per category.
    Categorical { column: String },
    /// Half-open intervals `[e_i, e_{i+1})`; the last one is closed. Edges
    /// must start at the column's lower bound and end at its upper bound.
    Numeric { column: String, edges: Vec<f64> },
}

/// Cross product of bin dimensions; cells are numbered row-major (last
/// dimension fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub dims: Vec<BinDim>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub kind: QueryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<BinSpec>,
}

impl Query {
    pub fn count() -> Self {
        Self { kind: QueryKind::Count, column: None, predicate: None, bins: None }
    }

    pub fn sum(column: &str) -> Self {
        Self { kind: QueryKind::Sum, column: Some(column.into()), predicate: None, bins: None }
    }

    pub fn mean(column: &str) -> Self {
        Self { kind: QueryKind::Mean, column: Some(column.into()), predicate: None, bins: None }
    }

    pub fn histogram(bins: BinSpec) -> Self {
        Self { kind: QueryKind::Histogram, column: None, predicate: None, bins: Some(bins) }
    }

    pub fn filtered(mut self, predicate: Predicate) -> Self {
        self.predicate = Some(predicate);
        self
    }

    /// Output dimension under `schema`.
    pub fn dim(&self, schema: &Schema) -> Result<usize> {
        Ok(compile(self, schema)?.cells.map_or(1, |c| c.len()))
    }

    /// Checks the query against `schema`.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        compile(self, schema).map(|_| ())
    }
}

/// A comparison resolved against a schema.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Cond {
    pub col: usize,
    pub op: CmpOp,
    pub target: Value,
}

impl Cond {
    fn holds(&self, record: &Record) -> bool {
        match (record.0[self.col], self.target) {
            (Value::Number(x), Value::Number(t)) => match self.op {
                CmpOp::Eq => x == t,
                CmpOp::Ne => x != t,
                CmpOp::Lt => x < t,
                CmpOp::Le => x <= t,
                CmpOp::Gt => x > t,
                CmpOp::Ge => x >= t,
            },
            (Value::Category(c), Value::Category(t)) => match self.op {
                CmpOp::Eq => c == t,
                CmpOp::Ne => c != t,
                _ => false,
            },
            _ => false,
        }
    }

    fn negated(self) -> Self {
        Self { op: self.op.negate(), ..self }
    }
}

#[derive(Debug, Clone)]
enum CompiledDim {
    Categorical { col: usize, count: usize },
    Numeric { col: usize, edges: Vec<f64> },
}

impl CompiledDim {
    fn len(&self) -> usize {
        match self {
            CompiledDim::Categorical { count, .. } => *count,
            CompiledDim::Numeric { edges, .. } => edges.len() - 1,
        }
    }

    fn bin_of(&self, record: &Record) -> usize {
        match self {
            CompiledDim::Categorical { col, .. } => record.0[*col].as_category().unwrap_or(0) as usize,
            CompiledDim::Numeric { col, edges } => {
                let x = record.0[*col].as_number().unwrap_or(f64::NAN);
                let last = edges.len() - 2;
                // first interval whose right edge lies strictly above x; the
                // last interval also takes x == upper
                edges[1..].partition_point(|e| *e <= x).min(last)
            }
        }
    }

    /// Constraints describing bin `i`.
    fn conds(&self, i: usize) -> Vec<Cond> {
        match self {
            CompiledDim::Categorical { col, .. } => {
                vec![Cond { col: *col, op: CmpOp::Eq, target: Value::Category(i as u32) }]
            }
            CompiledDim::Numeric { col, edges } => {
                let right = if i + 2 == edges.len() { CmpOp::Le } else { CmpOp::Lt };
                vec![
                    Cond { col: *col, op: CmpOp::Ge, target: Value::Number(edges[i]) },
                    Cond { col: *col, op: right, target: Value::Number(edges[i + 1]) },
                ]
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Cells {
    dims: Vec<CompiledDim>,
}

impl Cells {
    fn len(&self) -> usize {
        self.dims.iter().map(CompiledDim::len).product()
    }

    fn index_of(&self, record: &Record) -> usize {
        self.dims.iter().fold(0, |acc, d| acc * d.len() + d.bin_of(record))
    }

    /// Per-dimension bin indices of cell `cell`.
    fn unravel(&self, mut cell: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for (k, d) in self.dims.iter().enumerate().rev() {
            idx[k] = cell % d.len();
            cell /= d.len();
        }
        idx
    }

    fn conds(&self, cell: usize) -> Vec<Cond> {
        self.unravel(cell)
            .into_iter()
            .zip(&self.dims)
            .flat_map(|(i, d)| d.conds(i))
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Compiled {
    kind: QueryKind,
    column: Option<usize>,
    conds: Vec<Cond>,
    cells: Option<Cells>,
}

impl Compiled {
    fn matches(&self, record: &Record) -> bool {
        self.conds.iter().all(|c| c.holds(record))
    }
}

fn column_index(schema: &Schema, name: &str) -> Result<usize> {
    schema.index_of(name).ok_or_else(|| DpError::Query(format!("unknown column `{name}`")))
}

fn compile_cond(schema: &Schema, cmp: &Comparison) -> Result<Cond> {
    let col = column_index(schema, &cmp.column)?;
    let spec = &schema.columns()[col];
    let target = match &spec.kind {
        ColumnKind::Integer { .. } | ColumnKind::Real { .. } => {
            let v: f64 = cmp.value.parse().map_err(|_| {
                DpError::Query(format!("`{}` is not a number (column `{}`)", cmp.value, cmp.column))
            })?;
            if v.is_nan() {
                return Err(DpError::Query(format!("NaN in comparison `{cmp}`")));
            }
            Value::Number(v)
        }
        ColumnKind::Categorical { categories } => {
            if !matches!(cmp.op, CmpOp::Eq | CmpOp::Ne) {
                return Err(DpError::Query(format!(
                    "categorical column `{}` only supports = and !=",
                    cmp.column
                )));
            }
            let pos = categories.iter().position(|c| *c == cmp.value).ok_or_else(|| {
                DpError::Query(format!("unknown category `{}` for column `{}`", cmp.value, cmp.column))
            })?;
            Value::Category(pos as u32)
        }
    };
    Ok(Cond { col, op: cmp.op, target })
}

fn compile_bins(schema: &Schema, bins: &BinSpec) -> Result<Cells> {
    if bins.dims.is_empty() {
        return Err(DpError::Query("histogram needs at least one bin dimension".into()));
    }
    let mut seen = Vec::new();
    let mut dims = Vec::new();
    for dim in &bins.dims {
        let name = match dim {
            BinDim::Categorical { column } | BinDim::Numeric { column, .. } => column,
        };
        let col = column_index(schema, name)?;
        if seen.contains(&col) {
            return Err(DpError::Query(format!("column `{name}` binned twice")));
        }
        seen.push(col);
        let spec = &schema.columns()[col];
        match (dim, &spec.kind) {
            (BinDim::Categorical { .. }, ColumnKind::Categorical { categories }) => {
                dims.push(CompiledDim::Categorical { col, count: categories.len() });
            }
            (BinDim::Numeric { edges, .. }, ColumnKind::Integer { lower, upper } | ColumnKind::Real { lower, upper }) => {
                if edges.len() < 2 {
                    return Err(DpError::Query(format!("column `{name}` needs at least two bin edges")));
                }
                if edges[0] != *lower || edges[edges.len() - 1] != *upper {
                    return Err(DpError::Query(format!(
                        "bin edges for `{name}` must start at {lower} and end at {upper}"
                    )));
                }
                if edges.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(DpError::Query(format!("bin edges for `{name}` must be strictly increasing")));
                }
                dims.push(CompiledDim::Numeric { col, edges: edges.clone() });
            }
            (BinDim::Categorical { .. }, _) => {
                return Err(DpError::Query(format!("column `{name}` is numeric and needs bin edges")));
            }
            (BinDim::Numeric { .. }, _) => {
                return Err(DpError::Query(format!("column `{name}` is categorical and takes no edges")));
            }
        }
    }
    Ok(Cells { dims })
}

fn compile(query: &Query, schema: &Schema) -> Result<Compiled> {
    let conds = query
        .predicate
        .iter()
        .flat_map(|p| &p.clauses)
        .map(|c| compile_cond(schema, c))
        .collect::<Result<Vec<_>>>()?;
    let column = match (query.kind, &query.column) {
        (QueryKind::Sum | QueryKind::Mean, Some(name)) => {
            let col = column_index(schema, name)?;
            if !schema.columns()[col].is_numeric() {
                return Err(DpError::Query(format!("{} needs a numeric column; `{name}` is categorical", query.kind)));
            }
            Some(col)
        }
        (QueryKind::Sum | QueryKind::Mean, None) => {
            return Err(DpError::Query(format!("{} query needs a column", query.kind)));
        }
        (_, Some(name)) => {
            return Err(DpError::Query(format!("{} query takes no column (got `{name}`)", query.kind)));
        }
        (_, None) => None,
    };
    if query.kind == QueryKind::Mean && !conds.is_empty() {
        // the filtered row count is itself private, so (hi - lo)/n would not hold
        return Err(DpError::Query("mean queries do not support a predicate".into()));
    }
    let cells = match (query.kind, &query.bins) {
        (QueryKind::Histogram, Some(b)) => Some(compile_bins(schema, b)?),
        (QueryKind::Histogram, None) => return Err(DpError::Query("histogram query needs bins".into())),
        (_, Some(_)) => return Err(DpError::Query(format!("{} query takes no bins", query.kind))),
        (_, None) => None,
    };
    Ok(Compiled { kind: query.kind, column, conds, cells })
}

/// Human-readable labels of the histogram cells, in output order.
pub fn cell_labels(query: &Query, schema: &Schema) -> Result<Vec<String>> {
    let compiled = compile(query, schema)?;
    let cells = compiled
        .cells
        .ok_or_else(|| DpError::Query(format!("{} query has no cells", query.kind)))?;
    Ok((0..cells.len())
        .map(|cell| {
            cells
                .unravel(cell)
                .into_iter()
                .zip(&cells.dims)
                .map(|(i, d)| match d {
                    CompiledDim::Categorical { col, .. } => {
                        let spec = &schema.columns()[*col];
                        format!("{}={}", spec.name, spec.categories().expect("categorical")[i])
                    }
                    CompiledDim::Numeric { col, edges } => {
                        let close = if i + 2 == edges.len() { ']' } else { ')' };
                        format!("{}=[{},{}{close}", schema.columns()[*col].name, edges[i], edges[i + 1])
                    }
                })
                .collect::<Vec<_>>()
                .join("|")
        })
        .collect())
}

/// Exact (non-private) answer.
pub fn evaluate(query: &Query, dataset: &Dataset) -> Result<Vec<f64>> {
    let q = compile(query, dataset.schema())?;
    let rows = dataset.rows().iter().filter(|r| q.matches(r));
    let number = |r: &Record| r.0[q.column.expect("numeric query has a column")].as_number().unwrap_or(0.0);
    Ok(match q.kind {
        QueryKind::Count => vec![rows.count() as f64],
        QueryKind::Sum => vec![rows.map(number).sum()],
        QueryKind::Mean => {
            if dataset.is_empty() {
                return Err(DpError::Query("mean of an empty dataset".into()));
            }
            vec![rows.map(number).sum::<f64>() / dataset.len() as f64]
        }
        QueryKind::Histogram => {
            let cells = q.cells.as_ref().expect("histogram has cells");
            let mut counts = vec![0.0; cells.len()];
            for r in rows {
                counts[cells.index_of(r)] += 1.0;
            }
            counts
        }
    })
}

/// Global sensitivity under add/remove adjacency.
pub fn derive_sensitivity(query: &Query, schema: &Schema, public_n: Option<usize>) -> Result<Sensitivity> {
    derive_sensitivity_under(query, schema, public_n, Adjacency::AddRemove)
}

/// Global sensitivity under the given adjacency.
///
/// Counts and histograms are exact: the predicate (and each histogram cell) is
/// checked for satisfiability over the schema's domain, so a count that can
/// never match has sensitivity 0. Sums use the column bounds. Means use the
/// public row count: `(hi - lo) / n`.
pub fn derive_sensitivity_under(
    query: &Query,
    schema: &Schema,
    public_n: Option<usize>,
    adjacency: Adjacency,
) -> Result<Sensitivity> {
    let q = compile(query, schema)?;
    let feasible = is_satisfiable(schema, &q.conds);
    let total = !feasible || q.conds.iter().all(|c| is_tautology(schema, c));
    let exchange = adjacency == Adjacency::Exchange;
    let bounds = || {
        schema.columns()[q.column.expect("numeric query has a column")]
            .bounds()
            .ok_or_else(|| DpError::Query("column has no bounds".into()))
    };
    match q.kind {
        QueryKind::Count => {
            // under exchange a record can only move the count by leaving or
            // entering the predicate
            let moves = feasible && !(exchange && total);
            Sensitivity::scalar(if moves { 1.0 } else { 0.0 })
        }
        QueryKind::Sum => {
            let (lo, hi) = bounds()?;
            let add = lo.abs().max(hi.abs());
            let s = match (feasible, exchange, total) {
                (false, _, _) => 0.0,
                (true, false, _) => add,
                (true, true, true) => hi - lo,
                (true, true, false) => (hi - lo).max(add),
            };
            Sensitivity::scalar(s)
        }
        QueryKind::Mean => {
            let n = public_n.filter(|n| *n >= 1).ok_or_else(|| {
                DpError::Query("mean sensitivity needs a public row count >= 1".into())
            })?;
            let (lo, hi) = bounds()?;
            Sensitivity::scalar((hi - lo) / n as f64)
        }
        QueryKind::Histogram => {
            let cells = q.cells.as_ref().expect("histogram has cells");
            let live = (0..cells.len())
                .filter(|&cell| {
                    let mut conds = q.conds.clone();
                    conds.extend(cells.conds(cell));
                    is_satisfiable(schema, &conds)
                })
                .take(2)
                .count();
            let (l1, l2) = match (exchange, live) {
                (_, 0) => (0.0, 0.0),
                (false, _) => (1.0, 1.0),
                (true, 1) if total => (0.0, 0.0),
                (true, 1) => (1.0, 1.0),
                (true, _) => (2.0, std::f64::consts::SQRT_2),
            };
            Sensitivity::new(l1, l2, cells.len())
        }
    }
}

/// Sensitivity of the d-dimensional mean of `n` binary vectors:
/// `l1 = d / n`, `l2 = sqrt(d) / n`.
pub fn binary_mean_sensitivity(n: usize, d: usize) -> Result<Sensitivity> {
    if n == 0 {
        return Err(DpError::Query("n must be >= 1".into()));
    }
    Sensitivity::new(d as f64 / n as f64, (d as f64).sqrt() / n as f64, d)
}

/// Noise mechanism for numeric queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMechanism {
    Laplace,
    GaussianClassic,
    GaussianAnalytic,
}

impl FromStr for QueryMechanism {
    type Err = DpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "laplace" => Ok(QueryMechanism::Laplace),
            "gaussian_classic" => Ok(QueryMechanism::GaussianClassic),
            "gaussian_analytic" => Ok(QueryMechanism::GaussianAnalytic),
            other => Err(DpError::InvalidParameter(format!(
                "`{other}` is not a numeric-query mechanism (laplace, gaussian-classic, gaussian-analytic)"
            ))),
        }
    }
}

/// Ledger note attached to histogram releases.
pub const PARALLEL_COMPOSITION_NOTE: &str =
    "parallel composition: disjoint histogram cells, each record affects one cell";

/// A private answer together with its ledger id and the sensitivity used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryRelease {
    pub release: MechanismRelease,
    pub release_id: u64,
    pub sensitivity: Sensitivity,
}

impl QueryRelease {
    pub fn noisy(&self) -> &[f64] {
        self.release.vector().expect("numeric release")
    }
}

/// Answers `query` privately and charges `params` to `ledger`.
///
/// The public row count is taken to be `dataset.len()`. A histogram is charged
/// once for all cells. Zero-sensitivity queries are answered exactly but still
/// charged. Nothing is returned or booked if the budget check fails.
pub fn release<A: PrivacyAccountant + ?Sized>(
    query: &Query,
    dataset: &Dataset,
    params: PrivacyParams,
    mechanism: QueryMechanism,
    ledger: &mut A,
    rng: &mut RngStream,
) -> Result<QueryRelease> {
    let sensitivity = derive_sensitivity(query, dataset.schema(), Some(dataset.len()))?;
    if mechanism != QueryMechanism::Laplace && params.delta == 0.0 {
        return Err(DpError::InvalidParameter("the Gaussian mechanism needs delta > 0".into()));
    }
    let charged = match mechanism {
        QueryMechanism::Laplace => PrivacyParams::pure(params.epsilon)?,
        _ => params,
    };
    ledger.check_affordable(charged)?;
    let exact = evaluate(query, dataset)?;
    let release = match mechanism {
        QueryMechanism::Laplace => laplace_mechanism(&exact, sensitivity.l1, params.epsilon, rng)?,
        QueryMechanism::GaussianClassic => {
            gaussian_mechanism(&exact, sensitivity.l2, params.epsilon, params.delta, rng, GaussianCalibration::Classic)?
        }
        QueryMechanism::GaussianAnalytic => {
            gaussian_mechanism(&exact, sensitivity.l2, params.epsilon, params.delta, rng, GaussianCalibration::Analytic)?
        }
    };
    let note = (query.kind == QueryKind::Histogram).then_some(PARALLEL_COMPOSITION_NOTE);
    let release_id = ledger.charge(release.params, release.mechanism.as_str(), note)?;
    Ok(QueryRelease { release, release_id, sensitivity })
}

/// `max(0, round_half_even(x))` per cell.
pub fn postprocess_histogram(noisy: &[f64]) -> Vec<i64> {
    noisy.iter().map(|x| x.round_ties_even().max(0.0) as i64).collect()
}

/// Applies [`postprocess_histogram`] to a booked release and records the
/// zero-cost transform. Only the noisy vector is consulted.
pub fn postprocess_release<A: PrivacyAccountant + ?Sized>(
    ledger: &mut A,
    release_id: u64,
    noisy: &[f64],
) -> Result<Vec<i64>> {
    ledger.record_post_process(release_id, "clamp negatives to 0, round half to even")?;
    Ok(postprocess_histogram(noisy))
}

#[cfg(test)]
mod tests;
