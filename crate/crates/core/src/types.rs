//! Dataset model, adjacency, privacy parameters and sensitivities.
//!
//! A [`Dataset`] is a multiset of records over a bounded [`Schema`]. Bounds are
//! mandatory for numeric columns: they are what makes global sensitivity
//! computable. Out-of-range values are clamped at ingestion and counted.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, DpError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Integer { lower: f64, upper: f64 },
    Real { lower: f64, upper: f64 },
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn integer(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self { name: name.into(), kind: ColumnKind::Integer { lower, upper } }
    }

    pub fn real(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self { name: name.into(), kind: ColumnKind::Real { lower, upper } }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical {
                categories: categories.into_iter().map(Into::into).collect(),
            },
        }
    }

    /// `(lower, upper)` for numeric columns.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            ColumnKind::Integer { lower, upper } | ColumnKind::Real { lower, upper } => {
                Some((lower, upper))
            }
            ColumnKind::Categorical { .. } => None,
        }
    }

    pub fn categories(&self) -> Option<&[String]> {
        match &self.kind {
            ColumnKind::Categorical { categories } => Some(categories),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.bounds().is_some()
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(DpError::Schema("empty column name".into()));
        }
        match &self.kind {
            ColumnKind::Integer { lower, upper } | ColumnKind::Real { lower, upper } => {
                if !lower.is_finite() || !upper.is_finite() {
                    return Err(DpError::Schema(format!(
                        "column `{}`: bounds must be finite",
                        self.name
                    )));
                }
                if lower >= upper {
                    return Err(DpError::Schema(format!(
                        "column `{}`: lower bound {lower} must be < upper bound {upper}",
                        self.name
                    )));
                }
            }
            ColumnKind::Categorical { categories } => {
                if categories.is_empty() {
                    return Err(DpError::Schema(format!(
                        "column `{}`: categorical column needs at least one category",
                        self.name
                    )));
                }
                for (i, c) in categories.iter().enumerate() {
                    if categories[..i].contains(c) {
                        return Err(DpError::Schema(format!(
                            "column `{}`: duplicate category `{c}`",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Ordered list of bounded columns; the data universe is their cross product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        if columns.is_empty() {
            return Err(DpError::Schema("schema has no columns".into()));
        }
        for (i, col) in columns.iter().enumerate() {
            col.validate()?;
            if columns[..i].iter().any(|c| c.name == col.name) {
                return Err(DpError::Schema(format!("duplicate column name `{}`", col.name)));
            }
        }
        Ok(Self { columns })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Record with every numeric field at its upper bound and every categorical
    /// field at its last category.
    pub fn upper_extreme(&self) -> Record {
        Record(
            self.columns
                .iter()
                .map(|c| match &c.kind {
                    ColumnKind::Integer { upper, .. } | ColumnKind::Real { upper, .. } => {
                        Value::Number(*upper)
                    }
                    ColumnKind::Categorical { categories } => {
                        Value::Category(categories.len() as u32 - 1)
                    }
                })
                .collect(),
        )
    }

    /// Record with every numeric field at its lower bound and every categorical
    /// field at its first category.
    pub fn lower_extreme(&self) -> Record {
        Record(
            self.columns
                .iter()
                .map(|c| match &c.kind {
                    ColumnKind::Integer { lower, .. } | ColumnKind::Real { lower, .. } => {
                        Value::Number(*lower)
                    }
                    ColumnKind::Categorical { .. } => Value::Category(0),
                })
                .collect(),
        )
    }
}

/// One field of a record. Categories are stored as indices into the column's
/// category list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Category(u32),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match *self {
            Value::Number(x) => Some(x),
            Value::Category(_) => None,
        }
    }

    pub fn as_category(&self) -> Option<u32> {
        match *self {
            Value::Category(c) => Some(c),
            Value::Number(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record(pub Vec<Value>);

impl Record {
    pub fn values(&self) -> &[Value] {
        &self.0
    }
}

/// Outcome of coercing one raw record.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedRecord {
    pub record: Record,
    /// Number of numeric fields that were clamped into bounds.
    pub clamped: usize,
}

/// Coerce a raw record (one string per schema column) into a [`Record`].
///
/// Numeric values outside `[lower, upper]` are clamped; unknown categories and
/// unparsable numbers are rejected.
pub fn validate_record<S: AsRef<str>>(schema: &Schema, raw: &[S]) -> Result<ValidatedRecord> {
    if raw.len() != schema.len() {
        return Err(DpError::Record {
            column: String::new(),
            message: format!("expected {} values, got {}", schema.len(), raw.len()),
        });
    }
    let mut clamped = 0;
    let mut values = Vec::with_capacity(raw.len());
    for (col, field) in schema.columns().iter().zip(raw) {
        let field = field.as_ref().trim();
        let value = match &col.kind {
            ColumnKind::Integer { lower, upper } => {
                let v: i64 = field.parse().map_err(|_| DpError::Record {
                    column: col.name.clone(),
                    message: format!("unparsable integer `{field}`"),
                })?;
                let (v, c) = clamp(v as f64, *lower, *upper);
                clamped += c as usize;
                Value::Number(v)
            }
            ColumnKind::Real { lower, upper } => {
                let v: f64 = field.parse().map_err(|_| DpError::Record {
                    column: col.name.clone(),
                    message: format!("unparsable number `{field}`"),
                })?;
                if v.is_nan() {
                    return Err(DpError::Record {
                        column: col.name.clone(),
                        message: "NaN is not a valid value".into(),
                    });
                }
                let (v, c) = clamp(v, *lower, *upper);
                clamped += c as usize;
                Value::Number(v)
            }
            ColumnKind::Categorical { categories } => {
                let idx = categories.iter().position(|c| c == field).ok_or_else(|| {
                    DpError::Record {
                        column: col.name.clone(),
                        message: format!("unknown category `{field}`"),
                    }
                })?;
                Value::Category(idx as u32)
            }
        };
        values.push(value);
    }
    Ok(ValidatedRecord { record: Record(values), clamped })
}

fn clamp(v: f64, lower: f64, upper: f64) -> (f64, bool) {
    if v < lower {
        (lower, true)
    } else if v > upper {
        (upper, true)
    } else {
        (v, false)
    }
}

/// Multiset of records over a schema. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<Schema>,
    rows: Vec<Record>,
}

impl Dataset {
    /// Builds a dataset from already-typed records, checking that every record
    /// lies inside the schema's domain.
    pub fn new(schema: Arc<Schema>, rows: Vec<Record>) -> Result<Self> {
        for row in &rows {
            check_in_domain(&schema, row)?;
        }
        Ok(Self { schema, rows })
    }

    pub fn empty(schema: Arc<Schema>) -> Self {
        Self { schema, rows: Vec::new() }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn rows(&self) -> &[Record] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn with_row(&self, row: Record) -> Self {
        let mut rows = self.rows.clone();
        rows.push(row);
        Self { schema: self.schema.clone(), rows }
    }

    pub fn without_row(&self, index: usize) -> Self {
        let mut rows = self.rows.clone();
        rows.remove(index);
        Self { schema: self.schema.clone(), rows }
    }

    pub fn with_replaced(&self, index: usize, row: Record) -> Self {
        let mut rows = self.rows.clone();
        rows[index] = row;
        Self { schema: self.schema.clone(), rows }
    }

    /// Values of a numeric column, in row order.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| DpError::Query(format!("unknown column `{name}`")))?;
        if !self.schema.columns()[idx].is_numeric() {
            return Err(DpError::Query(format!("column `{name}` is not numeric")));
        }
        Ok(self.rows.iter().filter_map(|r| r.0[idx].as_number()).collect())
    }
}

fn check_in_domain(schema: &Schema, row: &Record) -> Result<()> {
    if row.0.len() != schema.len() {
        return Err(DpError::Record {
            column: String::new(),
            message: format!("expected {} values, got {}", schema.len(), row.0.len()),
        });
    }
    for (col, value) in schema.columns().iter().zip(&row.0) {
        let ok = match (&col.kind, value) {
            (ColumnKind::Integer { lower, upper }, Value::Number(x)) => {
                x.fract() == 0.0 && *lower <= *x && *x <= *upper
            }
            (ColumnKind::Real { lower, upper }, Value::Number(x)) => *lower <= *x && *x <= *upper,
            (ColumnKind::Categorical { categories }, Value::Category(c)) => {
                (*c as usize) < categories.len()
            }
            _ => false,
        };
        if !ok {
            return Err(DpError::Record {
                column: col.name.clone(),
                message: format!("value {value:?} outside the declared domain"),
            });
        }
    }
    Ok(())
}

/// Size of the multiset symmetric difference `|a △ b|`.
pub fn symmetric_difference_size(a: &[Record], b: &[Record]) -> usize {
    let mut used = vec![false; b.len()];
    let mut matched = 0;
    for ra in a {
        if let Some(j) = (0..b.len()).find(|&j| !used[j] && b[j] == *ra) {
            used[j] = true;
            matched += 1;
        }
    }
    (a.len() - matched) + (b.len() - matched)
}

/// Neighbouring-dataset relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjacency {
    /// `|D △ D'| = 1`: one record added or removed.
    #[default]
    AddRemove,
    /// One record replaced: `|D| = |D'|` and `|D △ D'| = 2`.
    Exchange,
}

impl Adjacency {
    /// Whether `(a, b)` are neighbours under this relation.
    pub fn are_adjacent(self, a: &[Record], b: &[Record]) -> bool {
        let diff = symmetric_difference_size(a, b);
        match self {
            Adjacency::AddRemove => diff == 1,
            Adjacency::Exchange => a.len() == b.len() && diff == 2,
        }
    }
}

/// Yields up to `budget` neighbouring pairs `(D, D')` of `dataset`.
///
/// Synthetic rows are boundary extremes (every numeric field at its upper or
/// at its lower bound), which push aggregates as far as a single record can.
/// Under add/remove, removal pairs are interleaved with addition pairs; an
/// empty dataset only yields additions.
pub fn adjacent_pairs(
    dataset: &Dataset,
    mode: Adjacency,
    budget: usize,
) -> Result<impl Iterator<Item = (Dataset, Dataset)> + '_> {
    if budget < 1 {
        return Err(invalid("adjacent_pairs budget must be >= 1"));
    }
    let schema = dataset.schema();
    let mut extremes = vec![schema.upper_extreme()];
    let lower = schema.lower_extreme();
    if lower != extremes[0] {
        extremes.push(lower);
    }

    enum Step {
        Remove(usize),
        Add(usize),
        Replace(usize, usize),
    }

    let mut steps = Vec::new();
    match mode {
        Adjacency::AddRemove => {
            let n = dataset.len();
            let mut adds = 0..extremes.len();
            for i in 0..n {
                steps.push(Step::Remove(i));
                if let Some(k) = adds.next() {
                    steps.push(Step::Add(k));
                }
            }
            steps.extend(adds.map(Step::Add));
        }
        Adjacency::Exchange => {
            for (i, row) in dataset.rows().iter().enumerate() {
                let mut order: Vec<usize> =
                    (0..extremes.len()).filter(|&k| extremes[k] != *row).collect();
                order.sort_by(|&a, &b| {
                    record_distance(schema, row, &extremes[b])
                        .total_cmp(&record_distance(schema, row, &extremes[a]))
                });
                steps.extend(order.into_iter().map(|k| Step::Replace(i, k)));
            }
        }
    }

    Ok(steps.into_iter().take(budget).map(move |step| {
        let d_prime = match step {
            Step::Remove(i) => dataset.without_row(i),
            Step::Add(k) => dataset.with_row(extremes[k].clone()),
            Step::Replace(i, k) => dataset.with_replaced(i, extremes[k].clone()),
        };
        (dataset.clone(), d_prime)
    }))
}

/// Range-normalised L1 distance between two records; categorical mismatches count 1.
fn record_distance(schema: &Schema, a: &Record, b: &Record) -> f64 {
    schema
        .columns()
        .iter()
        .zip(a.0.iter().zip(&b.0))
        .map(|(col, (x, y))| match (col.bounds(), x, y) {
            (Some((lo, hi)), Value::Number(x), Value::Number(y)) => (x - y).abs() / (hi - lo),
            _ => (x != y) as u8 as f64,
        })
        .sum()
}

/// An `(epsilon, delta)` pair. `delta = 0` is pure DP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(invalid(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(invalid(format!("delta must lie in [0, 1], got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }
}

/// Global L1 and L2 sensitivities of a `dim`-dimensional query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub l1: f64,
    pub l2: f64,
    pub dim: usize,
}

impl Sensitivity {
    /// Enforces `l2 <= l1 <= sqrt(dim) * l2` (up to float rounding).
    pub fn new(l1: f64, l2: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("sensitivity dimension must be >= 1"));
        }
        if !(l1 >= 0.0 && l2 >= 0.0 && l1.is_finite() && l2.is_finite()) {
            return Err(invalid(format!("sensitivities must be finite and >= 0, got ({l1}, {l2})")));
        }
        const REL: f64 = 1e-12;
        let root_d = (dim as f64).sqrt();
        if l2 > l1 * (1.0 + REL) || l1 > root_d * l2 * (1.0 + REL) {
            return Err(invalid(format!(
                "norm relation l2 <= l1 <= sqrt(d) l2 violated: l1={l1}, l2={l2}, d={dim}"
            )));
        }
        Ok(Self { l1, l2, dim })
    }

    /// One-dimensional sensitivity, where both norms coincide.
    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(value, value, 1)
    }
}

/// Released value: a noisy vector or a selected outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseValue {
    Vector(Vec<f64>),
    Selection { index: usize, label: String },
}

/// `Pr[max-coordinate error >= alpha] <= beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub alpha: f64,
    pub beta: f64,
}

/// `Pr[score >= OPT - gap] >= 1 - beta` for selection mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityGap {
    pub gap: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Laplace,
    GaussianClassic,
    GaussianAnalytic,
    Exponential,
    RandomizedResponse,
}

impl MechanismKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MechanismKind::Laplace => "laplace",
            MechanismKind::GaussianClassic => "gaussian_classic",
            MechanismKind::GaussianAnalytic => "gaussian_analytic",
            MechanismKind::Exponential => "exponential",
            MechanismKind::RandomizedResponse => "randomized_response",
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A noisy answer with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismRelease {
    pub value: ReleaseValue,
    pub mechanism: MechanismKind,
    pub params: PrivacyParams,
    /// Laplace scale `b` or Gaussian `sigma`; absent for selection.
    pub noise_scale: Option<f64>,
    /// Present for numeric mechanisms.
    pub error_bound: Option<ErrorBound>,
    /// Present for selection mechanisms.
    pub utility_gap: Option<UtilityGap>,
    pub seed: u64,
    pub stream_id: u64,
}

impl MechanismRelease {
    pub fn vector(&self) -> Option<&[f64]> {
        match &self.value {
            ReleaseValue::Vector(v) => Some(v),
            ReleaseValue::Selection { .. } => None,
        }
    }
}
