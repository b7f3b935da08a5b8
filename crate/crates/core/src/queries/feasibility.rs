//! Decides whether a conjunction of comparisons can hold for some record in
//! the schema's domain. Constraints on different columns are independent, so
//! each column is checked on its own.

use crate::types::{ColumnKind, Schema, Value};

use super::{CmpOp, Cond};

pub(crate) fn is_satisfiable(schema: &Schema, conds: &[Cond]) -> bool {
    (0..schema.len()).all(|col| {
        let mine: Vec<&Cond> = conds.iter().filter(|c| c.col == col).collect();
        mine.is_empty() || column_satisfiable(&schema.columns()[col].kind, &mine)
    })
}

/// Whether `cond` holds for every value in its column's domain.
pub(crate) fn is_tautology(schema: &Schema, cond: &Cond) -> bool {
    !is_satisfiable(schema, &[cond.negated()])
}

#[derive(Clone, Copy)]
struct End {
    at: f64,
    strict: bool,
}

fn column_satisfiable(kind: &ColumnKind, conds: &[&Cond]) -> bool {
    match kind {
        ColumnKind::Categorical { categories } => {
            let mut allowed = vec![true; categories.len()];
            for c in conds {
                let Value::Category(t) = c.target else { return false };
                for (i, a) in allowed.iter_mut().enumerate() {
                    let hit = i == t as usize;
                    *a &= match c.op {
                        CmpOp::Eq => hit,
                        CmpOp::Ne => !hit,
                        _ => false,
                    };
                }
            }
            allowed.into_iter().any(|a| a)
        }
        ColumnKind::Integer { lower, upper } | ColumnKind::Real { lower, upper } => {
            let integer = matches!(kind, ColumnKind::Integer { .. });
            let mut lo = End { at: *lower, strict: false };
            let mut hi = End { at: *upper, strict: false };
            let mut excluded = Vec::new();
            for c in conds {
                let Value::Number(t) = c.target else { return false };
                let tighten_lo = |lo: &mut End, strict: bool| {
                    if t > lo.at || (t == lo.at && strict) {
                        *lo = End { at: t, strict };
                    }
                };
                let tighten_hi = |hi: &mut End, strict: bool| {
                    if t < hi.at || (t == hi.at && strict) {
                        *hi = End { at: t, strict };
                    }
                };
                match c.op {
                    CmpOp::Eq => {
                        tighten_lo(&mut lo, false);
                        tighten_hi(&mut hi, false);
                    }
                    CmpOp::Ne => excluded.push(t),
                    CmpOp::Lt => tighten_hi(&mut hi, true),
                    CmpOp::Le => tighten_hi(&mut hi, false),
                    CmpOp::Gt => tighten_lo(&mut lo, true),
                    CmpOp::Ge => tighten_lo(&mut lo, false),
                }
            }
            if integer {
                let first = if lo.strict { lo.at.floor() + 1.0 } else { lo.at.ceil() };
                let last = if hi.strict { hi.at.ceil() - 1.0 } else { hi.at.floor() };
                if first > last {
                    return false;
                }
                excluded.retain(|x| x.fract() == 0.0 && first <= *x && *x <= last);
                excluded.sort_by(f64::total_cmp);
                excluded.dedup();
                last - first + 1.0 > excluded.len() as f64
            } else if lo.at < hi.at {
                // a non-degenerate interval minus finitely many points
                true
            } else {
                lo.at == hi.at && !lo.strict && !hi.strict && !excluded.contains(&lo.at)
            }
        }
    }
}
