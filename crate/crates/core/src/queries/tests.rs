use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::accountant::{Ledger, LedgerEntry};
use crate::types::ColumnSpec;

fn people_schema() -> Arc<Schema> {
    Arc::new(
        Schema::new(vec![
            ColumnSpec::integer("age", 0.0, 100.0),
            ColumnSpec::categorical("gender", ["F", "M"]),
            ColumnSpec::categorical("region", ["N", "S", "E"]),
        ])
        .unwrap(),
    )
}

fn people() -> Dataset {
    // a small table of ages
    let ages = [67.0, 33.0, 64.0, 35.0, 67.0, 38.0, 31.0, 62.0];
    let rows = ages
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            Record(vec![Value::Number(a), Value::Category((i % 2) as u32), Value::Category((i % 3) as u32)])
        })
        .collect();
    Dataset::new(people_schema(), rows).unwrap()
}

fn pred(text: &str) -> Predicate {
    parse_predicate(text).unwrap()
}

fn age_bins() -> BinSpec {
    parse_bins("age:0,18,65,100; gender; region").unwrap()
}

#[test]
fn count_and_mean() {
    let d = people();
    assert_eq!(evaluate(&Query::count(), &d).unwrap(), vec![8.0]);
    let by_hand = (67.0 + 33.0 + 64.0 + 35.0 + 67.0 + 38.0 + 31.0 + 62.0) / 8.0;
    assert_eq!(by_hand, 49.625);
    assert_eq!(evaluate(&Query::mean("age"), &d).unwrap(), vec![by_hand]);
    assert_eq!(evaluate(&Query::sum("age"), &d).unwrap(), vec![397.0]);
    assert_eq!(evaluate(&Query::count().filtered(pred("age > 60 AND gender = F")), &d).unwrap(), vec![3.0]);
    assert!(evaluate(&Query::mean("age"), &Dataset::empty(people_schema())).is_err());
}

#[test]
fn histogram_partitions_rows() {
    let d = people();
    let q = Query::histogram(age_bins());
    let h = evaluate(&q, &d).unwrap();
    assert_eq!(h.len(), 3 * 2 * 3);
    assert_eq!(h.iter().sum::<f64>(), 8.0);
    let labels = cell_labels(&q, d.schema()).unwrap();
    assert_eq!(labels[0], "age=[0,18)|gender=F|region=N");
    assert_eq!(labels[17], "age=[65,100]|gender=M|region=E");
}

#[test]
fn numeric_bin_edges() {
    let schema = Arc::new(Schema::new(vec![ColumnSpec::real("x", 0.0, 1.0)]).unwrap());
    let rows = [0.0, 0.25, 0.5, 0.999, 1.0].iter().map(|&x| Record(vec![Value::Number(x)])).collect();
    let d = Dataset::new(schema, rows).unwrap();
    let q = Query::histogram(parse_bins("x:0,0.5,1").unwrap());
    // 0.5 opens the second bin; the upper bound belongs to the last bin
    assert_eq!(evaluate(&q, &d).unwrap(), vec![2.0, 3.0]);
}

#[test]
fn schema_mismatches_are_errors() {
    let s = people_schema();
    for q in [
        Query::mean("gender"),
        Query::sum("nope"),
        Query { column: None, ..Query::mean("age") },
        Query { column: Some("age".into()), ..Query::count() },
        Query::histogram(parse_bins("age:0,50").unwrap()),
        Query::histogram(parse_bins("age:10,50,100").unwrap()),
        Query::histogram(parse_bins("age:0,50,50,100").unwrap()),
        Query::histogram(parse_bins("gender:0,1").unwrap()),
        Query::histogram(parse_bins("age").unwrap()),
        Query::histogram(parse_bins("gender; gender").unwrap()),
        Query { bins: None, ..Query::histogram(age_bins()) },
        Query { bins: Some(age_bins()), ..Query::count() },
        Query::count().filtered(pred("gender < F")),
        Query::count().filtered(pred("gender = X")),
        Query::count().filtered(pred("age = old")),
        Query::mean("age").filtered(pred("age > 3")),
    ] {
        assert!(q.validate(&s).is_err(), "{q:?}");
    }
}

#[test]
fn sensitivity_examples() {
    let s = people_schema();
    assert_eq!(derive_sensitivity(&Query::count(), &s, None).unwrap(), Sensitivity::scalar(1.0).unwrap());
    let ages = Arc::new(Schema::new(vec![ColumnSpec::integer("age", 0.0, 100.0)]).unwrap());
    let m = derive_sensitivity(&Query::mean("age"), &ages, Some(10_000)).unwrap();
    assert_eq!((m.l1, m.l2), (0.01, 0.01));
    assert!(derive_sensitivity(&Query::mean("age"), &ages, None).is_err());
    assert!(derive_sensitivity(&Query::mean("age"), &ages, Some(0)).is_err());

    let h = derive_sensitivity(&Query::histogram(age_bins()), &s, None).unwrap();
    assert_eq!((h.l1, h.l2, h.dim), (1.0, 1.0, 18));
    let hx = derive_sensitivity_under(&Query::histogram(age_bins()), &s, None, Adjacency::Exchange).unwrap();
    assert_eq!((hx.l1, hx.l2), (2.0, std::f64::consts::SQRT_2));

    let signed = Schema::new(vec![ColumnSpec::real("t", -40.0, 10.0)]).unwrap();
    assert_eq!(derive_sensitivity(&Query::sum("t"), &signed, None).unwrap().l1, 40.0);
    assert_eq!(derive_sensitivity_under(&Query::sum("t"), &signed, None, Adjacency::Exchange).unwrap().l1, 50.0);
}

#[test]
fn unsatisfiable_predicates_have_zero_sensitivity() {
    let s = people_schema();
    for p in ["age > 100", "age < 0", "age > 3 AND age < 4", "gender = F AND gender = M", "age = 2.5"] {
        let q = Query::count().filtered(pred(p));
        assert_eq!(derive_sensitivity(&q, &s, None).unwrap().l1, 0.0, "{p}");
    }
    for p in ["age >= 100", "age > 3 AND age < 5", "gender != F"] {
        let q = Query::count().filtered(pred(p));
        assert_eq!(derive_sensitivity(&q, &s, None).unwrap().l1, 1.0, "{p}");
    }
    // a tautology cannot change under exchange
    let q = Query::count().filtered(pred("age <= 100"));
    assert_eq!(derive_sensitivity_under(&q, &s, None, Adjacency::Exchange).unwrap().l1, 0.0);
}

#[test]
fn binary_mean() {
    let s = binary_mean_sensitivity(100, 4).unwrap();
    assert_eq!((s.l1, s.l2, s.dim), (0.04, 0.02, 4));
    assert!(binary_mean_sensitivity(0, 4).is_err());
}

#[test]
fn postprocess_examples() {
    assert_eq!(postprocess_histogram(&[-1.2, 0.4, 3.6]), vec![0, 0, 4]);
    assert_eq!(postprocess_histogram(&[0.5, 1.5, 2.5, -0.5]), vec![0, 2, 2, 0]);
    assert_eq!(postprocess_histogram(&[0.0, 3.0, 7.0]), vec![0, 3, 7]);
}

#[test]
fn release_mean_age() {
    let ages = Arc::new(Schema::new(vec![ColumnSpec::integer("age", 0.0, 100.0)]).unwrap());
    let rows = (0..10_000).map(|i| Record(vec![Value::Number((i % 101) as f64)])).collect();
    let d = Dataset::new(ages, rows).unwrap();
    let mut ledger = Ledger::new();
    let mut rng = RngStream::new(5, 0);
    let params = PrivacyParams::pure(0.5).unwrap();
    let r = release(&Query::mean("age"), &d, params, QueryMechanism::Laplace, &mut ledger, &mut rng).unwrap();
    assert!((r.release.noise_scale.unwrap() - 0.02).abs() < 1e-15);
    assert!((r.release.error_bound.unwrap().alpha - 20f64.ln() * 0.02).abs() < 1e-12);
    assert_eq!(ledger.totals().epsilon, 0.5);
    assert_eq!(r.release_id, 0);
}

#[test]
fn release_histogram_charges_once() {
    let d = people();
    let mut ledger = Ledger::new();
    let mut rng = RngStream::new(6, 0);
    let params = PrivacyParams::pure(0.5).unwrap();
    let q = Query::histogram(age_bins());
    let r = release(&q, &d, params, QueryMechanism::Laplace, &mut ledger, &mut rng).unwrap();
    assert_eq!(r.noisy().len(), 18);
    assert_eq!(r.release.noise_scale, Some(2.0));
    assert_eq!(ledger.totals().epsilon, 0.5);
    match &ledger.entries()[0] {
        LedgerEntry::Release(e) => assert_eq!(e.note.as_deref(), Some(PARALLEL_COMPOSITION_NOTE)),
        e => panic!("{e:?}"),
    }
    let before = ledger.totals();
    let counts = postprocess_release(&mut ledger, r.release_id, r.noisy()).unwrap();
    assert!(counts.iter().all(|c| *c >= 0));
    assert_eq!(ledger.totals(), before);
}

#[test]
fn release_zero_sensitivity_is_exact_but_charged() {
    let d = people();
    let mut ledger = Ledger::new();
    let mut rng = RngStream::new(7, 0);
    let q = Query::count().filtered(pred("age > 100"));
    let r = release(&q, &d, PrivacyParams::pure(0.3).unwrap(), QueryMechanism::Laplace, &mut ledger, &mut rng)
        .unwrap();
    assert_eq!(r.noisy(), &[0.0]);
    assert_eq!(ledger.totals().epsilon, 0.3);
}

#[test]
fn release_respects_budget_and_delta() {
    let d = people();
    let mut ledger = Ledger::with_budget(PrivacyParams::pure(1.0).unwrap());
    let mut rng = RngStream::new(8, 0);
    let p = PrivacyParams::pure(0.6).unwrap();
    release(&Query::count(), &d, p, QueryMechanism::Laplace, &mut ledger, &mut rng).unwrap();
    let err = release(&Query::count(), &d, p, QueryMechanism::Laplace, &mut ledger, &mut rng).unwrap_err();
    assert!(matches!(err, DpError::BudgetExceeded { .. }));
    assert_eq!(ledger.totals().epsilon, 0.6);
    assert_eq!(ledger.entries().len(), 2);

    let mut free = Ledger::new();
    let err = release(&Query::count(), &d, p, QueryMechanism::GaussianAnalytic, &mut free, &mut rng).unwrap_err();
    assert!(matches!(err, DpError::InvalidParameter(_)));
    let g = PrivacyParams::new(0.5, 1e-6).unwrap();
    let r = release(&Query::count(), &d, g, QueryMechanism::GaussianClassic, &mut free, &mut rng).unwrap();
    assert_eq!(r.release.params, g);
    assert_eq!(free.totals().delta, 1e-6);
}

#[test]
fn mechanism_names() {
    assert_eq!("gaussian-analytic".parse::<QueryMechanism>().unwrap(), QueryMechanism::GaussianAnalytic);
    assert_eq!("laplace".parse::<QueryMechanism>().unwrap(), QueryMechanism::Laplace);
    assert!("exponential".parse::<QueryMechanism>().is_err());
}

// ---- brute-force oracle for the feasibility analysis ----

fn tiny_schema() -> Arc<Schema> {
    Arc::new(
        Schema::new(vec![ColumnSpec::integer("x", 0.0, 3.0), ColumnSpec::categorical("c", ["a", "b", "c"])])
            .unwrap(),
    )
}

fn universe() -> Vec<Record> {
    (0..4)
        .flat_map(|x| (0..3).map(move |c| Record(vec![Value::Number(x as f64), Value::Category(c)])))
        .collect()
}

/// Exhaustive l1 sensitivity over all datasets of up to two rows.
fn brute_l1(q: &Query, adjacency: Adjacency) -> f64 {
    let s = tiny_schema();
    let u = universe();
    let mut datasets = vec![vec![]];
    for a in 0..u.len() {
        datasets.push(vec![u[a].clone()]);
        for b in a..u.len() {
            datasets.push(vec![u[a].clone(), u[b].clone()]);
        }
    }
    let eval = |rows: &Vec<Record>| evaluate(q, &Dataset::new(s.clone(), rows.clone()).unwrap()).unwrap();
    let mut best = 0.0_f64;
    for d in &datasets {
        let f = eval(d);
        let neighbours: Vec<Vec<Record>> = match adjacency {
            Adjacency::AddRemove => u.iter().map(|r| [d.clone(), vec![r.clone()]].concat()).collect(),
            Adjacency::Exchange => (0..d.len())
                .flat_map(|i| u.iter().map(move |r| (i, r)))
                .map(|(i, r)| {
                    let mut e = d.clone();
                    e[i] = r.clone();
                    e
                })
                .collect(),
        };
        for n in neighbours {
            let g = eval(&n);
            best = best.max(f.iter().zip(&g).map(|(a, b)| (a - b).abs()).sum());
        }
    }
    best
}

fn clause() -> impl Strategy<Value = String> {
    prop_oneof![
        (prop::sample::select(vec!["=", "!=", "<", "<=", ">", ">="]), -1.0f64..4.5)
            .prop_map(|(op, v)| format!("x {op} {}", (v * 2.0).round() / 2.0)),
        (prop::sample::select(vec!["=", "!="]), prop::sample::select(vec!["a", "b", "c"]))
            .prop_map(|(op, v)| format!("c {op} {v}")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derived_sensitivity_matches_brute_force(
        clauses in prop::collection::vec(clause(), 0..3),
        histogram in any::<bool>(),
        exchange in any::<bool>(),
    ) {
        let mut q = if histogram {
            Query::histogram(parse_bins("x:0,2,3; c").unwrap())
        } else {
            Query::count()
        };
        if !clauses.is_empty() {
            q = q.filtered(pred(&clauses.join(" AND ")));
        }
        let adjacency = if exchange { Adjacency::Exchange } else { Adjacency::AddRemove };
        let derived = derive_sensitivity_under(&q, &tiny_schema(), None, adjacency).unwrap();
        prop_assert_eq!(derived.l1, brute_l1(&q, adjacency), "{:?}", q);
    }

    #[test]
    fn postprocess_is_idempotent(xs in prop::collection::vec(-1e6f64..1e6, 0..50)) {
        let once = postprocess_histogram(&xs);
        let again: Vec<f64> = once.iter().map(|&c| c as f64).collect();
        prop_assert_eq!(postprocess_histogram(&again), once.clone());
        prop_assert!(once.iter().all(|c| *c >= 0));
    }
}
