use std::collections::HashMap;

use gi_core::{
    insertion_points, patched_text, rng_from_seed, sample_insert_edit, sample_statement_edit,
    Benchmark, Classification, Edit, EditKind, Evaluator, InsertionPoint, Patch,
};
use minilang::{parse_source, parse_tests, StatementId, DEFAULT_STEP_BUDGET};

/// P(|X - n p| > d) for X ~ Binomial(n, p), summed exactly in log space.
fn binomial_two_sided_tail(n: u64, p: f64, d: f64) -> f64 {
    let mean = n as f64 * p;
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, k| {
            *acc += (k as f64).ln();
            Some(*acc)
        }))
        .collect();
    (0..=n)
        .filter(|&k| (k as f64 - mean).abs() > d)
        .map(|k| {
            let ln = ln_fact[n as usize] - ln_fact[k as usize] - ln_fact[(n - k) as usize]
                + k as f64 * p.ln()
                + (n - k) as f64 * (1.0 - p).ln();
            ln.exp()
        })
        .sum()
}

fn histogram(kinds: impl Iterator<Item = EditKind>) -> HashMap<EditKind, u64> {
    let mut h = HashMap::new();
    for k in kinds {
        *h.entry(k).or_default() += 1;
    }
    h
}

#[test]
fn statement_kinds_are_uniform_on_bench_sort() {
    let u = Benchmark::get("bench_sort").unwrap().unit();
    let hot = vec!["sort".to_string()];
    let mut rng = rng_from_seed(7);
    let h = histogram((0..1000).map(|_| sample_statement_edit(&u, &hot, &mut rng).unwrap().kind()));
    assert_eq!(h.len(), 4);
    // ±5 percentage points around 250 each. A union bound over the four
    // marginals keeps the chance of a false alarm tiny.
    let tail = binomial_two_sided_tail(1000, 0.25, 50.0);
    assert!(4.0 * tail < 1e-2, "bound too loose: {tail}");
    for (kind, n) in &h {
        assert!((200..=300).contains(n), "{kind:?}: {n} in {h:?}");
    }
}

#[test]
fn insert_kinds_are_uniform_on_bench_sort() {
    let u = Benchmark::get("bench_sort").unwrap().unit();
    let hot = vec!["sort".to_string()];
    let mut rng = rng_from_seed(7);
    let h = histogram((0..1000).map(|_| sample_insert_edit(&u, &hot, &mut rng).unwrap().kind()));
    assert_eq!(h.len(), 3);
    let tail = binomial_two_sided_tail(1000, 1.0 / 3.0, 50.0);
    assert!(3.0 * tail < 1e-2, "bound too loose: {tail}");
    for (kind, n) in &h {
        assert!((283..=383).contains(n), "{kind:?}: {n} in {h:?}");
    }
}

#[test]
fn flat_body_has_n_plus_one_insertion_points() {
    for n in 0..6 {
        let body: String = (0..n).map(|i| format!("let v{i} = {i}; ")).collect();
        let u = parse_source("u", &format!("fn f() {{ {body}}}")).unwrap();
        let points = insertion_points(u.function("f").unwrap());
        let expected: Vec<InsertionPoint> = (0..=n)
            .map(|i| InsertionPoint::new(StatementId::new("f", vec![]), i))
            .collect();
        assert_eq!(points, expected);
    }
}

fn triple() -> Evaluator {
    let u = parse_source("u", "fn triple(x: int) -> int { let y = x * 3; return y; }").unwrap();
    let tests = parse_tests(
        "test zero: triple(0) == 0\ntest one: triple(1) == 3\ntest two: triple(2) == 6",
    )
    .unwrap();
    Evaluator::builtin(u, tests, DEFAULT_STEP_BUDGET)
}

fn at_body_start() -> InsertionPoint {
    InsertionPoint::new(StatementId::new("triple", vec![]), 0)
}

#[test]
fn break_outside_a_loop_is_valid_only() {
    let ev = triple();
    let r = ev
        .evaluate(&Patch::single(
            "u",
            Edit::InsertBreak {
                at: at_body_start(),
            },
            0,
        ))
        .unwrap();
    assert_eq!(r.classification, Classification::ValidOnly);
    let r = ev
        .evaluate(&Patch::single(
            "u",
            Edit::InsertContinue {
                at: at_body_start(),
            },
            0,
        ))
        .unwrap();
    assert_eq!(r.classification, Classification::ValidOnly);
}

#[test]
fn early_return_uses_the_default_literal() {
    let ev = triple();
    let p = Patch::single(
        "u",
        Edit::InsertReturn {
            at: at_body_start(),
        },
        0,
    );
    let text = patched_text(&ev.unit, &p).unwrap();
    assert!(text.contains("{\n    return 0;\n    let y"), "{text}");
    let r = ev.evaluate(&p).unwrap();
    assert_eq!(r.classification, Classification::CompiledOnly);
    // only `zero` expects 0
    assert_eq!(r.tests_failed, 2);
}
