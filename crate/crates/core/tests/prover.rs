mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;

use verifide_core::lang::ast::Decl;
use verifide_core::lang::{analyze, Program};
use verifide_core::prover::{
    bounded_inputs, execute_concrete, extract_units, precondition_holds, replay_trace, verify_all, verify_unit,
    Bounds, Outcome, Value, Verdict, VerificationError,
};

fn program(text: &str) -> Arc<Program> {
    let p = analyze(text);
    assert!(!p.has_errors(), "{:?}", p.diagnostics);
    Arc::new(p)
}

fn failing_units(text: &str) -> BTreeSet<String> {
    verify_all(&program(text), Bounds::default())
        .into_iter()
        .filter(|(_, v)| *v != Verdict::Verified)
        .map(|(u, v)| {
            assert_eq!(v.label(), "failed", "{u}");
            u.to_string()
        })
        .collect()
}

/// Failing units of each corpus program, decided by reading the programs.
const EXPECTED_FAILURES: &[(&str, &[&str])] = &[
    ("abs.msp", &[]),
    ("abs_strict.msp", &["MethodBody(Abs)"]),
    ("array_max.msp", &[]),
    ("assert_false.msp", &["MethodBody(Unreachable)"]),
    ("assume_assert.msp", &[]),
    ("call_precondition.msp", &["MethodBody(Caller)"]),
    ("copy_prefix.msp", &[]),
    ("countdown.msp", &[]),
    ("div_guarded.msp", &[]),
    ("div_unguarded.msp", &["MethodBody(Div)"]),
    ("even_function.msp", &[]),
    ("fill_fixed.msp", &[]),
    ("function_no_progress.msp", &["FunctionWF(Spin)"]),
    ("inc_twice.msp", &[]),
    ("inc_weak_spec.msp", &["MethodBody(Twice)"]),
    ("index_unchecked.msp", &["MethodBody(Get)"]),
    ("linear_search.msp", &[]),
    ("loop_wrong_bound.msp", &["MethodBody(Zero)"]),
    ("minmax.msp", &[]),
    ("mutual_parity.msp", &[]),
    ("recursion_no_decrease.msp", &["MethodBody(Forever)"]),
    ("spec_not_well_defined.msp", &["MethodSpecWF(First)", "MethodBody(First)"]),
    ("square.msp", &[]),
    ("straight_line.msp", &["MethodBody(Straight)"]),
    ("sum_loop.msp", &[]),
    ("sum_loop_bad_invariant.msp", &["MethodBody(SumTo)"]),
    ("swap.msp", &[]),
];

#[test]
fn corpus_verdicts() {
    for (name, want) in EXPECTED_FAILURES {
        let want: BTreeSet<String> = want.iter().map(|s| s.to_string()).collect();
        assert_eq!(failing_units(&common::corpus_file(name)), want, "{name}");
    }
    // Every corpus file except the slow one is covered above.
    let listed: BTreeSet<&str> = EXPECTED_FAILURES.iter().map(|(n, _)| *n).collect();
    for (name, _) in common::corpus() {
        assert!(listed.contains(name.as_str()) || name == "fill.msp", "{name} has no expectation");
    }
}

fn only_error(text: &str, unit: &str) -> VerificationError {
    let vs = verify_all(&program(text), Bounds::default());
    let (_, v) = vs.iter().find(|(u, _)| u.to_string() == unit).expect("unit");
    let errs = v.errors();
    assert_eq!(errs.len(), 1, "{unit}: {errs:?}");
    errs[0].clone()
}

fn int(v: &Value) -> i64 {
    match v {
        Value::Int(n) => *n,
        other => panic!("not an int: {other}"),
    }
}

#[test]
fn straight_line_counterexample() {
    let e = only_error(&common::corpus_file("straight_line.msp"), "MethodBody(Straight)");
    assert_eq!(e.message, "assertion might not hold");
    assert_eq!(e.error_span.start_line, 4);
    // Entry state, then one state per statement up to the failing assert.
    assert_eq!(e.trace.states.len(), 4);
    let last = e.trace.states.last().unwrap();
    let (x, y, z) = (int(last.get("x").unwrap()), int(last.get("y").unwrap()), int(last.get("z").unwrap()));
    assert_eq!((y, z), (x + 1, (x + 1) * 2));
    assert_eq!(z, 4);
    let lines: Vec<u32> = e.trace.states.iter().map(|s| s.location.start_line).collect();
    assert_eq!(lines, [1, 2, 3, 4]);
}

#[test]
fn assert_false_trace() {
    let e = only_error(&common::corpus_file("assert_false.msp"), "MethodBody(Unreachable)");
    assert_eq!(e.trace.states.len(), 2);
    assert!(e.trace.states.iter().all(|s| s.bindings.is_empty()));
}

#[test]
fn division_and_call_precondition_counterexamples() {
    let e = only_error(&common::corpus_file("div_unguarded.msp"), "MethodBody(Div)");
    assert_eq!(e.message, "possible division by zero");
    assert_eq!(int(e.trace.states.last().unwrap().get("y").unwrap()), 0);

    let e = only_error(&common::corpus_file("call_precondition.msp"), "MethodBody(Caller)");
    assert_eq!(e.message, "precondition for call might not hold");
    assert_eq!(e.error_span.start_line, 8);
    // The related location is the callee's requires clause.
    assert_eq!(e.related_spans.len(), 1);
    assert_eq!(e.related_spans[0].start_line, 1);
    assert_eq!(int(e.trace.states[0].get("n").unwrap()), 0);
}

#[test]
fn fill_counterexample_walks_through_the_recursive_call() {
    let text = common::corpus_file("fill.msp");
    let e = only_error(&text, "MethodBody(Fill)");
    assert_eq!(e.message, "ensures clause might not hold");
    assert_eq!(e.error_span.start_line, 12);
    assert_eq!(e.related_spans[0].start_line, 4);
    let lines: Vec<u32> = e.trace.states.iter().map(|s| s.location.start_line).collect();
    assert_eq!(lines.first(), Some(&6), "entry state");
    assert_eq!(lines.last(), Some(&12), "exit state");
    assert!(lines.contains(&9), "a[end] := v missing from {lines:?}");
    assert!(lines.contains(&10), "recursive call missing from {lines:?}");
    let p = program(&text);
    let unit = extract_units(&p).into_iter().find(|u| u.id.to_string() == "MethodBody(Fill)").unwrap();
    let (span, msg) = replay_trace(&unit, &e.trace, Bounds::default()).expect("fault reproduced");
    assert_eq!((span, msg), (e.error_span, e.message.clone()));
}

#[test]
fn traces_replay_to_the_reported_fault() {
    for (name, want) in EXPECTED_FAILURES {
        if want.is_empty() {
            continue;
        }
        let p = program(&common::corpus_file(name));
        let vs = verify_all(&p, Bounds::default());
        for unit in extract_units(&p) {
            for e in vs[&unit.id].errors() {
                let got = replay_trace(&unit, &e.trace, Bounds::default());
                assert_eq!(got, Some((e.error_span, e.message.clone())), "{name} {}", unit.id);
            }
        }
    }
}

fn entry_inputs(p: &Program, method: &str, e: &VerificationError) -> Vec<Value> {
    let Some(Decl::Method(m)) = p.decl(method) else { panic!("{method}") };
    m.params.iter().map(|q| e.trace.states[0].get(&q.name.name).unwrap().clone()).collect()
}

#[test]
fn call_free_counterexamples_fail_when_run() {
    for (file, method) in [
        ("straight_line.msp", "Straight"),
        ("div_unguarded.msp", "Div"),
        ("assert_false.msp", "Unreachable"),
        ("index_unchecked.msp", "Get"),
        ("abs_strict.msp", "Abs"),
    ] {
        let p = program(&common::corpus_file(file));
        let e = only_error(&common::corpus_file(file), &format!("MethodBody({method})"));
        let inputs = entry_inputs(&p, method, &e);
        assert!(precondition_holds(&p, method, &inputs, Bounds::default()), "{file}");
        match execute_concrete(&p, method, &inputs, Bounds::default()) {
            Outcome::Fault { span, .. } => {
                // The ensures failure is reported at the exit point in both.
                assert_eq!(span, e.error_span, "{file}")
            }
            Outcome::Ok => panic!("{file}: counterexample {inputs:?} runs cleanly"),
        }
    }
}

/// Bounded soundness: when every unit of a program verifies, running any
/// method on any in-bounds input that meets its precondition never faults.
#[test]
fn verified_programs_run_without_faults() {
    let bounds = Bounds::default();
    for (name, want) in EXPECTED_FAILURES {
        if !want.is_empty() {
            continue;
        }
        let p = program(&common::corpus_file(name));
        for d in &p.decls {
            let Decl::Method(m) = d else { continue };
            let mut runs = 0;
            for inputs in bounded_inputs(&m.params, &bounds) {
                if !precondition_holds(&p, &m.name.name, &inputs, bounds) {
                    continue;
                }
                runs += 1;
                let out = execute_concrete(&p, &m.name.name, &inputs, bounds);
                assert_eq!(out, Outcome::Ok, "{name} {} {inputs:?}", m.name.name);
            }
            assert!(runs > 0, "{name} {}: no admissible input", m.name.name);
        }
    }
}

#[test]
fn time_limit_attribute_and_timeouts() {
    let p = program("method {:timeLimit 2} M() { }\nmethod N() { }\n");
    let units = extract_units(&p);
    assert_eq!(units[0].timeout_ms(500), 2000);
    assert_eq!(units[2].timeout_ms(500), 500);
    let p = program(&common::corpus_file("fill.msp"));
    let body = extract_units(&p).into_iter().find(|u| u.id.to_string() == "MethodBody(Fill)").unwrap();
    assert_eq!(verify_unit(&body, Bounds::default(), 0), Verdict::Timeout);
}

#[test]
fn bounded_inputs_enumerates_the_domain() {
    let p = program("method M(a: array<int>, b: bool, n: int) { }");
    let Some(Decl::Method(m)) = p.decl("M") else { panic!() };
    let b = Bounds {
        int_low: -1,
        int_high: 1,
        max_array_len: 2,
        ..Bounds::default()
    };
    let all: Vec<Vec<Value>> = bounded_inputs(&m.params, &b).collect();
    // Arrays: 1 + 3 + 9, booleans: 2, ints: 3.
    assert_eq!(all.len(), 13 * 2 * 3);
    let distinct: BTreeSet<String> = all.iter().map(|v| format!("{v:?}")).collect();
    assert_eq!(distinct.len(), all.len());
}

// Random straight-line programs against a direct evaluation in Rust.

#[derive(Clone, Debug)]
enum E {
    X,
    Y,
    K(i64),
    Bin(char, Box<E>, Box<E>),
}

fn exprs() -> impl Strategy<Value = E> {
    let leaf = prop_oneof![Just(E::X), Just(E::Y), (-2i64..=2).prop_map(E::K)];
    leaf.prop_recursive(3, 12, 2, |inner| {
        (prop::sample::select(vec!['+', '-', '*', '/', '%']), inner.clone(), inner)
            .prop_map(|(op, a, b)| E::Bin(op, Box::new(a), Box::new(b)))
    })
}

fn show(e: &E) -> String {
    match e {
        E::X => "x".into(),
        E::Y => "y".into(),
        E::K(k) if *k < 0 => format!("(0 - {})", -k),
        E::K(k) => k.to_string(),
        E::Bin(op, a, b) => format!("({} {op} {})", show(a), show(b)),
    }
}

/// Euclidean division, zero divisors fault.
fn eval(e: &E, x: i64, y: i64) -> Option<i64> {
    Some(match e {
        E::X => x,
        E::Y => y,
        E::K(k) => *k,
        E::Bin(op, a, b) => {
            let (a, b) = (eval(a, x, y)?, eval(b, x, y)?);
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' => a.checked_div_euclid(b)?,
                _ => a.checked_rem_euclid(b)?,
            }
        }
    })
}

fn body_faults(e1: &E, e2: &E, cmp: &str, x: i64, y: i64) -> bool {
    let Some(a) = eval(e1, x, y) else { return true };
    let Some(b) = eval(e2, x, y) else { return true };
    let holds = match cmp {
        "<=" => a <= b,
        "!=" => a != b,
        _ => a == b,
    };
    !holds
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn straight_line_programs_match_direct_evaluation(
        e1 in exprs(),
        e2 in exprs(),
        cmp in prop::sample::select(vec!["<=", "!=", "=="]),
    ) {
        let text = format!(
            "method M(x: int, y: int)\n{{\n  var a := {};\n  var b := {};\n  assert a {cmp} b;\n}}\n",
            show(&e1), show(&e2)
        );
        let p = program(&text);
        let b = Bounds::default();
        let mut bad = Vec::new();
        for x in b.int_low..=b.int_high {
            for y in b.int_low..=b.int_high {
                if body_faults(&e1, &e2, cmp, x, y) {
                    bad.push((x, y));
                }
            }
        }
        let vs = verify_all(&p, b);
        let body = vs.iter().find(|(u, _)| u.to_string() == "MethodBody(M)").unwrap().1;
        prop_assert_eq!(body.label() == "failed", !bad.is_empty(), "{}", text);
        for e in body.errors() {
            let s0 = &e.trace.states[0];
            let (x, y) = (int(s0.get("x").unwrap()), int(s0.get("y").unwrap()));
            prop_assert!(bad.contains(&(x, y)), "{} reported at x={} y={}", text, x, y);
            let ran = execute_concrete(&p, "M", &[Value::Int(x), Value::Int(y)], b);
            prop_assert!(ran != Outcome::Ok, "{} ran cleanly at x={} y={}", text, x, y);
        }
    }
}
