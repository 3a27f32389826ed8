use std::time::{Duration, Instant};

use gi_core::profiler::{top_k, CommandProfiler};
use gi_core::{
    profile_with, Classification, Edit, Evaluator, ExternalAdapter, InsertionPoint, Patch,
    TargetAdapter,
};
use minilang::{parse_source, parse_tests, StatementId, DEFAULT_STEP_BUDGET};

fn external(adapter: ExternalAdapter) -> Evaluator {
    let u = parse_source("prog", "fn f(x: int) -> int { let y = x + 1; return y; }").unwrap();
    let tests = parse_tests("test a: f(1) == 2\ntest b: f(2) == 3").unwrap();
    Evaluator {
        adapter: TargetAdapter::External(adapter),
        ..Evaluator::builtin(u, tests, DEFAULT_STEP_BUDGET)
    }
}

fn empty() -> Patch {
    Patch::empty("prog", 0)
}

fn early_return() -> Patch {
    let at = InsertionPoint::new(StatementId::new("f", vec![]), 0);
    Patch::single("prog", Edit::InsertReturn { at }, 0)
}

#[test]
fn measured_runtime_is_parsed_from_stdout() {
    let mut a = ExternalAdapter::new("true", "true");
    a.measure_cmd = Some("echo 421".into());
    let ev = external(a);
    let r = ev.evaluate(&empty()).unwrap();
    assert_eq!(r.classification, Classification::Passed);
    assert_eq!((r.wall_clock_ms, r.runtime_steps), (Some(421), None));
    assert_eq!(ev.measure_runtime(3).unwrap(), 421);
}

#[test]
fn measurement_takes_the_median() {
    let dir = tempfile::tempdir().unwrap();
    let counter = dir.path().join("n");
    let mut a = ExternalAdapter::new("true", "true");
    // prints 100, 900, 300, 700, 500 on successive calls
    a.measure_cmd = Some(format!(
        "n=$(cat {c} 2>/dev/null || echo 0); echo $((n+1)) > {c}; \
         set -- 100 900 300 700 500; shift $n; echo $1",
        c = counter.display()
    ));
    let ev = external(a);
    assert_eq!(ev.evaluate(&empty()).unwrap().wall_clock_ms, Some(500));
}

#[test]
fn garbage_measurement_is_an_infrastructure_error() {
    let mut a = ExternalAdapter::new("true", "true");
    a.measure_cmd = Some("echo fast".into());
    assert!(external(a).evaluate(&empty()).is_err());
}

#[test]
fn compile_and_test_exit_codes_drive_the_ladder() {
    // "compiles" only when the patched file still computes y
    let a = ExternalAdapter::new(
        "grep -q 'let y' {PATCHED_FILE}",
        "grep -q 'return 0' {PATCHED_FILE} && exit 1; true",
    );
    let ev = external(a);
    assert_eq!(
        ev.evaluate(&empty()).unwrap().classification,
        Classification::Passed
    );
    let r = ev.evaluate(&early_return()).unwrap();
    assert_eq!(
        (r.classification, r.tests_failed),
        (Classification::CompiledOnly, 1)
    );

    let delete_y = Patch::single(
        "prog",
        Edit::Delete {
            target: StatementId::new("f", vec![0]),
        },
        0,
    );
    assert_eq!(
        ev.evaluate(&delete_y).unwrap().classification,
        Classification::ValidOnly
    );

    let bad = Patch::single(
        "prog",
        Edit::Delete {
            target: StatementId::new("f", vec![7]),
        },
        0,
    );
    let r = ev.evaluate(&bad).unwrap();
    assert_eq!(
        (r.classification, r.fingerprint),
        (Classification::Invalid, None)
    );
}

#[test]
fn per_test_commands_count_each_failure() {
    let a = ExternalAdapter::new("true", "test {TEST} = a");
    let r = external(a).evaluate(&empty()).unwrap();
    assert_eq!(
        (r.classification, r.tests_failed),
        (Classification::CompiledOnly, 1)
    );
}

#[test]
fn working_copy_holds_both_programs_and_is_private() {
    let a = ExternalAdapter::new(
        "grep -q 'return 0' {PATCHED_FILE} && ! grep -q 'return 0' {SRC} && test \"$PWD\" = {WORKDIR}",
        "true",
    );
    let ev = external(a);
    assert_eq!(
        ev.evaluate(&early_return()).unwrap().classification,
        Classification::Passed
    );
    assert_eq!(
        ev.evaluate(&empty()).unwrap().classification,
        Classification::ValidOnly
    );
}

#[test]
fn watchdog_kills_a_hanging_test() {
    let mut a = ExternalAdapter::new("true", "sleep 30");
    a.timeout_ms = 300;
    let start = Instant::now();
    let r = external(a).evaluate(&empty()).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(
        (r.classification, r.tests_failed),
        (Classification::CompiledOnly, 1)
    );
    assert!(
        elapsed >= Duration::from_millis(300) && elapsed < Duration::from_secs(3),
        "{elapsed:?}"
    );
}

#[test]
fn patch_apply_command_can_reject() {
    let mut a = ExternalAdapter::new("true", "true");
    a.patch_apply_cmd = Some("false".into());
    assert_eq!(
        external(a).evaluate(&empty()).unwrap().classification,
        Classification::Invalid
    );
}

#[test]
fn command_profiler_reads_cost_lines() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("p.ml");
    std::fs::write(&src, "").unwrap();
    let mut p = CommandProfiler {
        command: "test -f {SRC} && printf 'a 5\\nb 9\\nc 1\\n'".into(),
        source: src,
        workdir: dir.path().to_path_buf(),
        timeout: None,
    };
    let prof = profile_with(&mut p, 3, 2).unwrap();
    assert_eq!(prof.hot_set, vec!["b", "a"]);
    assert_eq!(top_k(&prof.per_run[0], 2), prof.hot_set);
}
