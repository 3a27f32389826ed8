use std::path::PathBuf;

use gi_core::report::{TABLE1_HEADER, TABLE2_HEADER};
use gi_core::{
    aggregate, read_log, write_log, write_table1, write_table2, Benchmark, Edit, EvalRecord,
    Evaluator, OperatorFamily, Patch, SearchKind,
};
use minilang::{StatementId, DEFAULT_STEP_BUDGET};

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/seed42")
        .join(name)
}

fn table1_of(log: &[u8]) -> String {
    let reports = aggregate(&read_log(log).unwrap()).unwrap();
    let mut out = Vec::new();
    write_table1(&reports, &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn shipped_seed_42_log_aggregates_to_its_golden_table() {
    let log = std::fs::read(shipped("sample_log.csv")).unwrap();
    let table = table1_of(&log);
    assert_eq!(
        table,
        std::fs::read_to_string(shipped("table1.csv")).unwrap()
    );
    assert_eq!(
        table,
        "EditCategory,UniquePatches,UniqueValid,UniqueCompiled,UniquePassed,Patches,Valid,Compiled,Passed\n\
         Statement,261,261,64,20,934,934,368,82\n\
         Insert,39,39,31,4,1000,1000,822,104\n\
         Simple,15,7,5,2,747,347,225,88\n\
         Medium,15,7,5,2,756,356,260,120\n\
         Detailed,15,7,5,2,749,349,253,106\n"
    );
    // reporting twice changes nothing
    assert_eq!(table1_of(&log), table);
}

#[test]
fn headers_match_the_schema() {
    let mut t1 = Vec::new();
    write_table1(&[], &mut t1).unwrap();
    assert_eq!(
        String::from_utf8(t1).unwrap(),
        format!("{}\n", TABLE1_HEADER.join(","))
    );
    let mut t2 = Vec::new();
    write_table2(&[], &mut t2).unwrap();
    assert_eq!(
        String::from_utf8(t2).unwrap(),
        "EditCategory,Patches,Compiled,Passed,ImprovFound,BestImprov,Median\n"
    );
    assert_eq!(TABLE2_HEADER.len(), 7);
}

fn sample_records(ev: &Evaluator, patches: &[Patch]) -> Vec<EvalRecord> {
    patches
        .iter()
        .enumerate()
        .map(|(i, p)| EvalRecord {
            search: SearchKind::Sample,
            run_id: 0,
            family: OperatorFamily::Statement,
            method: "sort".into(),
            eval_index: i + 1,
            result: ev.evaluate(p).unwrap(),
            baseline: None,
            base_digest: ev.unit.digest(),
        })
        .collect()
}

#[test]
fn duplicates_and_no_ops_stay_out_of_the_unique_columns() {
    let b = Benchmark::get("bench_sort").unwrap();
    let ev = Evaluator::builtin(b.unit(), b.test_cases(), DEFAULT_STEP_BUDGET);
    let s = |p: &[usize]| StatementId::new("sort", p.to_vec());
    let one = |e: Edit| Patch::single("bench_sort", e, 0);
    let scratch = s(&[1, 0, 0, 0, 0]);
    let patches = [
        one(Edit::Delete {
            target: scratch.clone(),
        }),
        one(Edit::Delete {
            target: scratch.clone(),
        }),
        one(Edit::Swap {
            first: scratch.clone(),
            second: scratch.clone(),
        }),
        one(Edit::Replace {
            source: scratch.clone(),
            target: scratch.clone(),
        }),
        one(Edit::Delete { target: s(&[9]) }),
        one(Edit::Delete { target: s(&[9]) }),
        one(Edit::Delete { target: s(&[0]) }),
    ];
    let mut log = Vec::new();
    write_log(&sample_records(&ev, &patches), &mut log).unwrap();
    let r = &aggregate(&read_log(log.as_slice()).unwrap()).unwrap()[0];
    // the two no-ops are gone entirely
    assert_eq!((r.all.patches, r.all.valid, r.all.passed), (5, 3, 2));
    // one per distinct program, one for the repeated invalid edit
    assert_eq!(
        (r.unique.patches, r.unique.valid, r.unique.passed),
        (3, 2, 1)
    );
}

#[test]
fn malformed_rows_name_their_line() {
    let log = std::fs::read_to_string(shipped("sample_log.csv")).unwrap();
    let mut lines: Vec<&str> = log.lines().take(6).collect();
    lines[4] = "sample,0,Statement,sort,4,garbage,Passed,0,1,,00";
    let err = read_log(lines.join("\n").as_bytes()).unwrap_err();
    assert!(err.to_string().starts_with("log line 5:"), "{err}");
}
