//! Run logs and the two summary tables.
//!
//! A run log is CSV (header row, LF endings) with one row per evaluation:
//!
//! ```text
//! search,run_id,family,method,eval_index,patch,classification,tests_failed,runtime,baseline,base_digest
//! ```
//!
//! `patch` is the `seed | edits | fingerprint` line, `runtime` is present for
//! passing patches only and `baseline` for local-search rows only.
//!
//! Table 1 counts patches per family, all and unique, leaving out patches
//! whose program prints identically to the original. Two valid patches are
//! the same when their patched programs are; invalid patches have no program
//! and are compared by their edit text. Table 2 summarises local search,
//! leaving out empty patches: an improvement is a passing patch faster than
//! the run's baseline, and best and median are over improvements only.

use std::collections::HashSet;
use std::io;

use minilang::Digest;
use serde::{Deserialize, Serialize};

use crate::evaluator::Classification;
use crate::family::OperatorFamily;
use crate::patch::PatchLine;
use crate::search::{EvalRecord, SearchKind};

pub const TABLE1_HEADER: [&str; 9] = [
    "EditCategory",
    "UniquePatches",
    "UniqueValid",
    "UniqueCompiled",
    "UniquePassed",
    "Patches",
    "Valid",
    "Compiled",
    "Passed",
];

pub const TABLE2_HEADER: [&str; 7] = [
    "EditCategory",
    "Patches",
    "Compiled",
    "Passed",
    "ImprovFound",
    "BestImprov",
    "Median",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRow {
    pub search: String,
    pub run_id: usize,
    pub family: String,
    pub method: String,
    pub eval_index: usize,
    pub patch: String,
    pub classification: String,
    pub tests_failed: usize,
    pub runtime: Option<u64>,
    pub baseline: Option<u64>,
    pub base_digest: String,
}

impl From<&EvalRecord> for LogRow {
    fn from(r: &EvalRecord) -> Self {
        LogRow {
            search: r.search.to_string(),
            run_id: r.run_id,
            family: r.family.label().to_string(),
            method: r.method.clone(),
            eval_index: r.eval_index,
            patch: r.result.patch.to_log_line(r.result.fingerprint),
            classification: r.result.classification.to_string(),
            tests_failed: r.result.tests_failed,
            runtime: r.result.runtime(),
            baseline: r.baseline,
            base_digest: r.base_digest.to_hex(),
        }
    }
}

/// A log row with every field parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedRow {
    pub search: SearchKind,
    pub run_id: usize,
    pub family: OperatorFamily,
    pub method: String,
    pub eval_index: usize,
    pub patch: PatchLine,
    pub classification: Classification,
    pub tests_failed: usize,
    pub runtime: Option<u64>,
    pub baseline: Option<u64>,
    pub base_digest: Digest,
}

impl TryFrom<LogRow> for ParsedRow {
    type Error = String;

    fn try_from(r: LogRow) -> Result<Self, Self::Error> {
        let row = ParsedRow {
            search: r.search.parse()?,
            run_id: r.run_id,
            family: r.family.parse()?,
            method: r.method,
            eval_index: r.eval_index,
            patch: r.patch.parse()?,
            classification: r.classification.parse()?,
            tests_failed: r.tests_failed,
            runtime: r.runtime,
            baseline: r.baseline,
            base_digest: r.base_digest.parse().map_err(|e| format!("{e}"))?,
        };
        if row.classification.passed() != row.runtime.is_some() {
            return Err("runtime must be present exactly for passing patches".into());
        }
        if row.classification.valid() != row.patch.fingerprint.is_some() {
            return Err("fingerprint must be present exactly for valid patches".into());
        }
        Ok(row)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("log line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("log line {line}: local-search rows need a baseline")]
    MissingBaseline { line: u64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn csv_writer<W: io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_log<W: io::Write>(records: &[EvalRecord], w: W) -> Result<(), ReportError> {
    let mut out = csv_writer(w);
    for r in records {
        out.serialize(LogRow::from(r))?;
    }
    if records.is_empty() {
        out.write_record([
            "search",
            "run_id",
            "family",
            "method",
            "eval_index",
            "patch",
            "classification",
            "tests_failed",
            "runtime",
            "baseline",
            "base_digest",
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Parsed rows with their line numbers in the file.
pub fn read_log<R: io::Read>(r: R) -> Result<Vec<(u64, ParsedRow)>, ReportError> {
    let mut reader = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| ReportError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let malformed = |message: String| ReportError::MalformedRow { line, message };
        let row: LogRow = rec
            .deserialize(None)
            .map_err(|e| malformed(e.to_string()))?;
        rows.push((line, ParsedRow::try_from(row).map_err(malformed)?));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub patches: usize,
    pub valid: usize,
    pub compiled: usize,
    pub passed: usize,
}

impl Counts {
    fn add(&mut self, c: Classification) {
        self.patches += 1;
        self.valid += usize::from(c.valid());
        self.compiled += usize::from(c.compiled());
        self.passed += usize::from(c.passed());
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Improvements {
    pub found: usize,
    pub best: Option<u64>,
    pub median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub family: OperatorFamily,
    /// Table 1, all non-equivalent patches.
    pub all: Counts,
    /// Table 1, first occurrence of each distinct patch.
    pub unique: Counts,
    /// Table 2, non-empty local-search patches.
    pub local: Counts,
    pub improvements: Improvements,
}

impl RunReport {
    fn empty(family: OperatorFamily) -> Self {
        RunReport {
            family,
            all: Counts::default(),
            unique: Counts::default(),
            local: Counts::default(),
            improvements: Improvements::default(),
        }
    }
}

pub fn median_f64(sorted: &[u64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2] as f64),
        _ => Some((sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0),
    }
}

/// One report per family, in table order, covering every family.
pub fn aggregate(rows: &[(u64, ParsedRow)]) -> Result<Vec<RunReport>, ReportError> {
    let mut reports: Vec<RunReport> = OperatorFamily::ALL
        .iter()
        .map(|&f| RunReport::empty(f))
        .collect();
    let mut gains: Vec<Vec<u64>> = vec![Vec::new(); reports.len()];
    let mut seen: HashSet<(OperatorFamily, String)> = HashSet::new();
    for (line, row) in rows {
        let slot = row.family.tag() as usize;
        let report = &mut reports[slot];
        if row.search == SearchKind::Local {
            if row.patch.edits.is_empty() {
                continue;
            }
            let baseline = row
                .baseline
                .ok_or(ReportError::MissingBaseline { line: *line })?;
            report.local.add(row.classification);
            if let Some(rt) = row.runtime.filter(|rt| *rt < baseline) {
                gains[slot].push(baseline - rt);
            }
            continue;
        }
        if row.patch.fingerprint == Some(row.base_digest) {
            continue;
        }
        report.all.add(row.classification);
        let key = match row.patch.fingerprint {
            Some(d) => d.to_hex(),
            None => row
                .patch
                .edits
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(" ; "),
        };
        if seen.insert((row.family, key)) {
            report.unique.add(row.classification);
        }
    }
    for (report, mut g) in reports.iter_mut().zip(gains) {
        g.sort_unstable();
        report.improvements = Improvements {
            found: g.len(),
            best: g.last().copied(),
            median: median_f64(&g),
        };
    }
    Ok(reports)
}

pub fn write_table1<W: io::Write>(reports: &[RunReport], w: W) -> Result<(), ReportError> {
    let mut out = csv_writer(w);
    out.write_record(TABLE1_HEADER)?;
    for r in reports {
        let (u, a) = (r.unique, r.all);
        out.write_record(
            std::iter::once(r.family.label().to_string()).chain(
                [
                    u.patches, u.valid, u.compiled, u.passed, a.patches, a.valid, a.compiled,
                    a.passed,
                ]
                .map(|n| n.to_string()),
            ),
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_table2<W: io::Write>(reports: &[RunReport], w: W) -> Result<(), ReportError> {
    let mut out = csv_writer(w);
    out.write_record(TABLE2_HEADER)?;
    for r in reports {
        let l = r.local;
        let imp = &r.improvements;
        out.write_record([
            r.family.label().to_string(),
            l.patches.to_string(),
            l.compiled.to_string(),
            l.passed.to_string(),
            imp.found.to_string(),
            imp.best.map(|b| b.to_string()).unwrap_or_default(),
            imp.median.map(|m| m.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
