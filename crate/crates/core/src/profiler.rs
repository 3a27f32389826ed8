//! Hot-function identification: profile repeatedly, take each run's top-K by
//! self cost, and union them.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::PathBuf;
use std::time::Duration;

use minilang::{run_suite, SourceUnit, TestCase, TestStatus};

use crate::process::{expand, run_shell};

pub const DEFAULT_REPEATS: usize = 20;
pub const DEFAULT_TOP_K: usize = 10;

/// Self cost per function for one profiling run.
pub type RunCosts = BTreeMap<String, u64>;

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("cannot profile: test `{test}` does not pass on the unpatched program")]
    ProfileOnFailingProgram { test: String },
    #[error("profile command failed: {0}")]
    Command(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub trait ProfileSource {
    fn run_once(&mut self) -> Result<RunCosts, ProfileError>;
}

/// Interpreter step counts, attributed to the executing function.
pub struct BuiltinProfiler<'a> {
    pub unit: &'a SourceUnit,
    pub tests: &'a [TestCase],
    pub step_budget: u64,
}

impl ProfileSource for BuiltinProfiler<'_> {
    fn run_once(&mut self) -> Result<RunCosts, ProfileError> {
        let mut costs = RunCosts::new();
        for (t, out) in self
            .tests
            .iter()
            .zip(run_suite(self.unit, self.tests, self.step_budget))
        {
            if out.status != TestStatus::Pass {
                return Err(ProfileError::ProfileOnFailingProgram {
                    test: t.name.clone(),
                });
            }
            for (f, steps) in out.function_steps {
                *costs.entry(f).or_default() += steps;
            }
        }
        Ok(costs)
    }
}

/// An external profiler: a shell command printing `function cost` lines.
/// `{SRC}` expands to the source path.
pub struct CommandProfiler {
    pub command: String,
    pub source: PathBuf,
    pub workdir: PathBuf,
    pub timeout: Option<Duration>,
}

impl ProfileSource for CommandProfiler {
    fn run_once(&mut self) -> Result<RunCosts, ProfileError> {
        let src = self.source.to_string_lossy();
        let cmd = expand(&self.command, &[("SRC", &src)]);
        let out = run_shell(&cmd, &self.workdir, self.timeout)?;
        if !out.success() {
            return Err(ProfileError::Command(format!(
                "`{cmd}` exited with {:?}: {}",
                out.code,
                out.stderr.trim()
            )));
        }
        parse_profile_output(&out.stdout)
    }
}

pub fn parse_profile_output(text: &str) -> Result<RunCosts, ProfileError> {
    let mut costs = RunCosts::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut parts = line.split_whitespace();
        let (Some(name), Some(cost), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(ProfileError::Command(format!("bad profile line `{line}`")));
        };
        let cost: u64 = cost
            .parse()
            .map_err(|_| ProfileError::Command(format!("bad cost in `{line}`")))?;
        *costs.entry(name.to_string()).or_default() += cost;
    }
    Ok(costs)
}

/// The `k` costliest functions of one run, ties broken by name. Functions
/// with zero cost never qualify.
pub fn top_k(costs: &RunCosts, k: usize) -> Vec<String> {
    let mut ranked: Vec<(&String, &u64)> = costs.iter().filter(|(_, c)| **c > 0).collect();
    ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(k).map(|(n, _)| n.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HotMethodProfile {
    pub per_run: Vec<RunCosts>,
    /// Union of every run's top-K, by total cost descending.
    pub hot_set: Vec<String>,
    pub repeats: usize,
    pub top_k: usize,
}

impl HotMethodProfile {
    pub fn from_runs(per_run: Vec<RunCosts>, top_k_size: usize) -> Self {
        let totals = totals(&per_run);
        let union: BTreeSet<String> = per_run.iter().flat_map(|r| top_k(r, top_k_size)).collect();
        let mut hot_set: Vec<String> = union.into_iter().collect();
        hot_set.sort_by(|a, b| totals[b].cmp(&totals[a]).then_with(|| a.cmp(b)));
        HotMethodProfile {
            repeats: per_run.len(),
            per_run,
            hot_set,
            top_k: top_k_size,
        }
    }

    pub fn total(&self, function: &str) -> u64 {
        self.per_run.iter().filter_map(|r| r.get(function)).sum()
    }

    pub fn appearances(&self, function: &str) -> usize {
        self.per_run
            .iter()
            .filter(|r| top_k(r, self.top_k).iter().any(|f| f == function))
            .count()
    }

    /// `function,totalSteps,appearancesInTopK`, one row per hot function.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        out.write_record(["function", "totalSteps", "appearancesInTopK"])?;
        for f in &self.hot_set {
            out.write_record([
                f.clone(),
                self.total(f).to_string(),
                self.appearances(f).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn totals(per_run: &[RunCosts]) -> BTreeMap<String, u64> {
    let mut totals = BTreeMap::new();
    for r in per_run {
        for (f, c) in r {
            *totals.entry(f.clone()).or_default() += c;
        }
    }
    totals
}

pub fn profile_with(
    source: &mut dyn ProfileSource,
    repeats: usize,
    top_k_size: usize,
) -> Result<HotMethodProfile, ProfileError> {
    let per_run = (0..repeats)
        .map(|_| source.run_once())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HotMethodProfile::from_runs(per_run, top_k_size))
}

pub fn profile(
    unit: &SourceUnit,
    tests: &[TestCase],
    repeats: usize,
    top_k_size: usize,
    step_budget: u64,
) -> Result<HotMethodProfile, ProfileError> {
    profile_with(
        &mut BuiltinProfiler {
            unit,
            tests,
            step_budget,
        },
        repeats,
        top_k_size,
    )
}
