//! Patch evaluation: apply, compile, test, time.
//!
//! The built-in backend applies the patch to the AST, runs semantic
//! validation as the compile step and interprets the test suite, measuring
//! runtime in interpreter steps. The external backend writes the patched
//! program into a private temporary directory and drives shell commands:
//!
//! | command         | placeholders                         | contract                      |
//! |-----------------|--------------------------------------|-------------------------------|
//! | `patchApplyCmd` | `{SRC}` `{PATCHED_FILE}` `{WORKDIR}` | optional; nonzero = not valid |
//! | `compileCmd`    | same                                 | nonzero = did not compile     |
//! | `testCmd`       | same plus `{TEST}`                   | nonzero or killed = failed    |
//! | `measureCmd`    | same                                 | prints runtime in ms          |
//!
//! `{SRC}` is the unpatched program and `{PATCHED_FILE}` the canonical
//! printing of the patched one, both inside `{WORKDIR}`. When `testCmd`
//! mentions `{TEST}` it runs once per test case; otherwise once for the whole
//! suite. Each test process is killed (with its process group) after
//! `timeoutMs`. `measureCmd` runs `measureRepeats` times and the median is
//! kept; without it the runtime is the wall-clock total of the test runs.
//! A command that cannot be started, or a measurement that does not parse,
//! is an infrastructure error rather than a patch failure.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use minilang::{print_canonical, run_suite, validate, Digest, SourceUnit, TestCase, TestStatus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::patch::{apply_patch, Patch};
use crate::process::{expand, run_shell, CommandOutcome};

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;
pub const DEFAULT_MEASURE_REPEATS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Classification {
    Invalid,
    ValidOnly,
    CompiledOnly,
    Passed,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Invalid => "Invalid",
            Classification::ValidOnly => "ValidOnly",
            Classification::CompiledOnly => "CompiledOnly",
            Classification::Passed => "Passed",
        }
    }

    pub fn valid(self) -> bool {
        self >= Classification::ValidOnly
    }

    pub fn compiled(self) -> bool {
        self >= Classification::CompiledOnly
    }

    pub fn passed(self) -> bool {
        self == Classification::Passed
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Classification {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Invalid" => Ok(Classification::Invalid),
            "ValidOnly" => Ok(Classification::ValidOnly),
            "CompiledOnly" => Ok(Classification::CompiledOnly),
            "Passed" => Ok(Classification::Passed),
            _ => Err(format!("unknown classification `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluationResult {
    pub patch: Patch,
    pub classification: Classification,
    pub tests_failed: usize,
    /// Digest of the patched program; `None` when the patch did not apply.
    pub fingerprint: Option<Digest>,
    /// Total interpreter steps over the suite (built-in backend, passed only).
    pub runtime_steps: Option<u64>,
    /// Measured runtime (external backend, passed only).
    pub wall_clock_ms: Option<u64>,
}

impl EvaluationResult {
    fn new(patch: &Patch, classification: Classification, fingerprint: Option<Digest>) -> Self {
        EvaluationResult {
            patch: patch.clone(),
            classification,
            tests_failed: 0,
            fingerprint,
            runtime_steps: None,
            wall_clock_ms: None,
        }
    }

    pub fn valid(&self) -> bool {
        self.classification.valid()
    }

    pub fn compiled(&self) -> bool {
        self.classification.compiled()
    }

    pub fn passed(&self) -> bool {
        self.classification.passed()
    }

    /// Runtime in the backend's unit (steps or ms).
    pub fn runtime(&self) -> Option<u64> {
        self.runtime_steps.or(self.wall_clock_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExternalAdapter {
    #[serde(default)]
    pub patch_apply_cmd: Option<String>,
    pub compile_cmd: String,
    pub test_cmd: String,
    #[serde(default)]
    pub measure_cmd: Option<String>,
    /// Optional external profiler, printing `function cost` lines.
    #[serde(default)]
    pub profile_cmd: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_repeats")]
    pub measure_repeats: usize,
    /// File name the programs are written under; defaults to the unit name
    /// with `.ml`.
    #[serde(default)]
    pub file_name: Option<String>,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}

fn default_repeats() -> usize {
    DEFAULT_MEASURE_REPEATS
}

impl ExternalAdapter {
    pub fn new(compile_cmd: impl Into<String>, test_cmd: impl Into<String>) -> Self {
        ExternalAdapter {
            patch_apply_cmd: None,
            compile_cmd: compile_cmd.into(),
            test_cmd: test_cmd.into(),
            measure_cmd: None,
            profile_cmd: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            measure_repeats: DEFAULT_MEASURE_REPEATS,
            file_name: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TargetAdapter {
    #[default]
    Builtin,
    External(ExternalAdapter),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("infrastructure error: {0}")]
pub struct InfrastructureError(pub String);

impl From<std::io::Error> for InfrastructureError {
    fn from(e: std::io::Error) -> Self {
        InfrastructureError(e.to_string())
    }
}

pub struct Evaluator {
    pub unit: SourceUnit,
    pub tests: Vec<TestCase>,
    pub adapter: TargetAdapter,
    pub step_budget: u64,
    /// Worker threads for batch evaluation; 0 uses one per core.
    pub workers: usize,
}

impl Evaluator {
    pub fn builtin(unit: SourceUnit, tests: Vec<TestCase>, step_budget: u64) -> Self {
        Evaluator {
            unit,
            tests,
            adapter: TargetAdapter::Builtin,
            step_budget,
            workers: 0,
        }
    }

    pub fn evaluate(&self, patch: &Patch) -> Result<EvaluationResult, InfrastructureError> {
        let patched = match apply_patch(&self.unit, patch) {
            Ok(u) => u,
            Err(_) => return Ok(EvaluationResult::new(patch, Classification::Invalid, None)),
        };
        let fp = Some(patched.digest());
        match &self.adapter {
            TargetAdapter::Builtin => Ok(self.evaluate_builtin(patch, &patched, fp)),
            TargetAdapter::External(ext) => self.evaluate_external(ext, patch, &patched, fp),
        }
    }

    /// Evaluates a batch in parallel; results keep the input order.
    pub fn evaluate_all(
        &self,
        patches: &[Patch],
    ) -> Vec<Result<EvaluationResult, InfrastructureError>> {
        let run = || patches.par_iter().map(|p| self.evaluate(p)).collect();
        if self.workers == 0 {
            run()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.workers)
                .build()
                .expect("thread pool")
                .install(run)
        }
    }

    fn evaluate_builtin(
        &self,
        patch: &Patch,
        patched: &SourceUnit,
        fp: Option<Digest>,
    ) -> EvaluationResult {
        if validate(patched).is_err() {
            return EvaluationResult::new(patch, Classification::ValidOnly, fp);
        }
        let outcomes = run_suite(patched, &self.tests, self.step_budget);
        let failed = outcomes
            .iter()
            .filter(|o| o.status != TestStatus::Pass)
            .count();
        let mut r = EvaluationResult::new(patch, Classification::CompiledOnly, fp);
        r.tests_failed = failed;
        if failed == 0 {
            r.classification = Classification::Passed;
            r.runtime_steps = Some(outcomes.iter().map(|o| o.steps_used).sum());
        }
        r
    }

    fn evaluate_external(
        &self,
        ext: &ExternalAdapter,
        patch: &Patch,
        patched: &SourceUnit,
        fp: Option<Digest>,
    ) -> Result<EvaluationResult, InfrastructureError> {
        let work = WorkingCopy::create(ext, &self.unit, patched)?;
        if let Some(cmd) = &ext.patch_apply_cmd {
            if !work.run(cmd, &[], None)?.success() {
                return Ok(EvaluationResult::new(patch, Classification::Invalid, None));
            }
        }
        if !work.run(&ext.compile_cmd, &[], None)?.success() {
            return Ok(EvaluationResult::new(patch, Classification::ValidOnly, fp));
        }
        let (failed, elapsed) = self.run_external_tests(ext, &work)?;
        let mut r = EvaluationResult::new(patch, Classification::CompiledOnly, fp);
        r.tests_failed = failed;
        if failed == 0 {
            r.classification = Classification::Passed;
            r.wall_clock_ms = Some(match &ext.measure_cmd {
                Some(cmd) => work.measure(cmd, ext.measure_repeats)?,
                None => elapsed.as_millis() as u64,
            });
        }
        Ok(r)
    }

    fn run_external_tests(
        &self,
        ext: &ExternalAdapter,
        work: &WorkingCopy,
    ) -> Result<(usize, Duration), InfrastructureError> {
        let timeout = Some(Duration::from_millis(ext.timeout_ms));
        let names: Vec<&str> = if ext.test_cmd.contains("{TEST}") {
            self.tests.iter().map(|t| t.name.as_str()).collect()
        } else {
            vec![""]
        };
        let mut failed = 0;
        let mut elapsed = Duration::ZERO;
        for name in names {
            let out = work.run(&ext.test_cmd, &[("TEST", name)], timeout)?;
            if out.timed_out {
                log::debug!("test `{name}` killed after {} ms", ext.timeout_ms);
            }
            elapsed += out.elapsed;
            failed += usize::from(!out.success());
        }
        Ok((failed, elapsed))
    }

    /// Runtime of the unpatched program: exact steps for the built-in
    /// backend, median of `repeats` measurements for the external one.
    pub fn measure_runtime(&self, repeats: usize) -> Result<u64, InfrastructureError> {
        let r = match &self.adapter {
            TargetAdapter::Builtin => self.evaluate(&Patch::empty(self.unit.name(), 0))?,
            TargetAdapter::External(ext) => {
                let mut ext = ext.clone();
                ext.measure_repeats = repeats.max(1);
                let e = Evaluator {
                    unit: self.unit.clone(),
                    tests: self.tests.clone(),
                    adapter: TargetAdapter::External(ext),
                    step_budget: self.step_budget,
                    workers: self.workers,
                };
                e.evaluate(&Patch::empty(self.unit.name(), 0))?
            }
        };
        r.runtime().ok_or_else(|| {
            InfrastructureError(format!(
                "unpatched program does not pass its tests ({})",
                r.classification
            ))
        })
    }
}

struct WorkingCopy {
    dir: tempfile::TempDir,
    src: String,
    patched: String,
}

impl WorkingCopy {
    fn create(
        ext: &ExternalAdapter,
        original: &SourceUnit,
        patched: &SourceUnit,
    ) -> Result<Self, InfrastructureError> {
        let dir = tempfile::tempdir()?;
        let file = ext
            .file_name
            .clone()
            .unwrap_or_else(|| format!("{}.ml", original.name()));
        let orig_dir = dir.path().join("original");
        std::fs::create_dir(&orig_dir)?;
        let src = orig_dir.join(&file);
        let patched_path = dir.path().join(&file);
        std::fs::write(&src, print_canonical(original))?;
        std::fs::write(&patched_path, print_canonical(patched))?;
        Ok(WorkingCopy {
            src: src.to_string_lossy().into_owned(),
            patched: patched_path.to_string_lossy().into_owned(),
            dir,
        })
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn run(
        &self,
        template: &str,
        extra: &[(&str, &str)],
        timeout: Option<Duration>,
    ) -> Result<CommandOutcome, InfrastructureError> {
        let workdir = self.path().to_string_lossy();
        let mut vars = vec![
            ("SRC", self.src.as_str()),
            ("PATCHED_FILE", self.patched.as_str()),
            ("WORKDIR", workdir.as_ref()),
        ];
        vars.extend_from_slice(extra);
        let cmd = expand(template, &vars);
        run_shell(&cmd, self.path(), timeout)
            .map_err(|e| InfrastructureError(format!("cannot run `{cmd}`: {e}")))
    }

    fn measure(&self, cmd: &str, repeats: usize) -> Result<u64, InfrastructureError> {
        let mut samples = Vec::with_capacity(repeats);
        for _ in 0..repeats.max(1) {
            let out = self.run(cmd, &[], None)?;
            if !out.success() {
                return Err(InfrastructureError(format!(
                    "measure command exited with {:?}",
                    out.code
                )));
            }
            let ms = out.stdout.trim().parse::<u64>().map_err(|_| {
                InfrastructureError(format!(
                    "measure output `{}` is not an integer",
                    out.stdout.trim()
                ))
            })?;
            samples.push(ms);
        }
        Ok(median_u64(&mut samples))
    }
}

/// Median; the mean of the two middle values (rounded down) for even counts.
pub fn median_u64(xs: &mut [u64]) -> u64 {
    assert!(!xs.is_empty());
    xs.sort_unstable();
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2
    }
}
