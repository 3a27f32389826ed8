use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gi_core::llm::{LlmClient, LlmClientConfig, LlmMode, PromptTemplate, ScriptedMock, Transport};
use gi_core::profiler::{CommandProfiler, DEFAULT_REPEATS, DEFAULT_TOP_K};
use gi_core::search::{SearchErrorKind, DEFAULT_BUDGET, DEFAULT_EVALS};
use gi_core::{
    aggregate, profile_with, read_log, write_log, write_table1, write_table2, Benchmark,
    EvalRecord, Evaluator, ExternalAdapter, HotMethodProfile, LlmSetup, LocalSearchConfig,
    OperatorFamily, Patch, ProfileError, PromptCategory, RandomSamplingConfig, SearchContext,
    SearchError, TargetAdapter,
};
use minilang::{parse_source, parse_tests, SourceUnit, TestCase, DEFAULT_STEP_BUDGET};

/// Genetic improvement with classic and LLM-generated edits.
#[derive(Parser)]
#[command(name = "gi", version)]
struct Cli {
    #[command(flatten)]
    opts: Options,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Options {
    /// Base random seed (drawn and printed when absent).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// key=value file supplying defaults for any of these flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Shipped benchmark to improve (default bench_sort).
    #[arg(long, global = true)]
    bench: Option<String>,
    /// MiniLang program to improve instead of a benchmark.
    #[arg(long, global = true)]
    program: Option<PathBuf>,
    /// Test file (default: the program path with a .tests extension).
    #[arg(long, global = true)]
    tests: Option<PathBuf>,
    /// `builtin` or a JSON external-adapter description.
    #[arg(long, global = true)]
    adapter: Option<String>,
    /// live, replay or mock.
    #[arg(long, global = true)]
    llm_mode: Option<String>,
    /// Prompt category for the `llm` family: simple, medium or detailed.
    #[arg(long, global = true)]
    prompt: Option<String>,
    /// Comma-separated families: statement, insert, llm, simple, medium, detailed.
    #[arg(long, global = true)]
    family: Option<String>,
    /// Patches per family for random sampling.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Evaluations per local-search run.
    #[arg(long, global = true)]
    evals: Option<usize>,
    #[arg(long, global = true)]
    top_k: Option<usize>,
    /// Profiling repeats.
    #[arg(long, global = true)]
    repeats: Option<usize>,
    /// Interpreter steps per test before it counts as timed out.
    #[arg(long, global = true)]
    step_budget: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Transcript directory (default <out-dir>/transcripts).
    #[arg(long, global = true)]
    transcripts: Option<PathBuf>,
    /// JSON array of canned responses served in order in mock mode.
    #[arg(long, global = true)]
    mock_responses: Option<PathBuf>,
    /// Project name used in prompts (default: the program name).
    #[arg(long, global = true)]
    project: Option<String>,
    /// Directory of prompt template overrides.
    #[arg(long, global = true)]
    prompt_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    /// Parallel evaluation workers (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Profile the program and print its hot functions.
    Profile,
    /// Random sampling: single-edit patches per family.
    Sample,
    /// Local search over the hot functions.
    Ls,
    /// Aggregate run logs into a summary table.
    Report {
        table: Table,
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Re-evaluate every patch in a run log and check the recorded outcomes.
    Replay { log: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    Table1,
    Table2,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Infrastructure(String),
    Mismatch(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Mismatch(_) => 1,
            CliError::Config(_) => 2,
            CliError::Infrastructure(_) => 3,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn infra_err(e: impl std::fmt::Display) -> CliError {
    CliError::Infrastructure(e.to_string())
}

/// Flag values after merging the config file under the command line.
struct Settings {
    opts: Options,
    file: HashMap<String, String>,
}

impl Settings {
    fn load(opts: Options) -> Result<Self, CliError> {
        let mut file = HashMap::new();
        if let Some(path) = &opts.config {
            let text = fs::read_to_string(path)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    config_err(format!("{}:{}: expected key=value", path.display(), i + 1))
                })?;
                file.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Settings { opts, file })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.file
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| config_err(format!("config `{key}`: {e}")))
            })
            .transpose()
    }

    fn seed(&self) -> Result<u64, CliError> {
        Ok(match self.get(self.opts.seed, "seed")? {
            Some(s) => s,
            None => {
                let s: u64 = rand::random();
                eprintln!("seed: {s}");
                s
            }
        })
    }

    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self
            .get(self.opts.out_dir.clone(), "out-dir")?
            .unwrap_or_else(|| PathBuf::from("gi-out"));
        fs::create_dir_all(&dir).map_err(|e| infra_err(format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }

    fn program(&self) -> Result<(SourceUnit, Vec<TestCase>), CliError> {
        if let Some(path) = self.get(self.opts.program.clone(), "program")? {
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "program".into());
            let text = read(&path)?;
            let unit = parse_source(&name, &text)
                .map_err(|e| config_err(format!("{}:{e}", path.display())))?;
            let tests_path = self
                .get(self.opts.tests.clone(), "tests")?
                .unwrap_or_else(|| path.with_extension("tests"));
            let tests = parse_tests(&read(&tests_path)?)
                .map_err(|e| config_err(format!("{}: {e}", tests_path.display())))?;
            for t in &tests {
                t.check_against(&unit).map_err(config_err)?;
            }
            return Ok((unit, tests));
        }
        let name = self
            .get(self.opts.bench.clone(), "bench")?
            .unwrap_or_else(|| "bench_sort".into());
        let b = Benchmark::get(&name)
            .ok_or_else(|| config_err(format!("unknown benchmark `{name}`")))?;
        Ok((b.unit(), b.test_cases()))
    }

    fn evaluator(&self) -> Result<Evaluator, CliError> {
        let (unit, tests) = self.program()?;
        let adapter = match self.get(self.opts.adapter.clone(), "adapter")?.as_deref() {
            None | Some("builtin") => TargetAdapter::Builtin,
            Some(path) => {
                let ext: ExternalAdapter = serde_json::from_str(&read(Path::new(path))?)
                    .map_err(|e| config_err(format!("{path}: {e}")))?;
                TargetAdapter::External(ext)
            }
        };
        Ok(Evaluator {
            unit,
            tests,
            adapter,
            step_budget: self
                .get(self.opts.step_budget, "step-budget")?
                .unwrap_or(DEFAULT_STEP_BUDGET),
            workers: self.get(self.opts.workers, "workers")?.unwrap_or(0),
        })
    }

    fn prompt(&self) -> Result<PromptCategory, CliError> {
        Ok(self
            .get(self.opts.prompt.clone(), "prompt")?
            .map(|p| p.parse().map_err(config_err))
            .transpose()?
            .unwrap_or(PromptCategory::Medium))
    }

    fn families(&self, default: &[OperatorFamily]) -> Result<Vec<OperatorFamily>, CliError> {
        // validated even when no `llm` family asks for it
        let prompt = self.prompt()?;
        let Some(list) = self.get(self.opts.family.clone(), "family")? else {
            return Ok(default.to_vec());
        };
        list.split(',')
            .map(|f| match f.trim() {
                "llm" => Ok(OperatorFamily::Llm(prompt)),
                other => other.parse().map_err(config_err),
            })
            .collect()
    }

    fn llm_client(&self, out_dir: &Path) -> Result<LlmClient, CliError> {
        let mode: LlmMode = self
            .get(self.opts.llm_mode.clone(), "llm-mode")?
            .map(|m| m.parse().map_err(config_err))
            .transpose()?
            .unwrap_or(LlmMode::Mock);
        let mut config = LlmClientConfig {
            mode,
            transcript_dir: Some(
                self.get(self.opts.transcripts.clone(), "transcripts")?
                    .unwrap_or_else(|| out_dir.join("transcripts")),
            ),
            ..Default::default()
        };
        if let Some(m) = self.get(self.opts.model.clone(), "model")? {
            config.model = m;
        }
        if let Some(e) = self.get(self.opts.endpoint.clone(), "endpoint")? {
            config.endpoint = e;
        }
        if let Some(t) = self.get(self.opts.temperature, "temperature")? {
            config.temperature = t;
        }
        if let Some(v) = self.file.get("api-key-env-var") {
            config.api_key_env_var = v.clone();
        }
        if let Some(v) = self.get::<u64>(None, "request-timeout-secs")? {
            config.request_timeout = Duration::from_secs(v);
        }
        if let Some(v) = self.get::<u32>(None, "max-retries")? {
            config.max_retries = v;
        }
        let scripted = self.get(self.opts.mock_responses.clone(), "mock-responses")?;
        let result = match (mode, scripted) {
            (LlmMode::Mock, Some(path)) => {
                let responses: Vec<String> = serde_json::from_str(&read(&path)?)
                    .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                let t: Box<dyn Transport> = Box::new(ScriptedMock::new(responses));
                LlmClient::with_transport(config, Some(t))
            }
            _ => LlmClient::from_config(config),
        };
        result.map_err(config_err)
    }

    fn llm_setup<'c>(
        &self,
        client: &'c LlmClient,
        unit: &SourceUnit,
    ) -> Result<LlmSetup<'c>, CliError> {
        let project = self
            .get(self.opts.project.clone(), "project")?
            .unwrap_or_else(|| unit.name().to_string());
        let mut setup = LlmSetup::new(client, &project);
        if let Some(dir) = self.get(self.opts.prompt_dir.clone(), "prompt-dir")? {
            setup.templates = setup
                .templates
                .into_iter()
                .map(|t: PromptTemplate| t.load_overrides(&dir))
                .collect::<Result<_, _>>()
                .map_err(|e| config_err(format!("{}: {e}", dir.display())))?;
        }
        Ok(setup)
    }

    fn profile(&self, ev: &Evaluator) -> Result<HotMethodProfile, CliError> {
        let repeats = self
            .get(self.opts.repeats, "repeats")?
            .unwrap_or(DEFAULT_REPEATS);
        let top_k = self.get(self.opts.top_k, "top-k")?.unwrap_or(DEFAULT_TOP_K);
        let result = match &ev.adapter {
            TargetAdapter::External(ExternalAdapter {
                profile_cmd: Some(cmd),
                timeout_ms,
                ..
            }) => {
                let dir = tempfile::tempdir().map_err(infra_err)?;
                let src = dir.path().join(format!("{}.ml", ev.unit.name()));
                fs::write(&src, minilang::print_canonical(&ev.unit)).map_err(infra_err)?;
                profile_with(
                    &mut CommandProfiler {
                        command: cmd.clone(),
                        source: src,
                        workdir: dir.path().to_path_buf(),
                        timeout: Some(Duration::from_millis(*timeout_ms)),
                    },
                    repeats,
                    top_k,
                )
            }
            _ => gi_core::profile(&ev.unit, &ev.tests, repeats, top_k, ev.step_budget),
        };
        result.map_err(|e| match e {
            ProfileError::ProfileOnFailingProgram { .. } => config_err(e),
            other => infra_err(other),
        })
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| infra_err(format!("{}: {e}", path.display())))
}

fn save_log(records: &[EvalRecord], path: &Path) -> Result<(), CliError> {
    write_log(records, create(path)?).map_err(infra_err)
}

/// Flushes whatever completed before a search failed, then reports it.
fn search_failed(e: SearchError, log: &Path) -> CliError {
    if let Err(flush) = save_log(&e.partial, log) {
        eprintln!("could not write partial log: {flush:?}");
    } else {
        eprintln!(
            "wrote {} completed evaluations to {}",
            e.partial.len(),
            log.display()
        );
    }
    match e.kind {
        SearchErrorKind::Operator(op) => config_err(op),
        SearchErrorKind::NoLlmClient(_) => config_err(e.kind),
        other => infra_err(other),
    }
}

fn write_table(which: Table, records: &[EvalRecord], path: &Path) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write_log(records, &mut buf).map_err(infra_err)?;
    let rows = read_log(buf.as_slice()).map_err(infra_err)?;
    let reports = aggregate(&rows).map_err(infra_err)?;
    let mut out = Vec::new();
    match which {
        Table::Table1 => write_table1(&reports, &mut out),
        Table::Table2 => write_table2(&reports, &mut out),
    }
    .map_err(infra_err)?;
    fs::write(path, &out).map_err(infra_err)?;
    Ok(String::from_utf8(out).expect("utf-8 csv"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let s = Settings::load(cli.opts)?;
    match cli.command {
        Command::Profile => {
            let ev = s.evaluator()?;
            let p = s.profile(&ev)?;
            let path = s.out_dir()?.join("profile.csv");
            p.write_csv(create(&path)?).map_err(infra_err)?;
            let mut out = io::stdout().lock();
            p.write_csv(&mut out).map_err(infra_err)?;
        }
        Command::Sample => {
            let ev = s.evaluator()?;
            let families = s.families(&OperatorFamily::ALL)?;
            let out_dir = s.out_dir()?;
            let hot = s.profile(&ev)?.hot_set;
            let seed = s.seed()?;
            let client = if families.iter().any(|f| f.is_llm()) {
                Some(s.llm_client(&out_dir)?)
            } else {
                None
            };
            let ctx = SearchContext {
                evaluator: &ev,
                hot,
                llm: client
                    .as_ref()
                    .map(|c| s.llm_setup(c, &ev.unit))
                    .transpose()?,
            };
            let mut cfg = RandomSamplingConfig::new(families, seed);
            cfg.budget = s.get(s.opts.budget, "budget")?.unwrap_or(DEFAULT_BUDGET);
            let log = out_dir.join("sample_log.csv");
            let records = ctx
                .random_sampling(&cfg)
                .map_err(|e| search_failed(e, &log))?;
            save_log(&records, &log)?;
            let table = write_table(Table::Table1, &records, &out_dir.join("table1.csv"))?;
            print!("{table}");
            if let Some(c) = &client {
                eprintln!("llm requests: {}", c.requests_issued());
            }
        }
        Command::Ls => {
            let ev = s.evaluator()?;
            let family = match s.families(&[OperatorFamily::Statement])?.as_slice() {
                [f] => *f,
                _ => return Err(config_err("local search takes exactly one family")),
            };
            let out_dir = s.out_dir()?;
            let top_k = s.get(s.opts.top_k, "top-k")?.unwrap_or(DEFAULT_TOP_K);
            let runs: Vec<String> = s.profile(&ev)?.hot_set.into_iter().take(top_k).collect();
            let seed = s.seed()?;
            let client = if family.is_llm() {
                Some(s.llm_client(&out_dir)?)
            } else {
                None
            };
            let ctx = SearchContext {
                evaluator: &ev,
                hot: runs.clone(),
                llm: client
                    .as_ref()
                    .map(|c| s.llm_setup(c, &ev.unit))
                    .transpose()?,
            };
            let mut cfg = LocalSearchConfig::new(family, runs, seed);
            cfg.evals_per_run = s.get(s.opts.evals, "evals")?.unwrap_or(DEFAULT_EVALS);
            let log = out_dir.join("ls_log.csv");
            let records = ctx.local_search(&cfg).map_err(|e| search_failed(e, &log))?;
            save_log(&records, &log)?;
            let table = write_table(Table::Table2, &records, &out_dir.join("table2.csv"))?;
            print!("{table}");
        }
        Command::Report { table, logs } => {
            let mut rows = Vec::new();
            for path in &logs {
                let f =
                    File::open(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                rows.extend(
                    read_log(f).map_err(|e| config_err(format!("{}: {e}", path.display())))?,
                );
            }
            let reports = aggregate(&rows).map_err(config_err)?;
            let out = io::stdout().lock();
            match table {
                Table::Table1 => write_table1(&reports, out),
                Table::Table2 => write_table2(&reports, out),
            }
            .map_err(infra_err)?;
        }
        Command::Replay { log } => replay(&s, &log)?,
    }
    Ok(())
}

fn replay(s: &Settings, log: &Path) -> Result<(), CliError> {
    let ev = s.evaluator()?;
    let f = File::open(log).map_err(|e| config_err(format!("{}: {e}", log.display())))?;
    let rows = read_log(f).map_err(config_err)?;
    let digest = ev.unit.digest();
    let patches: Vec<Patch> = rows
        .iter()
        .map(|(line, r)| {
            if r.base_digest != digest {
                return Err(config_err(format!(
                    "log line {line} was recorded against a different program"
                )));
            }
            Ok(r.patch.clone().into_patch(ev.unit.name()))
        })
        .collect::<Result<_, _>>()?;
    let results = ev.evaluate_all(&patches);
    let compare_runtime = matches!(ev.adapter, TargetAdapter::Builtin);
    let mut mismatches = 0;
    let mut stderr = io::stderr().lock();
    for ((line, row), result) in rows.iter().zip(results) {
        let r = result.map_err(infra_err)?;
        let same = r.classification == row.classification
            && r.fingerprint == row.patch.fingerprint
            && r.tests_failed == row.tests_failed
            && (!compare_runtime || r.runtime() == row.runtime);
        if !same {
            mismatches += 1;
            let _ = writeln!(
                stderr,
                "line {line}: logged {} ({:?}), replayed {} ({:?})",
                row.classification,
                row.runtime,
                r.classification,
                r.runtime()
            );
        }
    }
    println!(
        "replayed {} evaluations, {mismatches} mismatches",
        rows.len()
    );
    if mismatches > 0 {
        return Err(CliError::Mismatch(format!(
            "{mismatches} evaluations differ from the log"
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = match &e {
                CliError::Config(m) | CliError::Infrastructure(m) | CliError::Mismatch(m) => m,
            };
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code())
        }
    }
}
