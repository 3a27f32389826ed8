//! Random sampling and local search drivers.
//!
//! Both drivers return one [`EvalRecord`] per evaluation, in a deterministic
//! order that does not depend on thread scheduling. Classic edits draw from
//! per-draw (sampling) or per-run (local search) seeds derived from the
//! configured seed; LLM requests are always issued sequentially so that the
//! transcript ordinals, and hence replay, are stable.

use std::fmt;
use std::str::FromStr;

use minilang::{Digest, SourceUnit};
use rand::Rng;
use rayon::prelude::*;

use crate::evaluator::{EvaluationResult, Evaluator, InfrastructureError};
use crate::family::{OperatorFamily, PromptCategory};
use crate::llm::{make_llm_edits, LlmClient, LlmError, PromptTemplate};
use crate::operators::{
    derive_seed, pick, rng_from_seed, sample_classic_edit, GiRng, OperatorError,
};
use crate::patch::{apply_patch, Edit, Patch};

pub const DEFAULT_BUDGET: usize = 1000;
pub const DEFAULT_EVALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SearchKind {
    Sample,
    Local,
}

impl SearchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchKind::Sample => "sample",
            SearchKind::Local => "local",
        }
    }
}

impl fmt::Display for SearchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SearchKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sample" => Ok(SearchKind::Sample),
            "local" => Ok(SearchKind::Local),
            _ => Err(format!("unknown search kind `{s}`")),
        }
    }
}

/// One evaluation, as logged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRecord {
    pub search: SearchKind,
    pub run_id: usize,
    pub family: OperatorFamily,
    /// Function the run targets (local search) or the edit touched (sampling).
    pub method: String,
    /// 1-based within the run.
    pub eval_index: usize,
    pub result: EvaluationResult,
    /// Runtime of the unpatched program (local search only).
    pub baseline: Option<u64>,
    pub base_digest: Digest,
}

/// Prompt templates and client for the LLM families.
pub struct LlmSetup<'a> {
    pub client: &'a LlmClient,
    pub templates: Vec<PromptTemplate>,
}

impl<'a> LlmSetup<'a> {
    pub fn new(client: &'a LlmClient, project_name: &str) -> Self {
        LlmSetup {
            client,
            templates: PromptCategory::ALL
                .iter()
                .map(|&c| PromptTemplate::new(c, project_name))
                .collect(),
        }
    }

    pub fn template(&self, category: PromptCategory) -> &PromptTemplate {
        self.templates
            .iter()
            .find(|t| t.category == category)
            .expect("template for every category")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchErrorKind {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Infrastructure(#[from] InfrastructureError),
    #[error("the {0} family needs an LLM client")]
    NoLlmClient(OperatorFamily),
}

/// A failed run, with every evaluation completed before the failure.
#[derive(Debug, thiserror::Error)]
#[error("{kind}")]
pub struct SearchError {
    pub kind: SearchErrorKind,
    pub partial: Vec<EvalRecord>,
}

impl SearchError {
    fn new(kind: impl Into<SearchErrorKind>, partial: Vec<EvalRecord>) -> Self {
        SearchError {
            kind: kind.into(),
            partial,
        }
    }
}

pub struct SearchContext<'a> {
    pub evaluator: &'a Evaluator,
    pub hot: Vec<String>,
    pub llm: Option<LlmSetup<'a>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomSamplingConfig {
    pub budget: usize,
    pub families: Vec<OperatorFamily>,
    pub seed: u64,
}

impl RandomSamplingConfig {
    pub fn new(families: Vec<OperatorFamily>, seed: u64) -> Self {
        RandomSamplingConfig {
            budget: DEFAULT_BUDGET,
            families,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalSearchConfig {
    pub evals_per_run: usize,
    /// Target function of each run.
    pub runs: Vec<String>,
    pub family: OperatorFamily,
    pub seed: u64,
}

impl LocalSearchConfig {
    pub fn new(family: OperatorFamily, runs: Vec<String>, seed: u64) -> Self {
        LocalSearchConfig {
            evals_per_run: DEFAULT_EVALS,
            runs,
            family,
            seed,
        }
    }
}

impl SearchContext<'_> {
    fn unit(&self) -> &SourceUnit {
        &self.evaluator.unit
    }

    fn llm(&self, family: OperatorFamily) -> Result<&LlmSetup<'_>, SearchErrorKind> {
        self.llm
            .as_ref()
            .ok_or(SearchErrorKind::NoLlmClient(family))
    }

    /// Draws `budget` single-edit patches per family and evaluates each.
    pub fn random_sampling(
        &self,
        cfg: &RandomSamplingConfig,
    ) -> Result<Vec<EvalRecord>, SearchError> {
        let mut records = Vec::new();
        for (run_id, &family) in cfg.families.iter().enumerate() {
            let patches = match self.draw_sample(family, cfg) {
                Ok(p) => p,
                Err(e) => return Err(SearchError::new(e, records)),
            };
            let results = self.evaluator.evaluate_all(&patches);
            for (i, r) in results.into_iter().enumerate() {
                let result = match r {
                    Ok(r) => r,
                    Err(e) => return Err(SearchError::new(e, records)),
                };
                records.push(EvalRecord {
                    search: SearchKind::Sample,
                    run_id,
                    family,
                    method: result.patch.edits[0].function().to_string(),
                    eval_index: i + 1,
                    result,
                    baseline: None,
                    base_digest: self.unit().digest(),
                });
            }
        }
        Ok(records)
    }

    fn draw_sample(
        &self,
        family: OperatorFamily,
        cfg: &RandomSamplingConfig,
    ) -> Result<Vec<Patch>, SearchErrorKind> {
        let base = self.unit().name();
        match family {
            OperatorFamily::Llm(category) => {
                let llm = self.llm(family)?;
                let template = llm.template(category);
                let per_request = template.variants.max(1);
                let mut patches = Vec::with_capacity(cfg.budget);
                let mut request = 0;
                while patches.len() < cfg.budget {
                    let seed = derive_seed(cfg.seed, family, request);
                    let edits = make_llm_edits(
                        self.unit(),
                        &self.hot,
                        &mut rng_from_seed(seed),
                        llm.client,
                        template,
                    )?;
                    let take = per_request.min(cfg.budget - patches.len());
                    patches.extend(
                        edits
                            .into_iter()
                            .take(take)
                            .map(|e| Patch::single(base, e, seed)),
                    );
                    request += 1;
                }
                Ok(patches)
            }
            _ => Ok(draw_classic_patches(
                self.unit(),
                &self.hot,
                family,
                cfg.seed,
                cfg.budget,
            )?),
        }
    }

    /// One hill-climbing run per target function. Classic runs proceed in
    /// parallel; LLM runs one after another.
    pub fn local_search(&self, cfg: &LocalSearchConfig) -> Result<Vec<EvalRecord>, SearchError> {
        let run = |(run_id, target): (usize, &String)| {
            let seed = derive_seed(cfg.seed, cfg.family, run_id as u64);
            self.local_search_run(cfg, run_id, target, seed)
        };
        let runs: Vec<Result<Vec<EvalRecord>, SearchError>> = if cfg.family.is_llm() {
            cfg.runs.iter().enumerate().map(run).collect()
        } else {
            cfg.runs.par_iter().enumerate().map(run).collect()
        };
        let mut records = Vec::new();
        for r in runs {
            match r {
                Ok(mut rs) => records.append(&mut rs),
                Err(mut e) => {
                    records.append(&mut e.partial);
                    e.partial = records;
                    return Err(e);
                }
            }
        }
        Ok(records)
    }

    fn local_search_run(
        &self,
        cfg: &LocalSearchConfig,
        run_id: usize,
        target: &str,
        seed: u64,
    ) -> Result<Vec<EvalRecord>, SearchError> {
        let mut records: Vec<EvalRecord> = Vec::with_capacity(cfg.evals_per_run);
        let record = |index: usize, result: EvaluationResult, baseline: u64| EvalRecord {
            search: SearchKind::Local,
            run_id,
            family: cfg.family,
            method: target.to_string(),
            eval_index: index,
            result,
            baseline: Some(baseline),
            base_digest: self.unit().digest(),
        };
        if cfg.evals_per_run == 0 {
            return Ok(records);
        }
        let base = self.unit().name();
        let original = self
            .evaluator
            .evaluate(&Patch::empty(base, seed))
            .map_err(|e| SearchError::new(e, Vec::new()))?;
        let baseline = original.runtime().ok_or_else(|| {
            SearchError::new(
                InfrastructureError("unpatched program does not pass its tests".into()),
                Vec::new(),
            )
        })?;
        records.push(record(1, original, baseline));
        let mut state = SearchState::new(Patch::empty(base, seed), baseline);
        let mut rng = rng_from_seed(seed);
        for index in 2..=cfg.evals_per_run {
            let (neighbour, _) =
                match self.propose_neighbour(&state.current_patch, cfg.family, target, &mut rng) {
                    Ok(n) => n,
                    Err(e) => return Err(SearchError::new(e, records)),
                };
            let result = match self.evaluator.evaluate(&neighbour) {
                Ok(r) => r,
                Err(e) => return Err(SearchError::new(e, records)),
            };
            state.evals_used += 1;
            if let (true, Some(rt)) = (result.passed(), result.runtime()) {
                state.offer(&neighbour, rt);
            }
            records.push(record(index, result, baseline));
        }
        Ok(records)
    }

    /// Appends a freshly drawn edit targeting `target` (always when `current`
    /// is empty, otherwise with probability 1/2) or removes a uniformly
    /// chosen edit.
    pub fn propose_neighbour(
        &self,
        current: &Patch,
        family: OperatorFamily,
        target: &str,
        rng: &mut GiRng,
    ) -> Result<(Patch, Move), SearchErrorKind> {
        let mut next = current.clone();
        if !current.is_empty() && rng.gen_bool(0.5) {
            let i = pick(rng, current.edits.len());
            next.edits.remove(i);
            return Ok((next, Move::Remove(i)));
        }
        // `current` always passes, so it applies.
        let patched = apply_patch(self.unit(), current)
            .map_err(|e| InfrastructureError(format!("current patch stopped applying: {e}")))?;
        let hot = [target.to_string()];
        let edit = match family {
            OperatorFamily::Llm(category) => {
                let llm = self.llm(family)?;
                let mut variants =
                    make_llm_edits(&patched, &hot, rng, llm.client, llm.template(category))?;
                let i = pick(rng, variants.len());
                variants.swap_remove(i)
            }
            _ => sample_classic_edit(family, &patched, &hot, rng)?,
        };
        next.edits.push(edit.clone());
        Ok((next, Move::Append(edit)))
    }
}

/// The single-edit patches random sampling draws for a classic family.
pub fn draw_classic_patches(
    unit: &SourceUnit,
    hot: &[String],
    family: OperatorFamily,
    seed: u64,
    count: usize,
) -> Result<Vec<Patch>, OperatorError> {
    (0..count as u64)
        .map(|i| {
            let seed = derive_seed(seed, family, i);
            let edit = sample_classic_edit(family, unit, hot, &mut rng_from_seed(seed))?;
            Ok(Patch::single(unit.name(), edit, seed))
        })
        .collect()
}

/// What a neighbour did to the current patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Move {
    Append(Edit),
    Remove(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchState {
    pub current_patch: Patch,
    pub current_runtime: u64,
    pub best_patch: Patch,
    pub best_runtime: u64,
    pub evals_used: usize,
}

impl SearchState {
    pub fn new(empty: Patch, baseline: u64) -> Self {
        SearchState {
            current_patch: empty.clone(),
            current_runtime: baseline,
            best_patch: empty,
            best_runtime: baseline,
            evals_used: 1,
        }
    }

    /// Accepts a passing neighbour only on strict improvement.
    pub fn offer(&mut self, patch: &Patch, runtime: u64) -> bool {
        if runtime >= self.current_runtime {
            return false;
        }
        self.current_patch = patch.clone();
        self.current_runtime = runtime;
        if runtime < self.best_runtime {
            self.best_patch = patch.clone();
            self.best_runtime = runtime;
        }
        true
    }
}
