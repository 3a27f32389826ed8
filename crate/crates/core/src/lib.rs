//! Genetic improvement over MiniLang programs: classic statement edits and
//! LLM block rewrites, the valid/compiled/passed evaluation ladder, random
//! sampling and local search, and the run-log reports.

pub mod bench;
pub mod evaluator;
pub mod family;
pub mod llm;
pub mod operators;
pub mod patch;
pub mod process;
pub mod profiler;
pub mod report;
pub mod search;

pub use bench::{Benchmark, BENCHMARKS};
pub use evaluator::{
    Classification, EvaluationResult, Evaluator, ExternalAdapter, InfrastructureError,
    TargetAdapter,
};
pub use family::{OperatorFamily, PromptCategory};
pub use operators::{
    derive_seed, insertion_points, rng_from_seed, sample_classic_edit, sample_insert_edit,
    sample_statement_edit, GiRng, OperatorError,
};
pub use patch::{
    apply_edit, apply_patch, classify_uniqueness, fingerprint, partition_fingerprints,
    patched_text, ApplyError, Edit, EditKind, InsertionPoint, Patch, PatchLine,
    UniquenessPartition,
};
pub use profiler::{profile, profile_with, HotMethodProfile, ProfileError, ProfileSource};
pub use report::{aggregate, read_log, write_log, write_table1, write_table2, RunReport};
pub use search::{
    draw_classic_patches, EvalRecord, LlmSetup, LocalSearchConfig, RandomSamplingConfig,
    SearchContext, SearchError, SearchKind,
};
