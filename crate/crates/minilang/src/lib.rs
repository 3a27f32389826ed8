//! MiniLang: a small C-like imperative language used as the built-in
//! improvement target. Programs are parsed into an immutable [`SourceUnit`],
//! printed canonically for equivalence checks, validated semantically (the
//! analog of compilation) and run by a step-counting interpreter.

pub mod ast;
mod digest;
pub mod interp;
mod lexer;
pub mod parser;
pub mod printer;
pub mod testcase;
pub mod validate;

pub use ast::{
    BinaryOp, Block, Expr, Function, Param, SourceUnit, StatementId, Stmt, Type, UnaryOp,
};
pub use digest::{BadDigest, Digest};
pub use interp::{run_suite, run_test, ExecutionOutcome, TestStatus, DEFAULT_STEP_BUDGET};
pub use parser::{parse_block, parse_expression, parse_source, ParseError};
pub use printer::{print_block, print_canonical, print_expr, print_stmt};
pub use testcase::{parse_tests, Literal, TestCase, TestFileError};
pub use validate::{validate, SemanticError};
