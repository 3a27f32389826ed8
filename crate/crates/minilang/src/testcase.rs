//! Unit-test files: one case per line, `test <name>: <call> == <literal>`.
//! Blank lines and lines starting with `//` are ignored.

use std::fmt;

use crate::ast::{Expr, SourceUnit, Type, UnaryOp};
use crate::parser::parse_expression;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Int(i64),
    Bool(bool),
    Array(Vec<i64>),
}

impl Literal {
    pub fn ty(&self) -> Type {
        match self {
            Literal::Int(_) => Type::Int,
            Literal::Bool(_) => Type::Bool,
            Literal::Array(_) => Type::IntArray,
        }
    }

    fn from_expr(e: &Expr) -> Option<Literal> {
        fn int(e: &Expr) -> Option<i64> {
            match e {
                Expr::Int(v) => Some(*v),
                Expr::Unary {
                    op: UnaryOp::Neg,
                    operand,
                } => match **operand {
                    Expr::Int(v) => Some(-v),
                    _ => None,
                },
                _ => None,
            }
        }
        match e {
            Expr::Bool(b) => Some(Literal::Bool(*b)),
            Expr::ArrayLit(items) => items
                .iter()
                .map(int)
                .collect::<Option<Vec<_>>>()
                .map(Literal::Array),
            other => int(other).map(Literal::Int),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Array(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TestCase {
    pub name: String,
    pub function: String,
    pub args: Vec<Literal>,
    pub expected: Literal,
}

impl TestCase {
    /// Checks that the callee exists with matching parameter and return types.
    pub fn check_against(&self, unit: &SourceUnit) -> Result<(), String> {
        let f = unit
            .function(&self.function)
            .ok_or_else(|| format!("test `{}`: unknown function `{}`", self.name, self.function))?;
        if f.params.len() != self.args.len()
            || f.params.iter().zip(&self.args).any(|(p, a)| p.ty != a.ty())
        {
            return Err(format!(
                "test `{}`: arguments do not match `{}`",
                self.name, f.name
            ));
        }
        if f.return_type != self.expected.ty() {
            return Err(format!(
                "test `{}`: expected {} but `{}` returns {}",
                self.name,
                self.expected.ty(),
                f.name,
                f.return_type
            ));
        }
        Ok(())
    }
}

impl fmt::Display for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "test {}: {}(", self.name, self.function)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ") == {}", self.expected)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("test file line {line}: {message}")]
pub struct TestFileError {
    pub line: usize,
    pub message: String,
}

pub fn parse_tests(text: &str) -> Result<Vec<TestCase>, TestFileError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("//") {
            continue;
        }
        let err = |message: String| TestFileError {
            line: i + 1,
            message,
        };
        out.push(parse_test_line(line).map_err(err)?);
    }
    Ok(out)
}

fn parse_test_line(line: &str) -> Result<TestCase, String> {
    let rest = line
        .strip_prefix("test ")
        .ok_or_else(|| "expected `test <name>: <call> == <literal>`".to_string())?;
    let (name, rest) = rest
        .split_once(':')
        .ok_or_else(|| "missing `:` after test name".to_string())?;
    let name = name.trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(format!("bad test name `{name}`"));
    }
    let (call, expected) = rest
        .rsplit_once("==")
        .ok_or_else(|| "missing `==`".to_string())?;
    let call = parse_expression(call.trim()).map_err(|e| format!("call: {e}"))?;
    let Expr::Call { callee, args } = call else {
        return Err("left side must be a function call".into());
    };
    let args = args
        .iter()
        .map(|a| Literal::from_expr(a).ok_or_else(|| "arguments must be literals".to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let expected = parse_expression(expected.trim()).map_err(|e| format!("expected value: {e}"))?;
    let expected = Literal::from_expr(&expected)
        .ok_or_else(|| "expected value must be a literal".to_string())?;
    Ok(TestCase {
        name: name.to_string(),
        function: callee,
        args,
        expected,
    })
}
