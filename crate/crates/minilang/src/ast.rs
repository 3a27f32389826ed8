//! Syntax tree for MiniLang programs and statement addressing.

use std::fmt;
use std::str::FromStr;

use crate::digest::Digest;
use crate::printer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Type {
    Int,
    Bool,
    IntArray,
    Void,
}

impl Type {
    pub fn keyword(self) -> &'static str {
        match self {
            Type::Int => "int",
            Type::Bool => "bool",
            Type::IntArray => "int[]",
            Type::Void => "void",
        }
    }

    /// The literal inserted by an early `return` in a function of this type.
    pub fn default_value(self) -> Option<Expr> {
        match self {
            Type::Int => Some(Expr::Int(0)),
            Type::Bool => Some(Expr::Bool(false)),
            Type::IntArray => Some(Expr::ArrayLit(Vec::new())),
            Type::Void => None,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::Ne => 3,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 4,
            BinaryOp::Add | BinaryOp::Sub => 5,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Var(String),
    ArrayLit(Vec<Expr>),
    /// `new int[size]`
    NewArray(Box<Expr>),
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Index {
        array: Box<Expr>,
        index: Box<Expr>,
    },
    Call {
        callee: String,
        args: Vec<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Block {
    pub statements: Vec<Stmt>,
}

impl Block {
    pub fn new(statements: Vec<Stmt>) -> Self {
        Block { statements }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Block(Block),
    Let {
        name: String,
        ty: Option<Type>,
        init: Expr,
    },
    Assign {
        name: String,
        index: Option<Expr>,
        value: Expr,
    },
    If {
        cond: Expr,
        then_branch: Box<Stmt>,
        else_branch: Option<Box<Stmt>>,
    },
    While {
        cond: Expr,
        body: Box<Stmt>,
    },
    /// `init` and `update` are restricted to `let`, assignment and expression
    /// statements; they are not addressable by a [`StatementId`].
    For {
        init: Option<Box<Stmt>>,
        cond: Option<Expr>,
        update: Option<Box<Stmt>>,
        body: Box<Stmt>,
    },
    Break,
    Continue,
    Return(Option<Expr>),
    Expr(Expr),
}

impl Stmt {
    pub fn empty_block() -> Stmt {
        Stmt::Block(Block::default())
    }

    pub fn is_block(&self) -> bool {
        matches!(self, Stmt::Block(_))
    }

    /// Number of addressable children.
    pub fn child_count(&self) -> usize {
        match self {
            Stmt::Block(b) => b.statements.len(),
            Stmt::If { else_branch, .. } => 1 + usize::from(else_branch.is_some()),
            Stmt::While { .. } | Stmt::For { .. } => 1,
            _ => 0,
        }
    }

    pub fn child(&self, i: usize) -> Option<&Stmt> {
        match self {
            Stmt::Block(b) => b.statements.get(i),
            Stmt::If {
                then_branch,
                else_branch,
                ..
            } => match i {
                0 => Some(then_branch),
                1 => else_branch.as_deref(),
                _ => None,
            },
            Stmt::While { body, .. } | Stmt::For { body, .. } if i == 0 => Some(body),
            _ => None,
        }
    }

    pub fn child_mut(&mut self, i: usize) -> Option<&mut Stmt> {
        match self {
            Stmt::Block(b) => b.statements.get_mut(i),
            Stmt::If {
                then_branch,
                else_branch,
                ..
            } => match i {
                0 => Some(then_branch),
                1 => else_branch.as_deref_mut(),
                _ => None,
            },
            Stmt::While { body, .. } | Stmt::For { body, .. } if i == 0 => Some(body),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub return_type: Type,
    pub body: Block,
}

impl Function {
    /// Statement at `path`; the empty path addresses nothing (the body is a
    /// [`Block`], reachable through [`Function::block_at`]).
    pub fn stmt_at(&self, path: &[usize]) -> Option<&Stmt> {
        let (first, rest) = path.split_first()?;
        let mut cur = self.body.statements.get(*first)?;
        for &i in rest {
            cur = cur.child(i)?;
        }
        Some(cur)
    }

    pub fn stmt_at_mut(&mut self, path: &[usize]) -> Option<&mut Stmt> {
        let (first, rest) = path.split_first()?;
        let mut cur = self.body.statements.get_mut(*first)?;
        for &i in rest {
            cur = cur.child_mut(i)?;
        }
        Some(cur)
    }

    /// Block at `path`, where the empty path is the function body.
    pub fn block_at(&self, path: &[usize]) -> Option<&Block> {
        if path.is_empty() {
            return Some(&self.body);
        }
        match self.stmt_at(path)? {
            Stmt::Block(b) => Some(b),
            _ => None,
        }
    }

    pub fn block_at_mut(&mut self, path: &[usize]) -> Option<&mut Block> {
        if path.is_empty() {
            return Some(&mut self.body);
        }
        match self.stmt_at_mut(path)? {
            Stmt::Block(b) => Some(b),
            _ => None,
        }
    }

    /// Paths of every statement below the body, in pre-order.
    pub fn statement_paths(&self) -> Vec<Vec<usize>> {
        fn walk(stmt: &Stmt, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            out.push(path.clone());
            for i in 0..stmt.child_count() {
                path.push(i);
                walk(stmt.child(i).expect("child in range"), path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        let mut path = Vec::new();
        for (i, s) in self.body.statements.iter().enumerate() {
            path.push(i);
            walk(s, &mut path, &mut out);
            path.pop();
        }
        out
    }

    /// Paths of every block, including the body itself (the empty path), in
    /// pre-order.
    pub fn block_paths(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        out.extend(
            self.statement_paths()
                .into_iter()
                .filter(|p| self.stmt_at(p).is_some_and(Stmt::is_block)),
        );
        out
    }
}

/// Address of a statement: the owning function and the child-index path from
/// the function body. Paths are re-resolved against whatever tree they are
/// applied to, so edits earlier in a patch can invalidate later ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StatementId {
    pub function: String,
    pub path: Vec<usize>,
}

impl StatementId {
    pub fn new(function: impl Into<String>, path: Vec<usize>) -> Self {
        StatementId {
            function: function.into(),
            path,
        }
    }

    pub fn is_root(&self) -> bool {
        self.path.is_empty()
    }

    /// True when `self` is a proper ancestor of `other` or vice versa.
    pub fn overlaps(&self, other: &StatementId) -> bool {
        if self.function != other.function || self.path == other.path {
            return false;
        }
        let n = self.path.len().min(other.path.len());
        self.path[..n] == other.path[..n]
    }
}

impl fmt::Display for StatementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.function)?;
        for (i, p) in self.path.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed statement id `{0}`")]
pub struct BadStatementId(pub String);

impl FromStr for StatementId {
    type Err = BadStatementId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadStatementId(s.to_string());
        let (name, rest) = s.split_once('[').ok_or_else(bad)?;
        let inner = rest.strip_suffix(']').ok_or_else(bad)?;
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(bad());
        }
        let path = if inner.is_empty() {
            Vec::new()
        } else {
            inner
                .split('.')
                .map(|p| p.parse::<usize>().map_err(|_| bad()))
                .collect::<Result<_, _>>()?
        };
        Ok(StatementId::new(name, path))
    }
}

/// A parsed program. Immutable once built; edits produce new units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    name: String,
    functions: Vec<Function>,
    digest: Digest,
}

impl SourceUnit {
    pub fn new(name: impl Into<String>, functions: Vec<Function>) -> Self {
        let name = name.into();
        let digest = Digest::of(printer::print_functions(&functions).as_bytes());
        SourceUnit {
            name,
            functions,
            digest,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn functions(&self) -> &[Function] {
        &self.functions
    }

    /// SHA-256 of the canonical printing.
    pub fn digest(&self) -> Digest {
        self.digest
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn stmt(&self, id: &StatementId) -> Option<&Stmt> {
        self.function(&id.function)?.stmt_at(&id.path)
    }

    /// Total addressable statements across all functions (bodies excluded).
    pub fn statement_count(&self) -> usize {
        self.functions
            .iter()
            .map(|f| f.statement_paths().len())
            .sum()
    }

    /// Rebuilds the unit with modified functions, recomputing the digest.
    pub fn with_functions(&self, functions: Vec<Function>) -> SourceUnit {
        SourceUnit::new(self.name.clone(), functions)
    }

    pub fn into_functions(self) -> Vec<Function> {
        self.functions
    }
}
