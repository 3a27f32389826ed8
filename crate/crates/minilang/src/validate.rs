//! Semantic validation: the MiniLang stand-in for compilation. Checks types,
//! scoping, loop-only `break`/`continue`, return legality and missing
//! returns. Dead code after a jump is type-checked but allowed.

use std::collections::HashMap;

use crate::ast::{BinaryOp, Block, Expr, Function, SourceUnit, Stmt, Type, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("in `{function}`: {message}")]
pub struct SemanticError {
    pub function: String,
    pub message: String,
}

pub const BUILTINS: [&str; 2] = ["len", "print"];

/// Returns the first semantic error found, if any.
pub fn validate(unit: &SourceUnit) -> Result<(), SemanticError> {
    let mut sigs: HashMap<&str, (&[crate::Param], Type)> = HashMap::new();
    for f in unit.functions() {
        let err = |m: &str| SemanticError {
            function: f.name.clone(),
            message: m.to_string(),
        };
        if BUILTINS.contains(&f.name.as_str()) {
            return Err(err("function name shadows a builtin"));
        }
        if sigs.insert(&f.name, (&f.params, f.return_type)).is_some() {
            return Err(err("duplicate function"));
        }
    }
    for f in unit.functions() {
        Checker {
            sigs: &sigs,
            func: f,
            scopes: Vec::new(),
            loop_depth: 0,
        }
        .check_function()
        .map_err(|message| SemanticError {
            function: f.name.clone(),
            message,
        })?;
    }
    Ok(())
}

type Check<T = ()> = Result<T, String>;

struct Checker<'a> {
    sigs: &'a HashMap<&'a str, (&'a [crate::Param], Type)>,
    func: &'a Function,
    scopes: Vec<Vec<(&'a str, Type)>>,
    loop_depth: usize,
}

impl<'a> Checker<'a> {
    fn check_function(mut self) -> Check {
        self.scopes.push(Vec::new());
        for p in &self.func.params {
            if p.ty == Type::Void {
                return Err(format!("parameter `{}` has type void", p.name));
            }
            self.declare(&p.name, p.ty)?;
        }
        let completes = self.block(&self.func.body)?;
        if self.func.return_type != Type::Void && completes {
            return Err("missing return statement".into());
        }
        Ok(())
    }

    fn lookup(&self, name: &str) -> Option<Type> {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
    }

    /// Locals may not shadow any enclosing local or parameter.
    fn declare(&mut self, name: &'a str, ty: Type) -> Check {
        if self.lookup(name).is_some() {
            return Err(format!("variable `{name}` is already defined"));
        }
        self.scopes.last_mut().expect("scope").push((name, ty));
        Ok(())
    }

    fn scoped<T>(&mut self, f: impl FnOnce(&mut Self) -> Check<T>) -> Check<T> {
        self.scopes.push(Vec::new());
        let r = f(self);
        self.scopes.pop();
        r
    }

    /// Checks a block; returns whether it can complete normally.
    fn block(&mut self, b: &'a Block) -> Check<bool> {
        self.scoped(|c| {
            let mut completes = true;
            for s in &b.statements {
                let reaches_end = c.stmt(s)?;
                completes = completes && reaches_end;
            }
            Ok(completes)
        })
    }

    /// Body of `if`/`while`/`for`: gets its own scope even when not a block.
    fn body(&mut self, s: &'a Stmt) -> Check<bool> {
        self.scoped(|c| c.stmt(s))
    }

    fn cond(&mut self, e: &'a Expr) -> Check {
        match self.expr(e)? {
            Type::Bool => Ok(()),
            t => Err(format!("condition has type {t}, expected bool")),
        }
    }

    fn stmt(&mut self, s: &'a Stmt) -> Check<bool> {
        match s {
            Stmt::Block(b) => self.block(b),
            Stmt::Let { .. } | Stmt::Assign { .. } | Stmt::Expr(_) => {
                self.simple(s)?;
                Ok(true)
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.cond(cond)?;
                let t = self.body(then_branch)?;
                match else_branch {
                    Some(e) => Ok(self.body(e)? || t),
                    None => Ok(true),
                }
            }
            Stmt::While { cond, body } => {
                self.cond(cond)?;
                self.loop_body(body)?;
                Ok(!is_true(Some(cond)) || breaks_out(body))
            }
            Stmt::For {
                init,
                cond,
                update,
                body,
            } => self.scoped(|c| {
                if let Some(init) = init {
                    c.simple(init)?;
                }
                if let Some(cond) = cond {
                    c.cond(cond)?;
                }
                if let Some(update) = update {
                    c.simple(update)?;
                }
                c.loop_body(body)?;
                Ok(!is_true(cond.as_ref()) || breaks_out(body))
            }),
            Stmt::Break | Stmt::Continue => {
                if self.loop_depth == 0 {
                    let kw = if matches!(s, Stmt::Break) {
                        "break"
                    } else {
                        "continue"
                    };
                    return Err(format!("`{kw}` outside of a loop"));
                }
                Ok(false)
            }
            Stmt::Return(value) => {
                let want = self.func.return_type;
                match (value, want) {
                    (None, Type::Void) => {}
                    (None, _) => return Err("missing return value".into()),
                    (Some(_), Type::Void) => {
                        return Err("cannot return a value from a void function".into())
                    }
                    (Some(e), want) => {
                        let got = self.expr(e)?;
                        if got != want {
                            return Err(format!("returning {got}, expected {want}"));
                        }
                    }
                }
                Ok(false)
            }
        }
    }

    fn loop_body(&mut self, body: &'a Stmt) -> Check {
        self.loop_depth += 1;
        let r = self.body(body);
        self.loop_depth -= 1;
        r.map(|_| ())
    }

    fn simple(&mut self, s: &'a Stmt) -> Check {
        match s {
            Stmt::Let { name, ty, init } => {
                let got = self.expr(init)?;
                if got == Type::Void {
                    return Err(format!("variable `{name}` initialised with void"));
                }
                if let Some(ty) = ty {
                    if *ty != got {
                        return Err(format!("`{name}` declared {ty} but initialised with {got}"));
                    }
                }
                self.declare(name, got)
            }
            Stmt::Assign { name, index, value } => {
                let var = self
                    .lookup(name)
                    .ok_or_else(|| format!("unknown variable `{name}`"))?;
                let got = self.expr(value)?;
                let want = match index {
                    None => var,
                    Some(ix) => {
                        if var != Type::IntArray {
                            return Err(format!("cannot index `{name}` of type {var}"));
                        }
                        if self.expr(ix)? != Type::Int {
                            return Err("array index must be int".into());
                        }
                        Type::Int
                    }
                };
                if got != want {
                    return Err(format!("assigning {got} to {want}"));
                }
                Ok(())
            }
            Stmt::Expr(e) => {
                if !matches!(e, Expr::Call { .. }) {
                    return Err("not a statement".into());
                }
                self.expr(e).map(|_| ())
            }
            _ => Err("not a simple statement".into()),
        }
    }

    fn expr(&mut self, e: &'a Expr) -> Check<Type> {
        match e {
            Expr::Int(_) => Ok(Type::Int),
            Expr::Bool(_) => Ok(Type::Bool),
            Expr::Var(name) => self
                .lookup(name)
                .ok_or_else(|| format!("unknown variable `{name}`")),
            Expr::ArrayLit(items) => {
                for item in items {
                    if self.expr(item)? != Type::Int {
                        return Err("array elements must be int".into());
                    }
                }
                Ok(Type::IntArray)
            }
            Expr::NewArray(size) => {
                if self.expr(size)? != Type::Int {
                    return Err("array size must be int".into());
                }
                Ok(Type::IntArray)
            }
            Expr::Unary { op, operand } => {
                let t = self.expr(operand)?;
                match (op, t) {
                    (UnaryOp::Neg, Type::Int) => Ok(Type::Int),
                    (UnaryOp::Not, Type::Bool) => Ok(Type::Bool),
                    _ => Err(format!("bad operand type {t} for unary operator")),
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                let l = self.expr(lhs)?;
                let r = self.expr(rhs)?;
                use BinaryOp::*;
                match op {
                    Add | Sub | Mul | Div | Rem if l == Type::Int && r == Type::Int => {
                        Ok(Type::Int)
                    }
                    Lt | Le | Gt | Ge if l == Type::Int && r == Type::Int => Ok(Type::Bool),
                    And | Or if l == Type::Bool && r == Type::Bool => Ok(Type::Bool),
                    Eq | Ne if l == r && matches!(l, Type::Int | Type::Bool) => Ok(Type::Bool),
                    _ => Err(format!(
                        "bad operand types {l} and {r} for `{}`",
                        op.symbol()
                    )),
                }
            }
            Expr::Index { array, index } => {
                if self.expr(array)? != Type::IntArray {
                    return Err("indexing a non-array".into());
                }
                if self.expr(index)? != Type::Int {
                    return Err("array index must be int".into());
                }
                Ok(Type::Int)
            }
            Expr::Call { callee, args } => {
                let arg_types = args
                    .iter()
                    .map(|a| self.expr(a))
                    .collect::<Check<Vec<_>>>()?;
                match callee.as_str() {
                    "len" => match arg_types.as_slice() {
                        [Type::IntArray] => Ok(Type::Int),
                        _ => Err("len expects one int[] argument".into()),
                    },
                    "print" => match arg_types.as_slice() {
                        [t] if *t != Type::Void => Ok(Type::Void),
                        _ => Err("print expects one argument".into()),
                    },
                    name => {
                        let (params, ret) = self
                            .sigs
                            .get(name)
                            .ok_or_else(|| format!("unknown function `{name}`"))?;
                        if params.len() != arg_types.len()
                            || params.iter().zip(&arg_types).any(|(p, t)| p.ty != *t)
                        {
                            return Err(format!("bad arguments to `{name}`"));
                        }
                        Ok(*ret)
                    }
                }
            }
        }
    }
}

fn is_true(cond: Option<&Expr>) -> bool {
    matches!(cond, None | Some(Expr::Bool(true)))
}

/// Whether `s` contains a `break` that exits the loop whose body `s` is.
fn breaks_out(s: &Stmt) -> bool {
    match s {
        Stmt::Break => true,
        Stmt::Block(b) => b.statements.iter().any(breaks_out),
        Stmt::If {
            then_branch,
            else_branch,
            ..
        } => breaks_out(then_branch) || else_branch.as_deref().is_some_and(breaks_out),
        // breaks in nested loops target those loops
        _ => false,
    }
}
