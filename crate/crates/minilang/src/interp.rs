//! Deterministic tree-walking interpreter with step accounting.
//!
//! Cost model: every executed statement costs one step and every evaluated
//! expression node costs one step. Steps are attributed to the function whose
//! body is executing (self cost, callees excluded). A test starts directly in
//! the callee's body; its literal arguments cost nothing.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use crate::ast::{BinaryOp, Block, Expr, SourceUnit, Stmt, UnaryOp};
use crate::testcase::{Literal, TestCase};

/// Default per-test step budget.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

const MAX_CALL_DEPTH: usize = 100;
const MAX_ARRAY_LEN: i64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestStatus {
    Pass,
    Fail,
    RuntimeError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionOutcome {
    pub status: TestStatus,
    /// Equals the budget exactly when `status` is `Timeout`.
    pub steps_used: u64,
    pub value: Option<Literal>,
    pub error: Option<String>,
    /// Self cost per function; functions that never ran are absent.
    pub function_steps: BTreeMap<String, u64>,
}

/// Runs one test. Never panics on ill-formed programs: anything the semantic
/// checker would reject surfaces as a runtime error.
pub fn run_test(unit: &SourceUnit, test: &TestCase, step_budget: u64) -> ExecutionOutcome {
    assert!(step_budget > 0, "step budget must be positive");
    let mut interp = Interpreter::new(unit, step_budget);
    let result = interp.call_entry(test);
    let (status, value, error) = match result {
        Ok(v) => {
            let lit = v.to_literal();
            let status = if lit.as_ref() == Some(&test.expected) {
                TestStatus::Pass
            } else {
                TestStatus::Fail
            };
            (status, lit, None)
        }
        Err(Trap::Timeout) => (TestStatus::Timeout, None, None),
        Err(Trap::Error(msg)) => (TestStatus::RuntimeError, None, Some(msg)),
    };
    let function_steps = unit
        .functions()
        .iter()
        .zip(&interp.costs)
        .filter(|(_, c)| **c > 0)
        .map(|(f, c)| (f.name.clone(), *c))
        .collect();
    ExecutionOutcome {
        status,
        steps_used: interp.steps,
        value,
        error,
        function_steps,
    }
}

/// Runs every test independently, without short-circuiting on failure.
pub fn run_suite(unit: &SourceUnit, tests: &[TestCase], step_budget: u64) -> Vec<ExecutionOutcome> {
    tests
        .iter()
        .map(|t| run_test(unit, t, step_budget))
        .collect()
}

#[derive(Debug, Clone)]
enum Value {
    Int(i64),
    Bool(bool),
    Array(Rc<RefCell<Vec<i64>>>),
    Void,
}

impl Value {
    fn to_literal(&self) -> Option<Literal> {
        match self {
            Value::Int(v) => Some(Literal::Int(*v)),
            Value::Bool(b) => Some(Literal::Bool(*b)),
            Value::Array(a) => Some(Literal::Array(a.borrow().clone())),
            Value::Void => None,
        }
    }

    fn from_literal(l: &Literal) -> Value {
        match l {
            Literal::Int(v) => Value::Int(*v),
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Array(items) => Value::Array(Rc::new(RefCell::new(items.clone()))),
        }
    }
}

enum Trap {
    Timeout,
    Error(String),
}

type Exec<T> = Result<T, Trap>;

fn fail<T>(msg: impl Into<String>) -> Exec<T> {
    Err(Trap::Error(msg.into()))
}

enum Flow {
    Normal,
    Break,
    Continue,
    Return(Value),
}

struct Interpreter<'a> {
    unit: &'a SourceUnit,
    index: HashMap<&'a str, usize>,
    budget: u64,
    steps: u64,
    costs: Vec<u64>,
    current: usize,
    depth: usize,
    env: Vec<(&'a str, Value)>,
}

impl<'a> Interpreter<'a> {
    fn new(unit: &'a SourceUnit, budget: u64) -> Self {
        let mut index = HashMap::new();
        for (i, f) in unit.functions().iter().enumerate() {
            index.entry(f.name.as_str()).or_insert(i);
        }
        Interpreter {
            unit,
            index,
            budget,
            steps: 0,
            costs: vec![0; unit.functions().len()],
            current: 0,
            depth: 0,
            env: Vec::new(),
        }
    }

    fn tick(&mut self) -> Exec<()> {
        self.steps += 1;
        self.costs[self.current] += 1;
        if self.steps >= self.budget {
            return Err(Trap::Timeout);
        }
        Ok(())
    }

    fn call_entry(&mut self, test: &TestCase) -> Exec<Value> {
        let Some(&fi) = self.index.get(test.function.as_str()) else {
            return fail(format!("unknown function `{}`", test.function));
        };
        let args = test.args.iter().map(Value::from_literal).collect();
        self.invoke(fi, args)
    }

    fn invoke(&mut self, fi: usize, args: Vec<Value>) -> Exec<Value> {
        let unit = self.unit;
        let f = &unit.functions()[fi];
        if f.params.len() != args.len() {
            return fail(format!("wrong number of arguments to `{}`", f.name));
        }
        if self.depth >= MAX_CALL_DEPTH {
            return fail("call stack overflow");
        }
        let saved_env = std::mem::take(&mut self.env);
        let saved_fn = self.current;
        self.depth += 1;
        self.current = fi;
        self.env
            .extend(f.params.iter().map(|p| p.name.as_str()).zip(args));
        let flow = self.block(&f.body);
        self.depth -= 1;
        self.current = saved_fn;
        self.env = saved_env;
        match flow? {
            Flow::Return(v) => Ok(v),
            Flow::Normal if f.return_type == crate::Type::Void => Ok(Value::Void),
            Flow::Normal => fail(format!("`{}` finished without returning", f.name)),
            Flow::Break | Flow::Continue => fail("break or continue outside of a loop"),
        }
    }

    fn lookup(&self, name: &str) -> Exec<&Value> {
        match self.env.iter().rev().find(|(n, _)| *n == name) {
            Some((_, v)) => Ok(v),
            None => fail(format!("unknown variable `{name}`")),
        }
    }

    fn lookup_mut(&mut self, name: &str) -> Exec<&mut Value> {
        match self.env.iter_mut().rev().find(|(n, _)| *n == name) {
            Some((_, v)) => Ok(v),
            None => fail(format!("unknown variable `{name}`")),
        }
    }

    fn block(&mut self, b: &'a Block) -> Exec<Flow> {
        self.tick()?;
        let mark = self.env.len();
        let mut flow = Flow::Normal;
        for s in &b.statements {
            flow = self.stmt_inner(s)?;
            if !matches!(flow, Flow::Normal) {
                break;
            }
        }
        self.env.truncate(mark);
        Ok(flow)
    }

    /// Executes a compound-statement body in its own scope.
    fn scoped(&mut self, s: &'a Stmt) -> Exec<Flow> {
        let mark = self.env.len();
        let flow = self.stmt_inner(s);
        self.env.truncate(mark);
        flow
    }

    fn stmt_inner(&mut self, s: &'a Stmt) -> Exec<Flow> {
        if let Stmt::Block(b) = s {
            return self.block(b);
        }
        self.tick()?;
        match s {
            Stmt::Block(_) => unreachable!(),
            Stmt::Let { .. } | Stmt::Assign { .. } | Stmt::Expr(_) => {
                self.simple(s)?;
                Ok(Flow::Normal)
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
            } => {
                if self.condition(cond)? {
                    self.scoped(then_branch)
                } else if let Some(e) = else_branch {
                    self.scoped(e)
                } else {
                    Ok(Flow::Normal)
                }
            }
            Stmt::While { cond, body } => {
                while self.condition(cond)? {
                    match self.scoped(body)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        Flow::Normal | Flow::Continue => {}
                    }
                }
                Ok(Flow::Normal)
            }
            Stmt::For {
                init,
                cond,
                update,
                body,
            } => {
                let mark = self.env.len();
                let r = self.for_loop(init.as_deref(), cond.as_ref(), update.as_deref(), body);
                self.env.truncate(mark);
                r
            }
            Stmt::Break => Ok(Flow::Break),
            Stmt::Continue => Ok(Flow::Continue),
            Stmt::Return(None) => Ok(Flow::Return(Value::Void)),
            Stmt::Return(Some(e)) => Ok(Flow::Return(self.expr(e)?)),
        }
    }

    fn for_loop(
        &mut self,
        init: Option<&'a Stmt>,
        cond: Option<&'a Expr>,
        update: Option<&'a Stmt>,
        body: &'a Stmt,
    ) -> Exec<Flow> {
        if let Some(init) = init {
            self.tick()?;
            self.simple(init)?;
        }
        loop {
            if let Some(cond) = cond {
                if !self.condition(cond)? {
                    break;
                }
            }
            match self.scoped(body)? {
                Flow::Break => break,
                Flow::Return(v) => return Ok(Flow::Return(v)),
                Flow::Normal | Flow::Continue => {}
            }
            if let Some(update) = update {
                self.tick()?;
                self.simple(update)?;
            }
        }
        Ok(Flow::Normal)
    }

    fn condition(&mut self, e: &'a Expr) -> Exec<bool> {
        match self.expr(e)? {
            Value::Bool(b) => Ok(b),
            _ => fail("condition is not a bool"),
        }
    }

    /// `let`, assignment or expression statement, excluding the statement
    /// step itself.
    fn simple(&mut self, s: &'a Stmt) -> Exec<()> {
        match s {
            Stmt::Let { name, init, .. } => {
                let v = self.expr(init)?;
                self.env.push((name.as_str(), v));
            }
            Stmt::Assign {
                name,
                index: None,
                value,
            } => {
                let v = self.expr(value)?;
                *self.lookup_mut(name)? = v;
            }
            Stmt::Assign {
                name,
                index: Some(ix),
                value,
            } => {
                let i = self.int(ix)?;
                let v = match self.expr(value)? {
                    Value::Int(v) => v,
                    _ => return fail("array element must be int"),
                };
                let Value::Array(arr) = self.lookup(name)? else {
                    return fail(format!("`{name}` is not an array"));
                };
                let mut arr = arr.borrow_mut();
                let len = arr.len();
                match usize::try_from(i).ok().and_then(|i| arr.get_mut(i)) {
                    Some(slot) => *slot = v,
                    None => return fail(format!("index {i} out of bounds for length {len}")),
                }
            }
            Stmt::Expr(e) => {
                self.expr(e)?;
            }
            _ => return fail("not a simple statement"),
        }
        Ok(())
    }

    fn int(&mut self, e: &'a Expr) -> Exec<i64> {
        match self.expr(e)? {
            Value::Int(v) => Ok(v),
            _ => fail("expected an int"),
        }
    }

    fn expr(&mut self, e: &'a Expr) -> Exec<Value> {
        self.tick()?;
        match e {
            Expr::Int(v) => Ok(Value::Int(*v)),
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::Var(name) => self.lookup(name).cloned(),
            Expr::ArrayLit(items) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    out.push(self.int(item)?);
                }
                Ok(Value::Array(Rc::new(RefCell::new(out))))
            }
            Expr::NewArray(size) => {
                let n = self.int(size)?;
                if !(0..=MAX_ARRAY_LEN).contains(&n) {
                    return fail(format!("bad array size {n}"));
                }
                Ok(Value::Array(Rc::new(RefCell::new(vec![0; n as usize]))))
            }
            Expr::Unary { op, operand } => match (op, self.expr(operand)?) {
                (UnaryOp::Neg, Value::Int(v)) => Ok(Value::Int(v.wrapping_neg())),
                (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                _ => fail("bad operand for unary operator"),
            },
            Expr::Binary { op, lhs, rhs } => self.binary(*op, lhs, rhs),
            Expr::Index { array, index } => {
                let arr = match self.expr(array)? {
                    Value::Array(a) => a,
                    _ => return fail("indexing a non-array"),
                };
                let i = self.int(index)?;
                let arr = arr.borrow();
                match usize::try_from(i).ok().and_then(|i| arr.get(i)) {
                    Some(v) => Ok(Value::Int(*v)),
                    None => fail(format!("index {i} out of bounds for length {}", arr.len())),
                }
            }
            Expr::Call { callee, args } => {
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.expr(a)?);
                }
                match callee.as_str() {
                    "len" => match values.as_slice() {
                        [Value::Array(a)] => Ok(Value::Int(a.borrow().len() as i64)),
                        _ => fail("len expects an array"),
                    },
                    "print" => Ok(Value::Void),
                    name => match self.index.get(name) {
                        Some(&fi) => self.invoke(fi, values),
                        None => fail(format!("unknown function `{name}`")),
                    },
                }
            }
        }
    }

    fn binary(&mut self, op: BinaryOp, lhs: &'a Expr, rhs: &'a Expr) -> Exec<Value> {
        use BinaryOp::*;
        if matches!(op, And | Or) {
            let l = match self.expr(lhs)? {
                Value::Bool(b) => b,
                _ => return fail("logical operand is not a bool"),
            };
            if (op == And && !l) || (op == Or && l) {
                return Ok(Value::Bool(l));
            }
            return match self.expr(rhs)? {
                Value::Bool(b) => Ok(Value::Bool(b)),
                _ => fail("logical operand is not a bool"),
            };
        }
        let l = self.expr(lhs)?;
        let r = self.expr(rhs)?;
        match (op, l, r) {
            (Eq, Value::Bool(a), Value::Bool(b)) => Ok(Value::Bool(a == b)),
            (Ne, Value::Bool(a), Value::Bool(b)) => Ok(Value::Bool(a != b)),
            (_, Value::Int(a), Value::Int(b)) => Ok(match op {
                Add => Value::Int(a.wrapping_add(b)),
                Sub => Value::Int(a.wrapping_sub(b)),
                Mul => Value::Int(a.wrapping_mul(b)),
                Div | Rem if b == 0 => return fail("division by zero"),
                Div => Value::Int(a.wrapping_div(b)),
                Rem => Value::Int(a.wrapping_rem(b)),
                Lt => Value::Bool(a < b),
                Le => Value::Bool(a <= b),
                Gt => Value::Bool(a > b),
                Ge => Value::Bool(a >= b),
                Eq => Value::Bool(a == b),
                Ne => Value::Bool(a != b),
                And | Or => unreachable!(),
            }),
            _ => fail(format!("bad operands for `{}`", op.symbol())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{parse_source, parse_tests};

    fn run(src: &str, test: &str, budget: u64) -> ExecutionOutcome {
        let u = parse_source("t", src).unwrap();
        let t = &parse_tests(test).unwrap()[0];
        run_test(&u, t, budget)
    }

    #[test]
    fn return_one_costs_three_steps() {
        // body block + return statement + literal
        let o = run("fn f() -> int { return 1; }", "test a: f() == 1", 100);
        assert_eq!(o.status, TestStatus::Pass);
        assert_eq!(o.steps_used, 3);
        assert_eq!(o.function_steps["f"], 3);
    }

    #[test]
    fn wrong_value_fails() {
        let o = run("fn f() -> int { return 2; }", "test a: f() == 1", 100);
        assert_eq!(o.status, TestStatus::Fail);
        assert_eq!(o.value, Some(Literal::Int(2)));
    }

    #[test]
    fn infinite_loop_times_out_at_budget() {
        let o = run(
            "fn f() -> int { while (true) { } }",
            "test a: f() == 1",
            1000,
        );
        assert_eq!(o.status, TestStatus::Timeout);
        assert_eq!(o.steps_used, 1000);
    }

    #[test]
    fn runtime_errors_are_statuses() {
        for (src, needle) in [
            ("fn f() -> int { return 1 / 0; }", "division"),
            (
                "fn f() -> int { let a = [1]; return a[3]; }",
                "out of bounds",
            ),
            (
                "fn f() -> int { let a = new int[-1]; return 0; }",
                "array size",
            ),
            ("fn f() -> int { }", "without returning"),
            ("fn f() -> int { return f(); }", "stack overflow"),
            ("fn f() -> int { return y; }", "unknown variable"),
        ] {
            let o = run(src, "test a: f() == 1", 100_000);
            assert_eq!(o.status, TestStatus::RuntimeError, "{src}");
            assert!(
                o.error.as_deref().unwrap().contains(needle),
                "{src}: {:?}",
                o.error
            );
        }
    }

    #[test]
    fn arrays_are_shared_references() {
        let o = run(
            "fn set(a: int[]) { a[0] = 9; } fn f() -> int[] { let a = [1, 2]; set(a); return a; }",
            "test a: f() == [9, 2]",
            1000,
        );
        assert_eq!(o.status, TestStatus::Pass, "{o:?}");
    }

    #[test]
    fn self_cost_attribution() {
        let src = "fn g() -> int { let s = 0; for (let i = 0; i < 1000; i = i + 1) { s = s + i; } return s; }
                   fn f() -> int { return g(); }";
        let o = run(src, "test a: f() == 499500", 1_000_000);
        assert_eq!(o.status, TestStatus::Pass);
        // f: block + return + call node
        assert_eq!(o.function_steps["f"], 3);
        assert!(o.function_steps["g"] > 1000 * 8);
        assert_eq!(o.function_steps.values().sum::<u64>(), o.steps_used);
    }

    #[test]
    fn short_circuit_skips_rhs() {
        let o = run(
            "fn f() -> bool { return false && 1 / 0 == 1; }",
            "test a: f() == false",
            100,
        );
        assert_eq!(o.status, TestStatus::Pass);
        // block, return, &&, false
        assert_eq!(o.steps_used, 4);
    }

    #[test]
    fn loop_control_flow() {
        let src = "fn f() -> int { let s = 0; for (let i = 0; i < 10; i = i + 1) { if (i % 2 == 0) { continue; } if (i > 7) { break; } s = s + i; } return s; }";
        let o = run(src, "test a: f() == 16", 10_000);
        assert_eq!(o.status, TestStatus::Pass, "{o:?}");
    }
}
