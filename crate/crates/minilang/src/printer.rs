//! Canonical pretty printer. Four-space indentation, one statement per line,
//! minimal parentheses, comments dropped. Two programs are syntactically
//! equivalent exactly when their canonical printings are byte-equal.

use std::fmt::Write;

use crate::ast::{Block, Expr, Function, SourceUnit, Stmt, UnaryOp};

const INDENT: &str = "    ";

pub fn print_canonical(unit: &SourceUnit) -> String {
    print_functions(unit.functions())
}

pub(crate) fn print_functions(functions: &[Function]) -> String {
    let mut out = String::new();
    for (i, f) in functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_function(f, &mut out);
    }
    out
}

pub fn print_function(f: &Function, out: &mut String) {
    write!(out, "fn {}(", f.name).unwrap();
    for (i, p) in f.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "{}: {}", p.name, p.ty).unwrap();
    }
    out.push(')');
    if f.return_type != crate::Type::Void {
        write!(out, " -> {}", f.return_type).unwrap();
    }
    out.push(' ');
    print_block_inline(&f.body, 0, out);
    out.push('\n');
}

/// A block on its own, starting at column zero (the form sent to the
/// rewriting model and parsed back by `parse_block`).
pub fn print_block(block: &Block) -> String {
    let mut out = String::new();
    print_block_inline(block, 0, &mut out);
    out
}

pub fn print_stmt(stmt: &Stmt) -> String {
    let mut out = String::new();
    print_stmt_line(stmt, 0, &mut out);
    out.truncate(out.trim_end().len());
    out
}

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    expr(e, &mut out);
    out
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str(INDENT);
    }
}

/// Writes `{ ... }` starting at the current position; the closing brace is
/// indented to `level` and not followed by a newline.
fn print_block_inline(block: &Block, level: usize, out: &mut String) {
    if block.statements.is_empty() {
        out.push_str("{}");
        return;
    }
    out.push_str("{\n");
    for s in &block.statements {
        print_stmt_line(s, level + 1, out);
    }
    indent(level, out);
    out.push('}');
}

/// Writes one statement (possibly spanning lines) at `level`, ending with a
/// newline.
fn print_stmt_line(stmt: &Stmt, level: usize, out: &mut String) {
    indent(level, out);
    print_stmt_here(stmt, level, out);
    out.push('\n');
}

/// Writes `stmt` at the current position without a trailing newline.
fn print_stmt_here(stmt: &Stmt, level: usize, out: &mut String) {
    match stmt {
        Stmt::Block(b) => print_block_inline(b, level, out),
        Stmt::If {
            cond,
            then_branch,
            else_branch,
        } => {
            out.push_str("if (");
            expr(cond, out);
            out.push_str(") ");
            // An else-less `if` in tail position of the then-branch would
            // capture our `else` on re-parse; bracing it keeps the fixpoint.
            let needs_braces = else_branch.is_some() && dangles(then_branch);
            let then_is_block = if needs_braces {
                out.push_str("{\n");
                print_stmt_line(then_branch, level + 1, out);
                indent(level, out);
                out.push('}');
                true
            } else {
                print_body(then_branch, level, out)
            };
            if let Some(else_branch) = else_branch {
                if then_is_block {
                    out.push(' ');
                } else {
                    out.push('\n');
                    indent(level, out);
                }
                out.push_str("else ");
                if matches!(**else_branch, Stmt::If { .. }) {
                    print_stmt_here(else_branch, level, out);
                } else {
                    print_body(else_branch, level, out);
                }
            }
        }
        Stmt::While { cond, body } => {
            out.push_str("while (");
            expr(cond, out);
            out.push_str(") ");
            print_body(body, level, out);
        }
        Stmt::For {
            init,
            cond,
            update,
            body,
        } => {
            out.push_str("for (");
            if let Some(init) = init {
                simple(init, out);
            }
            out.push(';');
            if let Some(cond) = cond {
                out.push(' ');
                expr(cond, out);
            }
            out.push(';');
            if let Some(update) = update {
                out.push(' ');
                simple(update, out);
            }
            out.push_str(") ");
            print_body(body, level, out);
        }
        Stmt::Break => out.push_str("break;"),
        Stmt::Continue => out.push_str("continue;"),
        Stmt::Return(None) => out.push_str("return;"),
        Stmt::Return(Some(e)) => {
            out.push_str("return ");
            expr(e, out);
            out.push(';');
        }
        Stmt::Let { .. } | Stmt::Assign { .. } | Stmt::Expr(_) => {
            simple(stmt, out);
            out.push(';');
        }
    }
}

/// Body of a compound statement, printed after `) ` or `else `. Returns true
/// when the body was a block (so a following `else` stays on the same line).
fn print_body(body: &Stmt, level: usize, out: &mut String) -> bool {
    if let Stmt::Block(b) = body {
        print_block_inline(b, level, out);
        true
    } else {
        // drop the space written after `)`/`else`
        if out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
        indent(level + 1, out);
        print_stmt_here(body, level + 1, out);
        false
    }
}

fn dangles(stmt: &Stmt) -> bool {
    match stmt {
        Stmt::If {
            else_branch: None, ..
        } => true,
        Stmt::If {
            else_branch: Some(e),
            ..
        } => dangles(e),
        Stmt::While { body, .. } | Stmt::For { body, .. } => dangles(body),
        _ => false,
    }
}

fn simple(stmt: &Stmt, out: &mut String) {
    match stmt {
        Stmt::Let { name, ty, init } => {
            write!(out, "let {name}").unwrap();
            if let Some(ty) = ty {
                write!(out, ": {ty}").unwrap();
            }
            out.push_str(" = ");
            expr(init, out);
        }
        Stmt::Assign { name, index, value } => {
            out.push_str(name);
            if let Some(index) = index {
                out.push('[');
                expr(index, out);
                out.push(']');
            }
            out.push_str(" = ");
            expr(value, out);
        }
        Stmt::Expr(e) => expr(e, out),
        other => unreachable!("not a simple statement: {other:?}"),
    }
}

const PREC_UNARY: u8 = 7;
const PREC_POSTFIX: u8 = 8;
const PREC_ATOM: u8 = 9;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary { op, .. } => op.precedence(),
        Expr::Unary { .. } => PREC_UNARY,
        Expr::Index { .. } => PREC_POSTFIX,
        _ => PREC_ATOM,
    }
}

fn operand(e: &Expr, parens: bool, out: &mut String) {
    if parens {
        out.push('(');
        expr(e, out);
        out.push(')');
    } else {
        expr(e, out);
    }
}

fn list(items: &[Expr], out: &mut String) {
    for (i, e) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        expr(e, out);
    }
}

fn expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Int(v) => write!(out, "{v}").unwrap(),
        Expr::Bool(b) => write!(out, "{b}").unwrap(),
        Expr::Var(name) => out.push_str(name),
        Expr::ArrayLit(items) => {
            out.push('[');
            list(items, out);
            out.push(']');
        }
        Expr::NewArray(size) => {
            out.push_str("new int[");
            expr(size, out);
            out.push(']');
        }
        Expr::Unary { op, operand: inner } => {
            out.push(match op {
                UnaryOp::Neg => '-',
                UnaryOp::Not => '!',
            });
            operand(inner, precedence(inner) < PREC_UNARY, out);
        }
        Expr::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            operand(lhs, precedence(lhs) < p, out);
            write!(out, " {} ", op.symbol()).unwrap();
            operand(rhs, precedence(rhs) <= p, out);
        }
        Expr::Index { array, index } => {
            operand(array, precedence(array) < PREC_POSTFIX, out);
            out.push('[');
            expr(index, out);
            out.push(']');
        }
        Expr::Call { callee, args } => {
            out.push_str(callee);
            out.push('(');
            list(args, out);
            out.push(')');
        }
    }
}
