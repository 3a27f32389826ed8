//! Recursive-descent parser.
//!
//! ```text
//! program   = { function } ;
//! function  = "fn" IDENT "(" [ param { "," param } ] ")" [ "->" type ] block ;
//! param     = IDENT ":" type ;
//! type      = "int" [ "[" "]" ] | "bool" | "void" ;
//! block     = "{" { stmt } "}" ;
//! stmt      = block
//!           | simple ";"
//!           | "if" "(" expr ")" stmt [ "else" stmt ]
//!           | "while" "(" expr ")" stmt
//!           | "for" "(" [ simple ] ";" [ expr ] ";" [ simple ] ")" stmt
//!           | "break" ";" | "continue" ";"
//!           | "return" [ expr ] ";" ;
//! simple    = "let" IDENT [ ":" type ] "=" expr
//!           | IDENT [ "[" expr "]" ] "=" expr
//!           | expr ;
//! expr      = or ;
//! or        = and { "||" and } ;
//! and       = equality { "&&" equality } ;
//! equality  = compare { ( "==" | "!=" ) compare } ;
//! compare   = additive { ( "<" | "<=" | ">" | ">=" ) additive } ;
//! additive  = term { ( "+" | "-" ) term } ;
//! term      = unary { ( "*" | "/" | "%" ) unary } ;
//! unary     = ( "-" | "!" ) unary | postfix ;
//! postfix   = primary { "[" expr "]" } ;
//! primary   = INT | "true" | "false" | IDENT [ "(" [ expr { "," expr } ] ")" ]
//!           | "(" expr ")" | "[" [ expr { "," expr } ] "]" | "new" "int" "[" expr "]" ;
//! ```

use std::fmt;

use crate::ast::{BinaryOp, Block, Expr, Function, Param, SourceUnit, Stmt, Type, UnaryOp};
use crate::lexer::{tokenize, Tok, Token};

/// Nesting limit for statements and expressions; keeps hostile input from
/// exhausting the native stack.
const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

/// Parses a whole program.
pub fn parse_source(name: &str, text: &str) -> Result<SourceUnit, ParseError> {
    let mut p = Parser::new(text)?;
    let mut functions = Vec::new();
    while p.peek() != &Tok::Eof {
        functions.push(p.function()?);
    }
    Ok(SourceUnit::new(name, functions))
}

/// Parses a braced statement sequence on its own. When that fails the text
/// is retried once wrapped in braces; if both attempts fail the error of the
/// first attempt is returned.
pub fn parse_block(text: &str) -> Result<Block, ParseError> {
    match parse_block_exact(text) {
        Ok(b) => Ok(b),
        Err(first) => parse_block_exact(&format!("{{{text}\n}}")).map_err(|_| first),
    }
}

fn parse_block_exact(text: &str) -> Result<Block, ParseError> {
    let mut p = Parser::new(text)?;
    let block = p.block()?;
    p.expect(Tok::Eof)?;
    Ok(block)
}

/// Parses a single expression spanning all of `text`.
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    p.expect(Tok::Eof)?;
    Ok(e)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: tokenize(text)?,
            pos: 0,
            depth: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        let t = &self.toks[self.pos];
        ParseError::new(t.line, t.column, message)
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        self.error_here(format!(
            "expected {wanted}, found {}",
            self.peek().describe()
        ))
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error_here("nesting too deep"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn ty(&mut self) -> Result<Type, ParseError> {
        match self.peek() {
            Tok::IntKw => {
                self.advance();
                if self.eat(&Tok::LBracket) {
                    self.expect(Tok::RBracket)?;
                    Ok(Type::IntArray)
                } else {
                    Ok(Type::Int)
                }
            }
            Tok::BoolKw => {
                self.advance();
                Ok(Type::Bool)
            }
            Tok::VoidKw => {
                self.advance();
                Ok(Type::Void)
            }
            _ => Err(self.unexpected("type")),
        }
    }

    fn function(&mut self) -> Result<Function, ParseError> {
        self.expect(Tok::Fn)?;
        let name = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if self.peek() != &Tok::RParen {
            loop {
                let pname = self.ident()?;
                self.expect(Tok::Colon)?;
                let ty = self.ty()?;
                params.push(Param { name: pname, ty });
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        let return_type = if self.eat(&Tok::Arrow) {
            self.ty()?
        } else {
            Type::Void
        };
        let body = self.block()?;
        Ok(Function {
            name,
            params,
            return_type,
            body,
        })
    }

    fn block(&mut self) -> Result<Block, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut statements = Vec::new();
        while self.peek() != &Tok::RBrace {
            if self.peek() == &Tok::Eof {
                return Err(self.unexpected("`}`"));
            }
            statements.push(self.stmt()?);
        }
        self.advance();
        Ok(Block { statements })
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        self.enter()?;
        let s = self.stmt_inner();
        self.leave();
        s
    }

    fn stmt_inner(&mut self) -> Result<Stmt, ParseError> {
        match self.peek() {
            Tok::LBrace => Ok(Stmt::Block(self.block()?)),
            Tok::If => {
                self.advance();
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                let then_branch = Box::new(self.stmt()?);
                let else_branch = if self.eat(&Tok::Else) {
                    Some(Box::new(self.stmt()?))
                } else {
                    None
                };
                Ok(Stmt::If {
                    cond,
                    then_branch,
                    else_branch,
                })
            }
            Tok::While => {
                self.advance();
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                let body = Box::new(self.stmt()?);
                Ok(Stmt::While { cond, body })
            }
            Tok::For => {
                self.advance();
                self.expect(Tok::LParen)?;
                let init = if self.peek() == &Tok::Semi {
                    None
                } else {
                    Some(Box::new(self.simple()?))
                };
                self.expect(Tok::Semi)?;
                let cond = if self.peek() == &Tok::Semi {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect(Tok::Semi)?;
                let update = if self.peek() == &Tok::RParen {
                    None
                } else {
                    Some(Box::new(self.simple()?))
                };
                self.expect(Tok::RParen)?;
                let body = Box::new(self.stmt()?);
                Ok(Stmt::For {
                    init,
                    cond,
                    update,
                    body,
                })
            }
            Tok::Break => {
                self.advance();
                self.expect(Tok::Semi)?;
                Ok(Stmt::Break)
            }
            Tok::Continue => {
                self.advance();
                self.expect(Tok::Semi)?;
                Ok(Stmt::Continue)
            }
            Tok::Return => {
                self.advance();
                let value = if self.peek() == &Tok::Semi {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect(Tok::Semi)?;
                Ok(Stmt::Return(value))
            }
            _ => {
                let s = self.simple()?;
                self.expect(Tok::Semi)?;
                Ok(s)
            }
        }
    }

    fn simple(&mut self) -> Result<Stmt, ParseError> {
        if self.eat(&Tok::Let) {
            let name = self.ident()?;
            let ty = if self.eat(&Tok::Colon) {
                Some(self.ty()?)
            } else {
                None
            };
            self.expect(Tok::Assign)?;
            let init = self.expr()?;
            return Ok(Stmt::Let { name, ty, init });
        }
        // `x = ...` and `x[i] = ...` are recognised after parsing the left
        // side as an ordinary expression.
        let at = (self.toks[self.pos].line, self.toks[self.pos].column);
        let lhs = self.expr()?;
        if !self.eat(&Tok::Assign) {
            return Ok(Stmt::Expr(lhs));
        }
        let value = self.expr()?;
        match lhs {
            Expr::Var(name) => Ok(Stmt::Assign {
                name,
                index: None,
                value,
            }),
            Expr::Index { array, index } => match *array {
                Expr::Var(name) => Ok(Stmt::Assign {
                    name,
                    index: Some(*index),
                    value,
                }),
                _ => Err(ParseError::new(at.0, at.1, "invalid assignment target")),
            },
            _ => Err(ParseError::new(at.0, at.1, "invalid assignment target")),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let e = self.binary(1);
        self.leave();
        e
    }

    fn binary_op(tok: &Tok) -> Option<BinaryOp> {
        Some(match tok {
            Tok::OrOr => BinaryOp::Or,
            Tok::AndAnd => BinaryOp::And,
            Tok::EqEq => BinaryOp::Eq,
            Tok::NotEq => BinaryOp::Ne,
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ge => BinaryOp::Ge,
            Tok::Plus => BinaryOp::Add,
            Tok::Minus => BinaryOp::Sub,
            Tok::Star => BinaryOp::Mul,
            Tok::Slash => BinaryOp::Div,
            Tok::Percent => BinaryOp::Rem,
            _ => return None,
        })
    }

    /// Precedence climbing; all binary operators are left-associative.
    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = Self::binary_op(self.peek()) {
            if op.precedence() < min_prec {
                break;
            }
            self.advance();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        let op = match self.peek() {
            Tok::Minus => UnaryOp::Neg,
            Tok::Bang => UnaryOp::Not,
            _ => return self.postfix(),
        };
        self.advance();
        self.enter()?;
        let operand = self.unary();
        self.leave();
        Ok(Expr::Unary {
            op,
            operand: Box::new(operand?),
        })
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        while self.eat(&Tok::LBracket) {
            let index = self.expr()?;
            self.expect(Tok::RBracket)?;
            e = Expr::Index {
                array: Box::new(e),
                index: Box::new(index),
            };
        }
        Ok(e)
    }

    fn expr_list(&mut self, close: Tok) -> Result<Vec<Expr>, ParseError> {
        let mut items = Vec::new();
        if self.peek() != &close {
            loop {
                items.push(self.expr()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(close)?;
        Ok(items)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.advance();
                Ok(Expr::Int(v))
            }
            Tok::True => {
                self.advance();
                Ok(Expr::Bool(true))
            }
            Tok::False => {
                self.advance();
                Ok(Expr::Bool(false))
            }
            Tok::Ident(name) => {
                self.advance();
                if self.eat(&Tok::LParen) {
                    let args = self.expr_list(Tok::RParen)?;
                    Ok(Expr::Call { callee: name, args })
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::LBracket => {
                self.advance();
                Ok(Expr::ArrayLit(self.expr_list(Tok::RBracket)?))
            }
            Tok::New => {
                self.advance();
                self.expect(Tok::IntKw)?;
                self.expect(Tok::LBracket)?;
                let size = self.expr()?;
                self.expect(Tok::RBracket)?;
                Ok(Expr::NewArray(Box::new(size)))
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}
