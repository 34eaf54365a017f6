//! Recursive-descent parser for MiniLang.
//!
//! ```text
//! program := decl* stmt*
//! decl    := "input" IDENT ":" ("int" | "string") ";"
//! stmt    := "let" IDENT "=" expr ";" | "if" "(" expr ")" block ("else" block)?
//!          | "accept" ";" | "reject" ";"
//! expr    := and ("||" and)*
//! and     := unary ("&&" unary)*
//! unary   := "!" unary | cmp
//! cmp     := primary (("==" | "!=" | "<" | "<=" | ">" | ">=") primary)?
//! primary := INT | STRING | IDENT | "(" expr ")" | call
//! ```

use serde::Serialize;
use thiserror::Error;

use crate::ast::{CmpOp, Expr, ExprKind, InputDecl, InputType, Program, Span, Stmt, StmtKind};
use crate::lexer::{tokenize, Tok};
use crate::validate::{validate, ValidationError};

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub message: String,
    pub span: Span,
}

impl ParseError {
    pub(crate) fn new(message: impl Into<String>, span: Span) -> Self {
        ParseError {
            message: message.into(),
            span,
        }
    }
}

/// Failure of [`parse`]: either a syntax error or a non-empty list of
/// validation errors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("{} validation error(s), first: {}", .0.len(), .0[0])]
    Validation(Vec<ValidationError>),
}

/// Parses and validates MiniLang source.
pub fn parse(source: &str) -> Result<Program, FrontendError> {
    let program = parse_syntax(source)?;
    let errors = validate(&program);
    if errors.is_empty() {
        Ok(program)
    } else {
        Err(FrontendError::Validation(errors))
    }
}

/// Like [`parse`], for raw bytes that may not be UTF-8.
pub fn parse_bytes(source: &[u8]) -> Result<Program, FrontendError> {
    match std::str::from_utf8(source) {
        Ok(text) => parse(text),
        Err(e) => {
            let offset = e.valid_up_to();
            let prefix = &source[..offset];
            let line = prefix.iter().filter(|&&b| b == b'\n').count() as u32 + 1;
            let line_start = prefix.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
            let column = std::str::from_utf8(&prefix[line_start..])
                .map_or(1, |s| s.chars().count() as u32 + 1);
            Err(ParseError::new(
                "source is not valid UTF-8",
                Span {
                    line,
                    column,
                    offset,
                    len: e.error_len().unwrap_or(source.len() - offset),
                },
            )
            .into())
        }
    }
}

/// Syntax only; the result may violate scoping and typing rules.
pub fn parse_syntax(source: &str) -> Result<Program, ParseError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        depth: 0,
    };
    parser.program()
}

struct Parser {
    tokens: Vec<(Tok, Span)>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].1
    }

    fn prev_span(&self) -> Span {
        self.tokens[self.pos.saturating_sub(1)].1
    }

    fn advance(&mut self) -> (Tok, Span) {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        ParseError::new(
            format!("expected {expected}, found {}", self.peek().describe()),
            self.span(),
        )
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<Span, ParseError> {
        if *self.peek() == tok {
            Ok(self.advance().1)
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn ident(&mut self) -> Result<(String, Span), ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.advance().1;
                Ok((name, span))
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError::new("nesting too deep", self.span()));
        }
        Ok(())
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut inputs = Vec::new();
        while *self.peek() == Tok::Input {
            let start = self.advance().1;
            let (name, _) = self.ident()?;
            self.expect(Tok::Colon, "`:`")?;
            let ty = match self.advance() {
                (Tok::IntTy, _) => InputType::Int,
                (Tok::StringTy, _) => InputType::String,
                (tok, span) => {
                    return Err(ParseError::new(
                        format!("expected `int` or `string`, found {}", tok.describe()),
                        span,
                    ))
                }
            };
            let end = self.expect(Tok::Semi, "`;`")?;
            inputs.push(InputDecl {
                name,
                ty,
                span: start.to(end),
            });
        }
        let mut body = Vec::new();
        while *self.peek() != Tok::Eof {
            if *self.peek() == Tok::Input {
                return Err(ParseError::new(
                    "input declarations must precede all statements",
                    self.span(),
                ));
            }
            body.push(self.stmt()?);
        }
        Ok(Program { inputs, body })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.enter()?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut stmts = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if *self.peek() == Tok::Eof {
                return Err(self.unexpected("`}`"));
            }
            stmts.push(self.stmt()?);
        }
        self.depth -= 1;
        Ok(stmts)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let start = self.span();
        let kind = match self.peek() {
            Tok::Let => {
                self.advance();
                let (name, _) = self.ident()?;
                self.expect(Tok::Assign, "`=`")?;
                let value = self.expr()?;
                self.expect(Tok::Semi, "`;`")?;
                StmtKind::Let { name, value }
            }
            Tok::If => {
                self.advance();
                self.expect(Tok::LParen, "`(`")?;
                let cond = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                let then_block = self.block()?;
                let else_block = if self.eat(&Tok::Else) {
                    Some(self.block()?)
                } else {
                    None
                };
                StmtKind::If {
                    cond,
                    then_block,
                    else_block,
                }
            }
            Tok::Accept => {
                self.advance();
                self.expect(Tok::Semi, "`;`")?;
                StmtKind::Accept
            }
            Tok::Reject => {
                self.advance();
                self.expect(Tok::Semi, "`;`")?;
                StmtKind::Reject
            }
            _ => return Err(self.unexpected("statement")),
        };
        Ok(Stmt {
            kind,
            span: start.to(self.prev_span()),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.and()?;
        while self.eat(&Tok::OrOr) {
            let rhs = self.and()?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr::with_span(ExprKind::Or(Box::new(lhs), Box::new(rhs)), span);
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.unary()?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr::with_span(ExprKind::And(Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Bang {
            let start = self.advance().1;
            self.enter()?;
            let inner = self.unary()?;
            self.depth -= 1;
            let span = start.to(inner.span);
            return Ok(Expr::with_span(ExprKind::Not(Box::new(inner)), span));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.primary()?;
        let op = match self.peek() {
            Tok::EqEq => CmpOp::Eq,
            Tok::NotEq => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return Ok(lhs),
        };
        self.advance();
        let rhs = self.primary()?;
        if matches!(
            self.peek(),
            Tok::EqEq | Tok::NotEq | Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge
        ) {
            return Err(ParseError::new(
                "comparison operators do not chain; add parentheses",
                self.span(),
            ));
        }
        let span = lhs.span.to(rhs.span);
        Ok(Expr::with_span(
            ExprKind::Cmp {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            span,
        ))
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let start = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(n) => {
                self.advance();
                ExprKind::Int(n)
            }
            Tok::Str(bytes) => {
                self.advance();
                ExprKind::Str(bytes)
            }
            Tok::Ident(name) => {
                self.advance();
                ExprKind::Var(name)
            }
            Tok::LParen => {
                self.advance();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                // parentheses are not kept in the tree
                return Ok(inner);
            }
            Tok::Digest(_) => {
                return Err(ParseError::new(
                    "digest literals may only appear as arguments of hash_eq or hash_contains",
                    start,
                ))
            }
            Tok::Contains => {
                self.call_open()?;
                let haystack = self.expr()?;
                self.expect(Tok::Comma, "`,`")?;
                let needle = self.expr()?;
                self.call_close()?;
                ExprKind::Contains {
                    haystack: Box::new(haystack),
                    needle: Box::new(needle),
                }
            }
            Tok::Length => {
                self.call_open()?;
                let value = self.expr()?;
                self.call_close()?;
                ExprKind::Length(Box::new(value))
            }
            Tok::Substring => {
                self.call_open()?;
                let value = self.expr()?;
                self.expect(Tok::Comma, "`,`")?;
                let start_expr = self.expr()?;
                self.expect(Tok::Comma, "`,`")?;
                let len = self.expr()?;
                self.call_close()?;
                ExprKind::Substring {
                    value: Box::new(value),
                    start: Box::new(start_expr),
                    len: Box::new(len),
                }
            }
            Tok::HashEq => {
                self.call_open()?;
                let value = self.expr()?;
                self.expect(Tok::Comma, "`,`")?;
                let digest = self.digest_arg()?;
                self.call_close()?;
                ExprKind::HashEq {
                    value: Box::new(value),
                    digest,
                }
            }
            Tok::HashContains => {
                self.call_open()?;
                let value = self.expr()?;
                self.expect(Tok::Comma, "`,`")?;
                let digest = self.digest_arg()?;
                self.expect(Tok::Comma, "`,`")?;
                let window = match self.advance() {
                    (Tok::Int(n), _) => n,
                    (tok, span) => {
                        return Err(ParseError::new(
                            format!("window length must be an integer literal, found {}", tok.describe()),
                            span,
                        ))
                    }
                };
                self.call_close()?;
                ExprKind::HashContains {
                    value: Box::new(value),
                    digest,
                    window,
                }
            }
            _ => return Err(self.unexpected("expression")),
        };
        Ok(Expr::with_span(kind, start.to(self.prev_span())))
    }

    fn call_open(&mut self) -> Result<(), ParseError> {
        self.advance();
        self.enter()?;
        self.expect(Tok::LParen, "`(`")?;
        Ok(())
    }

    fn call_close(&mut self) -> Result<(), ParseError> {
        self.expect(Tok::RParen, "`)`")?;
        self.depth -= 1;
        Ok(())
    }

    fn digest_arg(&mut self) -> Result<crate::crypto::Digest, ParseError> {
        match self.advance() {
            (Tok::Digest(d), _) => Ok(d),
            (tok, span) => Err(ParseError::new(
                format!("expected digest literal, found {}", tok.describe()),
                span,
            )),
        }
    }
}
