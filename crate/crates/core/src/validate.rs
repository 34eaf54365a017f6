//! Scope and type checking.

use std::fmt;

use serde::Serialize;

use crate::ast::{Expr, ExprKind, Program, Span, Stmt, StmtKind, Type};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationCode {
    DuplicateInput,
    ShadowedName,
    UndeclaredVariable,
    TypeMismatch,
    InvalidWindowLength,
}

impl ValidationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ValidationCode::DuplicateInput => "duplicate_input",
            ValidationCode::ShadowedName => "shadowed_name",
            ValidationCode::UndeclaredVariable => "undeclared_variable",
            ValidationCode::TypeMismatch => "type_mismatch",
            ValidationCode::InvalidWindowLength => "invalid_window_length",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationError {
    pub code: ValidationCode,
    pub message: String,
    pub span: Span,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: [{}] {}", self.span, self.code.as_str(), self.message)
    }
}

impl std::error::Error for ValidationError {}

/// Checks every program invariant; an empty result means the program is valid.
pub fn validate(program: &Program) -> Vec<ValidationError> {
    let mut checker = Checker {
        scope: Vec::new(),
        errors: Vec::new(),
    };
    for decl in &program.inputs {
        if checker.lookup(&decl.name).is_some() {
            checker.error(
                ValidationCode::DuplicateInput,
                format!("input `{}` is declared more than once", decl.name),
                decl.span,
            );
        } else {
            checker.scope.push((decl.name.clone(), decl.ty.into()));
        }
    }
    checker.block(&program.body);
    checker.errors
}

struct Checker {
    scope: Vec<(String, Type)>,
    errors: Vec<ValidationError>,
}

impl Checker {
    fn error(&mut self, code: ValidationCode, message: String, span: Span) {
        self.errors.push(ValidationError {
            code,
            message,
            span,
        });
    }

    fn lookup(&self, name: &str) -> Option<Type> {
        self.scope
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, t)| *t)
    }

    fn block(&mut self, stmts: &[Stmt]) {
        let mark = self.scope.len();
        for stmt in stmts {
            self.stmt(stmt);
        }
        self.scope.truncate(mark);
    }

    fn stmt(&mut self, stmt: &Stmt) {
        match &stmt.kind {
            StmtKind::Let { name, value } => {
                let ty = self.expr(value);
                if self.lookup(name).is_some() {
                    self.error(
                        ValidationCode::ShadowedName,
                        format!("`{name}` is already bound in this scope"),
                        stmt.span,
                    );
                } else if let Some(ty) = ty {
                    self.scope.push((name.clone(), ty));
                }
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                self.expect_type(cond, Type::Bool, "if condition");
                self.block(then_block);
                if let Some(else_block) = else_block {
                    self.block(else_block);
                }
            }
            StmtKind::Accept | StmtKind::Reject => {}
        }
    }

    fn expect_type(&mut self, e: &Expr, want: Type, what: &str) -> Option<Type> {
        let got = self.expr(e)?;
        if got != want {
            self.error(
                ValidationCode::TypeMismatch,
                format!("{what} must be {want}, found {got}"),
                e.span,
            );
            return None;
        }
        Some(got)
    }

    /// Returns `None` when the type could not be determined; an error has
    /// already been recorded in that case.
    fn expr(&mut self, e: &Expr) -> Option<Type> {
        match &e.kind {
            ExprKind::Int(_) => Some(Type::Int),
            ExprKind::Str(_) => Some(Type::String),
            ExprKind::Var(name) => {
                let ty = self.lookup(name);
                if ty.is_none() {
                    self.error(
                        ValidationCode::UndeclaredVariable,
                        format!("`{name}` is not a declared input or an earlier let binding"),
                        e.span,
                    );
                }
                ty
            }
            ExprKind::Cmp { op, lhs, rhs } => {
                let (l, r) = (self.expr(lhs), self.expr(rhs));
                let (l, r) = (l?, r?);
                if l != r {
                    self.error(
                        ValidationCode::TypeMismatch,
                        format!("cannot compare {l} with {r}"),
                        e.span,
                    );
                } else if op.is_order() && l == Type::Bool {
                    self.error(
                        ValidationCode::TypeMismatch,
                        format!("`{}` is not defined on bool", op.as_str()),
                        e.span,
                    );
                }
                Some(Type::Bool)
            }
            ExprKind::And(a, b) | ExprKind::Or(a, b) => {
                self.expect_type(a, Type::Bool, "logical operand");
                self.expect_type(b, Type::Bool, "logical operand");
                Some(Type::Bool)
            }
            ExprKind::Not(inner) => {
                self.expect_type(inner, Type::Bool, "operand of `!`");
                Some(Type::Bool)
            }
            ExprKind::Contains { haystack, needle } => {
                self.expect_type(haystack, Type::String, "contains haystack");
                self.expect_type(needle, Type::String, "contains needle");
                Some(Type::Bool)
            }
            ExprKind::Length(inner) => {
                self.expect_type(inner, Type::String, "length argument");
                Some(Type::Int)
            }
            ExprKind::Substring { value, start, len } => {
                self.expect_type(value, Type::String, "substring argument");
                self.expect_type(start, Type::Int, "substring start");
                self.expect_type(len, Type::Int, "substring length");
                Some(Type::String)
            }
            ExprKind::HashEq { value, .. } => {
                if self.expr(value) == Some(Type::Bool) {
                    self.error(
                        ValidationCode::TypeMismatch,
                        "hash_eq argument must be int or string, found bool".to_string(),
                        value.span,
                    );
                }
                Some(Type::Bool)
            }
            ExprKind::HashContains { value, window, .. } => {
                self.expect_type(value, Type::String, "hash_contains argument");
                if *window == 0 {
                    self.error(
                        ValidationCode::InvalidWindowLength,
                        "hash_contains window length must be at least 1".to_string(),
                        e.span,
                    );
                }
                Some(Type::Bool)
            }
        }
    }
}
