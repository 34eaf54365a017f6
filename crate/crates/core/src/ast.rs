//! MiniLang syntax tree.
//!
//! Equality on nodes is structural: spans are carried for diagnostics but
//! never compared, so a parsed program equals its re-parsed pretty print.

use std::fmt;

use serde::Serialize;

use crate::crypto::Digest;

/// Source location of a node: 1-based line and column, byte offset and byte length.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Span {
    pub line: u32,
    pub column: u32,
    pub offset: usize,
    pub len: usize,
}

impl Span {
    pub fn end(&self) -> usize {
        self.offset + self.len
    }

    /// Span from the start of `self` to the end of `other`.
    pub fn to(self, other: Span) -> Span {
        Span {
            len: other.end().saturating_sub(self.offset),
            ..self
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputType {
    Int,
    String,
}

impl fmt::Display for InputType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputType::Int => "int",
            InputType::String => "string",
        })
    }
}

/// Expression types; booleans only arise from conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Type {
    Int,
    String,
    Bool,
}

impl From<InputType> for Type {
    fn from(t: InputType) -> Self {
        match t {
            InputType::Int => Type::Int,
            InputType::String => Type::String,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Int => "int",
            Type::String => "string",
            Type::Bool => "bool",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_order(self) -> bool {
        matches!(self, CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge)
    }
}

#[derive(Debug, Clone)]
pub struct Program {
    pub inputs: Vec<InputDecl>,
    pub body: Vec<Stmt>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.inputs == other.inputs && self.body == other.body
    }
}

impl Program {
    pub fn input_type(&self, name: &str) -> Option<InputType> {
        self.inputs.iter().find(|d| d.name == name).map(|d| d.ty)
    }

    /// Every `if` statement in source order (pre-order; then-block before
    /// else-block), with the `let` bindings lexically visible at it.
    pub fn sites(&self) -> Vec<Site<'_>> {
        let mut sites = Vec::new();
        let mut scope = Vec::new();
        collect_sites(&self.body, &mut scope, &mut sites);
        sites
    }
}

fn collect_sites<'p>(
    block: &'p [Stmt],
    scope: &mut Vec<(&'p str, &'p Expr)>,
    out: &mut Vec<Site<'p>>,
) {
    let mark = scope.len();
    for stmt in block {
        match &stmt.kind {
            StmtKind::Let { name, value } => scope.push((name, value)),
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                out.push(Site {
                    index: out.len(),
                    span: stmt.span,
                    cond,
                    lets: scope.clone(),
                });
                collect_sites(then_block, scope, out);
                if let Some(else_block) = else_block {
                    collect_sites(else_block, scope, out);
                }
            }
            StmtKind::Accept | StmtKind::Reject => {}
        }
    }
    scope.truncate(mark);
}

/// A conditional site: one `if` statement's condition.
#[derive(Debug, Clone)]
pub struct Site<'p> {
    pub index: usize,
    pub span: Span,
    pub cond: &'p Expr,
    /// `let` bindings in scope at the `if`, outermost first.
    pub lets: Vec<(&'p str, &'p Expr)>,
}

#[derive(Debug, Clone)]
pub struct InputDecl {
    pub name: String,
    pub ty: InputType,
    pub span: Span,
}

impl PartialEq for InputDecl {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.ty == other.ty
    }
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

impl PartialEq for Stmt {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Self {
        Stmt {
            kind,
            span: Span::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Let {
        name: String,
        value: Expr,
    },
    If {
        cond: Expr,
        then_block: Vec<Stmt>,
        else_block: Option<Vec<Stmt>>,
    },
    Accept,
    Reject,
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(u64),
    Str(Vec<u8>),
    Var(String),
    Cmp {
        op: CmpOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Contains {
        haystack: Box<Expr>,
        needle: Box<Expr>,
    },
    Length(Box<Expr>),
    Substring {
        value: Box<Expr>,
        start: Box<Expr>,
        len: Box<Expr>,
    },
    HashEq {
        value: Box<Expr>,
        digest: Digest,
    },
    HashContains {
        value: Box<Expr>,
        digest: Digest,
        window: u64,
    },
}

impl Expr {
    pub fn new(kind: ExprKind) -> Self {
        Expr {
            kind,
            span: Span::default(),
        }
    }

    pub fn with_span(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    pub fn int(n: u64) -> Self {
        Expr::new(ExprKind::Int(n))
    }

    pub fn str(bytes: impl Into<Vec<u8>>) -> Self {
        Expr::new(ExprKind::Str(bytes.into()))
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::new(ExprKind::Var(name.into()))
    }

    pub fn cmp(op: CmpOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::new(ExprKind::Cmp {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        })
    }

    pub fn and(lhs: Expr, rhs: Expr) -> Self {
        Expr::new(ExprKind::And(Box::new(lhs), Box::new(rhs)))
    }

    pub fn or(lhs: Expr, rhs: Expr) -> Self {
        Expr::new(ExprKind::Or(Box::new(lhs), Box::new(rhs)))
    }

    pub fn not(inner: Expr) -> Self {
        Expr::new(ExprKind::Not(Box::new(inner)))
    }

    pub fn contains(haystack: Expr, needle: Expr) -> Self {
        Expr::new(ExprKind::Contains {
            haystack: Box::new(haystack),
            needle: Box::new(needle),
        })
    }

    /// Direct children in evaluation order.
    pub fn children(&self) -> Vec<&Expr> {
        match &self.kind {
            ExprKind::Int(_) | ExprKind::Str(_) | ExprKind::Var(_) => Vec::new(),
            ExprKind::Cmp { lhs, rhs, .. } => vec![lhs, rhs],
            ExprKind::And(a, b) | ExprKind::Or(a, b) => vec![a, b],
            ExprKind::Not(e) | ExprKind::Length(e) => vec![e],
            ExprKind::Contains { haystack, needle } => vec![haystack, needle],
            ExprKind::Substring { value, start, len } => vec![value, start, len],
            ExprKind::HashEq { value, .. } | ExprKind::HashContains { value, .. } => vec![value],
        }
    }

    /// Names of all variables referenced in this expression.
    pub fn free_vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if let ExprKind::Var(name) = &e.kind {
                if !out.contains(&name.as_str()) {
                    out.push(name.as_str());
                }
            }
            stack.extend(e.children());
        }
        out
    }
}
