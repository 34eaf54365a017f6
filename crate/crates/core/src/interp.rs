//! Deterministic evaluator with cost accounting.
//!
//! Cost model:
//! - every statement executed and every expression node evaluated costs one step;
//! - `contains` additionally costs one step per window position compared;
//! - `hash_contains` costs one step, one hash invocation and `window + 1`
//!   hashed bytes per window;
//! - `hash_eq` costs one hash invocation and the length of the tagged encoding.
//!
//! Salt bytes are not counted in `bytes_hashed`; they are a per-digest constant.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign};
use std::rc::Rc;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{CmpOp, Expr, ExprKind, InputType, Program, Site, Stmt, StmtKind};
use crate::crypto::{digest, digest_eq, encode_value, hash_contains};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
pub struct CostReport {
    pub steps: u64,
    pub hash_invocations: u64,
    pub bytes_hashed: u64,
}

impl CostReport {
    /// Scalar cost: steps plus hashed bytes.
    pub fn total(&self) -> u64 {
        self.steps + self.bytes_hashed
    }
}

impl Add for CostReport {
    type Output = CostReport;

    fn add(self, rhs: CostReport) -> CostReport {
        CostReport {
            steps: self.steps + rhs.steps,
            hash_invocations: self.hash_invocations + rhs.hash_invocations,
            bytes_hashed: self.bytes_hashed + rhs.bytes_hashed,
        }
    }
}

impl AddAssign for CostReport {
    fn add_assign(&mut self, rhs: CostReport) {
        *self = *self + rhs;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("input `{0}` is declared but not bound")]
    MissingInput(String),
    #[error("`{0}` is bound but not a declared input")]
    UnexpectedInput(String),
    #[error("input `{name}` is declared {expected} but bound to a {found} value")]
    InputType {
        name: String,
        expected: InputType,
        found: InputType,
    },
    #[error("type fault (program was not validated): {0}")]
    TypeFault(String),
}

/// Values for a program's declared inputs, keyed by name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct InputBinding(BTreeMap<String, Value>);

impl InputBinding {
    pub fn new() -> Self {
        InputBinding::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: Value) -> Self {
        self.insert(name, value);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Value) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }

    /// Builds a binding from `name=value` assignments, typing each value by
    /// the program's declaration.
    pub fn from_assignments<S: AsRef<str>>(
        program: &Program,
        assignments: &[S],
    ) -> Result<Self, String> {
        let mut binding = InputBinding::new();
        for assignment in assignments {
            let assignment = assignment.as_ref();
            let (name, text) = assignment
                .split_once('=')
                .ok_or_else(|| format!("expected name=value, got {assignment:?}"))?;
            let ty = program
                .input_type(name)
                .ok_or_else(|| format!("`{name}` is not a declared input"))?;
            if binding.get(name).is_some() {
                return Err(format!("input `{name}` bound twice"));
            }
            binding.insert(name, Value::parse_as(ty, text)?);
        }
        binding.check(program).map_err(|e| e.to_string())?;
        Ok(binding)
    }

    /// Checks that every declared input is bound exactly once with its declared type.
    pub fn check(&self, program: &Program) -> Result<(), EvalError> {
        for decl in &program.inputs {
            match self.0.get(&decl.name) {
                None => return Err(EvalError::MissingInput(decl.name.clone())),
                Some(v) if v.ty() != decl.ty => {
                    return Err(EvalError::InputType {
                        name: decl.name.clone(),
                        expected: decl.ty,
                        found: v.ty(),
                    })
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = self.0.keys().find(|k| program.input_type(k).is_none()) {
            return Err(EvalError::UnexpectedInput(extra.clone()));
        }
        Ok(())
    }
}

/// Runs `program` on `input`. Falling off the end of the body accepts.
pub fn evaluate(program: &Program, input: &InputBinding) -> Result<(Verdict, CostReport), EvalError> {
    input.check(program)?;
    let mut machine = Machine::new(input);
    let verdict = machine.block(&program.body)?.unwrap_or(Verdict::Accept);
    Ok((verdict, machine.cost))
}

/// Evaluates one conditional site in isolation: the `let` bindings in scope
/// at the site, then its condition.
pub fn eval_site(site: &Site<'_>, input: &InputBinding) -> Result<(bool, CostReport), EvalError> {
    let mut machine = Machine::new(input);
    for (name, value) in &site.lets {
        let v = machine.expr(value)?;
        machine.env.push((name, v));
    }
    let b = machine.expr(site.cond)?.bool()?;
    Ok((b, machine.cost))
}

#[derive(Debug, Clone)]
enum Rt {
    Int(u64),
    Str(Rc<[u8]>),
    Bool(bool),
}

impl Rt {
    fn from_value(v: &Value) -> Rt {
        match v {
            Value::Int(n) => Rt::Int(*n),
            Value::Str(s) => Rt::Str(s.as_slice().into()),
        }
    }

    fn int(self) -> Result<u64, EvalError> {
        match self {
            Rt::Int(n) => Ok(n),
            other => Err(EvalError::TypeFault(format!("expected int, found {other:?}"))),
        }
    }

    fn str(self) -> Result<Rc<[u8]>, EvalError> {
        match self {
            Rt::Str(s) => Ok(s),
            other => Err(EvalError::TypeFault(format!("expected string, found {other:?}"))),
        }
    }

    fn bool(self) -> Result<bool, EvalError> {
        match self {
            Rt::Bool(b) => Ok(b),
            other => Err(EvalError::TypeFault(format!("expected bool, found {other:?}"))),
        }
    }

    fn hashable(self) -> Result<Value, EvalError> {
        match self {
            Rt::Int(n) => Ok(Value::Int(n)),
            Rt::Str(s) => Ok(Value::Str(s.to_vec())),
            Rt::Bool(_) => Err(EvalError::TypeFault("cannot hash a bool".to_string())),
        }
    }
}

struct Machine<'a> {
    input: &'a InputBinding,
    env: Vec<(&'a str, Rt)>,
    cost: CostReport,
}

impl<'a> Machine<'a> {
    fn new(input: &'a InputBinding) -> Self {
        Machine {
            input,
            env: Vec::new(),
            cost: CostReport::default(),
        }
    }

    fn lookup(&self, name: &str) -> Result<Rt, EvalError> {
        if let Some((_, v)) = self.env.iter().rev().find(|(n, _)| *n == name) {
            return Ok(v.clone());
        }
        self.input
            .get(name)
            .map(Rt::from_value)
            .ok_or_else(|| EvalError::TypeFault(format!("unbound variable `{name}`")))
    }

    fn block(&mut self, stmts: &'a [Stmt]) -> Result<Option<Verdict>, EvalError> {
        let mark = self.env.len();
        let mut result = None;
        for stmt in stmts {
            self.cost.steps += 1;
            match &stmt.kind {
                StmtKind::Let { name, value } => {
                    let v = self.expr(value)?;
                    self.env.push((name, v));
                }
                StmtKind::If {
                    cond,
                    then_block,
                    else_block,
                } => {
                    let taken = if self.expr(cond)?.bool()? {
                        Some(then_block)
                    } else {
                        else_block.as_ref()
                    };
                    if let Some(branch) = taken {
                        if let Some(verdict) = self.block(branch)? {
                            result = Some(verdict);
                            break;
                        }
                    }
                }
                StmtKind::Accept => {
                    result = Some(Verdict::Accept);
                    break;
                }
                StmtKind::Reject => {
                    result = Some(Verdict::Reject);
                    break;
                }
            }
        }
        self.env.truncate(mark);
        Ok(result)
    }

    fn expr(&mut self, e: &Expr) -> Result<Rt, EvalError> {
        self.cost.steps += 1;
        Ok(match &e.kind {
            ExprKind::Int(n) => Rt::Int(*n),
            ExprKind::Str(s) => Rt::Str(s.as_slice().into()),
            ExprKind::Var(name) => self.lookup(name)?,
            ExprKind::Cmp { op, lhs, rhs } => {
                let l = self.expr(lhs)?;
                let r = self.expr(rhs)?;
                Rt::Bool(compare(*op, l, r)?)
            }
            ExprKind::And(a, b) => Rt::Bool(self.expr(a)?.bool()? && self.expr(b)?.bool()?),
            ExprKind::Or(a, b) => Rt::Bool(self.expr(a)?.bool()? || self.expr(b)?.bool()?),
            ExprKind::Not(inner) => Rt::Bool(!self.expr(inner)?.bool()?),
            ExprKind::Contains { haystack, needle } => {
                let h = self.expr(haystack)?.str()?;
                let n = self.expr(needle)?.str()?;
                let (found, positions) = naive_find(&h, &n);
                self.cost.steps += positions;
                Rt::Bool(found)
            }
            ExprKind::Length(inner) => Rt::Int(self.expr(inner)?.str()?.len() as u64),
            ExprKind::Substring { value, start, len } => {
                let s = self.expr(value)?.str()?;
                let start = self.expr(start)?.int()?;
                let len = self.expr(len)?.int()?;
                Rt::Str(substring(&s, start, len).into())
            }
            ExprKind::HashEq { value, digest: target } => {
                let v = self.expr(value)?.hashable()?;
                let data = encode_value(&v);
                self.cost.hash_invocations += 1;
                self.cost.bytes_hashed += data.len() as u64;
                let d = digest(&data, target.config());
                Rt::Bool(digest_eq(&d, target).expect("same config by construction"))
            }
            ExprKind::HashContains {
                value,
                digest: target,
                window,
            } => {
                let h = self.expr(value)?.str()?;
                if *window == 0 {
                    return Err(EvalError::TypeFault("window length 0".to_string()));
                }
                let (found, windows) = hash_contains(&h, target, *window);
                self.cost.steps += windows;
                self.cost.hash_invocations += windows;
                self.cost.bytes_hashed += windows * (window + 1);
                Rt::Bool(found)
            }
        })
    }
}

fn compare(op: CmpOp, l: Rt, r: Rt) -> Result<bool, EvalError> {
    use std::cmp::Ordering;
    let ord: Ordering = match (l, r) {
        (Rt::Int(a), Rt::Int(b)) => a.cmp(&b),
        (Rt::Str(a), Rt::Str(b)) => a.cmp(&b),
        (Rt::Bool(a), Rt::Bool(b)) if !op.is_order() => a.cmp(&b),
        (l, r) => {
            return Err(EvalError::TypeFault(format!(
                "cannot apply {} to {l:?} and {r:?}",
                op.as_str()
            )))
        }
    };
    Ok(match op {
        CmpOp::Eq => ord.is_eq(),
        CmpOp::Ne => ord.is_ne(),
        CmpOp::Lt => ord.is_lt(),
        CmpOp::Le => ord.is_le(),
        CmpOp::Gt => ord.is_gt(),
        CmpOp::Ge => ord.is_ge(),
    })
}

/// Out-of-range requests yield the empty string.
fn substring(s: &[u8], start: u64, len: u64) -> &[u8] {
    let end = start.checked_add(len);
    match end {
        Some(end) if end <= s.len() as u64 => &s[start as usize..end as usize],
        _ => &[],
    }
}

/// Window-by-window search; returns the match flag and positions compared.
fn naive_find(haystack: &[u8], needle: &[u8]) -> (bool, u64) {
    if needle.is_empty() {
        return (true, 0);
    }
    let mut positions = 0;
    for window in haystack.windows(needle.len()) {
        positions += 1;
        if window == needle {
            return (true, positions);
        }
    }
    (false, positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn run(src: &str, binding: InputBinding) -> (Verdict, CostReport) {
        evaluate(&parse(src).unwrap(), &binding).unwrap()
    }

    const PHP: &str = r#"input s: string; if (contains(s, "2250738585072011")) { reject; } accept;"#;

    #[test]
    fn point_equality() {
        let src = "input x: int; if (x == 7) { reject; } accept;";
        assert_eq!(run(src, InputBinding::new().with("x", Value::Int(7))).0, Verdict::Reject);
        assert_eq!(run(src, InputBinding::new().with("x", Value::Int(8))).0, Verdict::Accept);
    }

    #[test]
    fn php_filter() {
        let attack = Value::Str(b"value=2.2250738585072011e-308&x=1".to_vec());
        assert_eq!(run(PHP, InputBinding::new().with("s", attack)).0, Verdict::Reject);
        let (verdict, cost) = run(PHP, InputBinding::new().with("s", Value::Str(b"hello".to_vec())));
        assert_eq!(verdict, Verdict::Accept);
        assert_eq!(cost.hash_invocations, 0);
        assert_eq!(cost.bytes_hashed, 0);
    }

    #[test]
    fn falling_off_the_end_accepts() {
        assert_eq!(run("input x: int;", InputBinding::new().with("x", Value::Int(1))).0, Verdict::Accept);
    }

    #[test]
    fn cost_counts_nodes_and_windows() {
        // if-stmt (1) + contains (1) + var (1) + literal (1) + 3 positions, then accept (1)
        let src = r#"input s: string; if (contains(s, "zz")) { reject; } accept;"#;
        let (_, cost) = run(src, InputBinding::new().with("s", Value::Str(b"abcd".to_vec())));
        assert_eq!(cost, CostReport { steps: 8, hash_invocations: 0, bytes_hashed: 0 });
    }

    #[test]
    fn substring_semantics() {
        assert_eq!(substring(b"hello", 1, 3), b"ell");
        assert_eq!(substring(b"hello", 0, 5), b"hello");
        assert_eq!(substring(b"hello", 3, 3), b"");
        assert_eq!(substring(b"hello", 6, 0), b"");
        assert_eq!(substring(b"hello", u64::MAX, 2), b"");
        let src = r#"input s: string; if (substring(s, 2, 10) == "") { reject; } accept;"#;
        assert_eq!(run(src, InputBinding::new().with("s", Value::Str(b"abc".to_vec()))).0, Verdict::Reject);
    }

    #[test]
    fn lets_are_block_scoped_at_runtime() {
        let src = r#"input s: string;
            let head = substring(s, 0, 3);
            if (head == "GET") { let n = length(s); if (n > 10) { reject; } }
            if (head < "B") { reject; }
            accept;"#;
        let bind = |s: &[u8]| InputBinding::new().with("s", Value::Str(s.to_vec()));
        assert_eq!(run(src, bind(b"GET /index.html")).0, Verdict::Reject);
        assert_eq!(run(src, bind(b"GET /")).0, Verdict::Accept);
        assert_eq!(run(src, bind(b"ABC")).0, Verdict::Reject);
    }

    #[test]
    fn binding_errors() {
        let p = parse("input x: int; input s: string;").unwrap();
        assert_eq!(
            evaluate(&p, &InputBinding::new().with("x", Value::Int(1))),
            Err(EvalError::MissingInput("s".into()))
        );
        let wrong = InputBinding::new().with("x", Value::Str(vec![])).with("s", Value::Str(vec![]));
        assert!(matches!(evaluate(&p, &wrong), Err(EvalError::InputType { .. })));
        let extra = InputBinding::new()
            .with("x", Value::Int(1))
            .with("s", Value::Str(vec![]))
            .with("t", Value::Int(2));
        assert_eq!(evaluate(&p, &extra), Err(EvalError::UnexpectedInput("t".into())));
    }

    #[test]
    fn assignments() {
        let p = parse("input x: int; input s: string;").unwrap();
        let b = InputBinding::from_assignments(&p, &["x=5", "s=a=b\\x00"]).unwrap();
        assert_eq!(b.get("s"), Some(&Value::Str(b"a=b\0".to_vec())));
        assert!(InputBinding::from_assignments(&p, &["x=5"]).is_err());
        assert!(InputBinding::from_assignments(&p, &["x=5", "x=6", "s="]).is_err());
        assert!(InputBinding::from_assignments(&p, &["y=5"]).is_err());
    }

    #[test]
    fn determinism() {
        let p = parse(PHP).unwrap();
        let b = InputBinding::new().with("s", Value::Str(vec![b'9'; 300]));
        assert_eq!(evaluate(&p, &b), evaluate(&p, &b));
    }
}
