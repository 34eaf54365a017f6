//! Hardenability classification of conditionals.
//!
//! A conditional is worth hardening only when a black-box attacker cannot
//! cheaply find an input that satisfies it. Order comparisons against a
//! constant fall to binary search and short secrets fall to enumeration, so
//! both are rejected no matter how the rest of the policy is set.

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::ast::{CmpOp, Expr, ExprKind, Program, Span};
use crate::printer::print_expr;
use crate::value::{escape, Value};

/// Bits credited to any integer literal.
pub const INT_LITERAL_BITS: f64 = 64.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("minimum guess cost must be at least 1 bit, got {0}")]
    Threshold(f64),
    #[error("charset bits per byte must be in [1, 8], got {0}")]
    CharsetBits(f64),
    #[error("minimum needle length must be at least 1")]
    NeedleLen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifierPolicy {
    min_guess_bits: f64,
    min_needle_len: usize,
    charset_bits_per_byte: f64,
}

impl Default for ClassifierPolicy {
    fn default() -> Self {
        ClassifierPolicy {
            min_guess_bits: 64.0,
            min_needle_len: 8,
            charset_bits_per_byte: 8.0,
        }
    }
}

impl ClassifierPolicy {
    pub fn new(
        min_guess_bits: f64,
        min_needle_len: usize,
        charset_bits_per_byte: f64,
    ) -> Result<Self, PolicyError> {
        if !(min_guess_bits >= 1.0) {
            return Err(PolicyError::Threshold(min_guess_bits));
        }
        if !(1.0..=8.0).contains(&charset_bits_per_byte) {
            return Err(PolicyError::CharsetBits(charset_bits_per_byte));
        }
        if min_needle_len == 0 {
            return Err(PolicyError::NeedleLen);
        }
        Ok(ClassifierPolicy {
            min_guess_bits,
            min_needle_len,
            charset_bits_per_byte,
        })
    }

    pub fn min_guess_bits(&self) -> f64 {
        self.min_guess_bits
    }

    pub fn min_needle_len(&self) -> usize {
        self.min_needle_len
    }

    pub fn charset_bits_per_byte(&self) -> f64 {
        self.charset_bits_per_byte
    }

    /// Entropy credited to a literal: 64 bits for ints, length times the
    /// per-byte credit for strings.
    pub fn entropy(&self, value: &Value) -> f64 {
        match value {
            Value::Int(_) => INT_LITERAL_BITS,
            Value::Str(s) => s.len() as f64 * self.charset_bits_per_byte,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HardenableKind {
    PointEquality { var: String, value: Value },
    /// Distinct constants in first-occurrence order.
    SetMembership { var: String, values: Vec<Value> },
    SubstringMatch { haystack: Expr, needle: Vec<u8> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnsupportedReason {
    /// The condition already uses `hash_eq` / `hash_contains`.
    AlreadyHardened,
    /// `!=` or `!` over an equality; satisfying inputs are abundant.
    Negation,
    /// A hardenable test combined with other logic.
    MixedStructure,
    /// A constant compared with something other than a variable.
    NonVariableOperand,
    /// Both sides are constants.
    ConstantCondition,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    RangeCheck,
    SmallGuessingDomain,
    NonConstantComparand,
    Unsupported(UnsupportedReason),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SiteClass {
    Hardenable(HardenableKind),
    NotHardenable(Rejection),
}

/// Verdict for one conditional site.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// Position of the site among the program's `if` statements.
    pub index: usize,
    /// Span of the condition expression.
    pub site: Span,
    pub class: SiteClass,
    /// log2 of the expected number of black-box queries to satisfy the condition.
    pub guess_cost_bits: f64,
    pub reason: String,
}

impl Classification {
    pub fn is_hardenable(&self) -> bool {
        matches!(self.class, SiteClass::Hardenable(_))
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.class {
            SiteClass::Hardenable(HardenableKind::PointEquality { .. }) => "PointEquality",
            SiteClass::Hardenable(HardenableKind::SetMembership { .. }) => "SetMembership",
            SiteClass::Hardenable(HardenableKind::SubstringMatch { .. }) => "SubstringMatch",
            SiteClass::NotHardenable(Rejection::RangeCheck) => "RangeCheck",
            SiteClass::NotHardenable(Rejection::SmallGuessingDomain) => "SmallGuessingDomain",
            SiteClass::NotHardenable(Rejection::NonConstantComparand) => "NonConstantComparand",
            SiteClass::NotHardenable(Rejection::Unsupported(_)) => "Unsupported",
        }
    }

    pub fn detail(&self) -> String {
        match &self.class {
            SiteClass::Hardenable(HardenableKind::PointEquality { var, value }) => {
                format!("{var} == {value}")
            }
            SiteClass::Hardenable(HardenableKind::SetMembership { var, values }) => {
                let values: Vec<String> = values.iter().map(Value::to_literal).collect();
                format!("{var} in {{{}}} (k = {})", values.join(", "), values.len())
            }
            SiteClass::Hardenable(HardenableKind::SubstringMatch { haystack, needle }) => {
                format!(
                    "contains({}, \"{}\") (window {})",
                    print_expr(haystack),
                    escape(needle),
                    needle.len()
                )
            }
            SiteClass::NotHardenable(Rejection::Unsupported(reason)) => {
                format!("{reason:?}")
            }
            SiteClass::NotHardenable(_) => String::new(),
        }
    }
}

impl Serialize for Classification {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Record<'a> {
            index: usize,
            span: Span,
            kind: &'static str,
            detail: String,
            guess_cost_bits: f64,
            hardenable: bool,
            reason: &'a str,
        }
        Record {
            index: self.index,
            span: self.site,
            kind: self.kind_name(),
            detail: self.detail(),
            guess_cost_bits: self.guess_cost_bits,
            hardenable: self.is_hardenable(),
            reason: &self.reason,
        }
        .serialize(serializer)
    }
}

/// Returns the stored guess cost. Range checks carry log2 of the domain's bit
/// width, the query exponent of a binary search.
pub fn estimate_guess_cost(c: &Classification) -> f64 {
    c.guess_cost_bits
}

/// One classification per `if` condition, in source order.
pub fn scan_program(program: &Program, policy: &ClassifierPolicy) -> Vec<Classification> {
    program
        .sites()
        .into_iter()
        .map(|site| {
            let mut c = classify_conditional(site.cond, policy);
            c.index = site.index;
            c
        })
        .collect()
}

pub fn classify_conditional(e: &Expr, policy: &ClassifierPolicy) -> Classification {
    let (class, guess_cost_bits, reason) = classify(e, policy);
    Classification {
        index: 0,
        site: e.span,
        class,
        guess_cost_bits,
        reason,
    }
}

fn literal(e: &Expr) -> Option<Value> {
    match &e.kind {
        ExprKind::Int(n) => Some(Value::Int(*n)),
        ExprKind::Str(s) => Some(Value::Str(s.clone())),
        _ => None,
    }
}

fn rejected(r: Rejection, bits: f64, reason: impl Into<String>) -> (SiteClass, f64, String) {
    (SiteClass::NotHardenable(r), bits, reason.into())
}

fn unsupported(r: UnsupportedReason, reason: impl Into<String>) -> (SiteClass, f64, String) {
    rejected(Rejection::Unsupported(r), 0.0, reason)
}

const RANGE_REASON: &str =
    "order comparison against a constant: the constant is recoverable by binary search";

fn classify(e: &Expr, policy: &ClassifierPolicy) -> (SiteClass, f64, String) {
    if let Some(bits) = range_structure(e) {
        return rejected(Rejection::RangeCheck, bits.log2(), RANGE_REASON);
    }
    match &e.kind {
        ExprKind::Cmp { op, lhs, rhs } => classify_cmp(*op, lhs, rhs, policy),
        ExprKind::Or(..) => classify_or_chain(e, policy),
        ExprKind::Contains { haystack, needle } => match (literal(haystack), literal(needle)) {
            (_, None) => rejected(
                Rejection::NonConstantComparand,
                0.0,
                "needle is not a constant",
            ),
            (Some(_), Some(_)) => unsupported(
                UnsupportedReason::ConstantCondition,
                "both arguments are constants",
            ),
            (None, Some(Value::Str(needle))) => {
                let bits = needle.len() as f64 * policy.charset_bits_per_byte;
                if needle.len() < policy.min_needle_len || bits < policy.min_guess_bits {
                    rejected(
                        Rejection::SmallGuessingDomain,
                        bits,
                        format!(
                            "{}-byte needle ({bits} bits) is recoverable by searching all candidates \
                             (minimum {} bytes and {} bits)",
                            needle.len(),
                            policy.min_needle_len,
                            policy.min_guess_bits
                        ),
                    )
                } else {
                    (
                        SiteClass::Hardenable(HardenableKind::SubstringMatch {
                            haystack: (**haystack).clone(),
                            needle,
                        }),
                        bits,
                        format!("{bits}-bit needle meets the {}-bit threshold", policy.min_guess_bits),
                    )
                }
            }
            (None, Some(Value::Int(_))) => unsupported(UnsupportedReason::Other, "ill-typed needle"),
        },
        ExprKind::HashEq { .. } | ExprKind::HashContains { .. } => unsupported(
            UnsupportedReason::AlreadyHardened,
            "condition is already a digest comparison",
        ),
        ExprKind::Not(_) => unsupported(
            UnsupportedReason::Negation,
            "negated tests are satisfied by almost every input; hardening hides nothing",
        ),
        ExprKind::And(..) => unsupported(
            UnsupportedReason::MixedStructure,
            "conjunctions are not rewritten",
        ),
        _ => unsupported(UnsupportedReason::Other, "not a comparison against a constant"),
    }
}

fn classify_cmp(op: CmpOp, lhs: &Expr, rhs: &Expr, policy: &ClassifierPolicy) -> (SiteClass, f64, String) {
    let (l, r) = (literal(lhs), literal(rhs));
    match (&l, &r) {
        (None, None) => {
            return rejected(
                Rejection::NonConstantComparand,
                0.0,
                "neither side of the comparison is a constant",
            )
        }
        (Some(_), Some(_)) => {
            return unsupported(UnsupportedReason::ConstantCondition, "both sides are constants")
        }
        _ => {}
    }
    if op == CmpOp::Ne {
        return unsupported(
            UnsupportedReason::Negation,
            "`!=` is satisfied by almost every input; hardening it offers no benefit",
        );
    }
    debug_assert_eq!(op, CmpOp::Eq, "order comparisons are range checks");
    let (var, value) = match (&lhs.kind, &rhs.kind, l, r) {
        (ExprKind::Var(v), _, None, Some(value)) | (_, ExprKind::Var(v), Some(value), None) => {
            (v.clone(), value)
        }
        _ => {
            return unsupported(
                UnsupportedReason::NonVariableOperand,
                "constant is compared with a computed expression, not a variable",
            )
        }
    };
    let bits = policy.entropy(&value);
    if bits < policy.min_guess_bits {
        return rejected(
            Rejection::SmallGuessingDomain,
            bits,
            format!(
                "{bits}-bit constant is below the {}-bit threshold and can be enumerated",
                policy.min_guess_bits
            ),
        );
    }
    (
        SiteClass::Hardenable(HardenableKind::PointEquality { var, value }),
        bits,
        format!("{bits}-bit constant meets the {}-bit threshold", policy.min_guess_bits),
    )
}

fn flatten_or<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    match &e.kind {
        ExprKind::Or(a, b) => {
            flatten_or(a, out);
            flatten_or(b, out);
        }
        _ => out.push(e),
    }
}

fn classify_or_chain(e: &Expr, policy: &ClassifierPolicy) -> (SiteClass, f64, String) {
    let mut disjuncts = Vec::new();
    flatten_or(e, &mut disjuncts);
    let mut var: Option<&str> = None;
    let mut values: Vec<Value> = Vec::new();
    for d in disjuncts {
        let point = match &d.kind {
            ExprKind::Cmp {
                op: CmpOp::Eq,
                lhs,
                rhs,
            } => match (&lhs.kind, &rhs.kind) {
                (ExprKind::Var(v), _) => literal(rhs).map(|val| (v.as_str(), val)),
                (_, ExprKind::Var(v)) => literal(lhs).map(|val| (v.as_str(), val)),
                _ => None,
            },
            _ => None,
        };
        let Some((v, value)) = point else {
            return unsupported(
                UnsupportedReason::MixedStructure,
                "disjunction mixes equality tests with other logic",
            );
        };
        if var.is_some_and(|prev| prev != v) {
            return unsupported(
                UnsupportedReason::MixedStructure,
                "disjunction tests more than one variable",
            );
        }
        var = Some(v);
        if !values.contains(&value) {
            values.push(value);
        }
    }
    let k = values.len();
    let min_bits = values
        .iter()
        .map(|v| policy.entropy(v))
        .fold(f64::INFINITY, f64::min);
    let guess = (min_bits - (k as f64).log2()).max(0.0);
    if min_bits < policy.min_guess_bits {
        return rejected(
            Rejection::SmallGuessingDomain,
            guess,
            format!(
                "weakest of {k} constants has {min_bits} bits, below the {}-bit threshold",
                policy.min_guess_bits
            ),
        );
    }
    (
        SiteClass::Hardenable(HardenableKind::SetMembership {
            var: var.expect("at least one disjunct").to_string(),
            values,
        }),
        guess,
        format!(
            "{k} constants of at least {min_bits} bits meet the {}-bit threshold",
            policy.min_guess_bits
        ),
    )
}

/// If `e` is built only from order comparisons against constants (joined by
/// `&&`, `||`, `!`), returns the bit width of the searched domain.
fn range_structure(e: &Expr) -> Option<f64> {
    match &e.kind {
        ExprKind::Cmp { op, lhs, rhs } if op.is_order() => {
            let value = match (literal(lhs), literal(rhs)) {
                (Some(v), None) | (None, Some(v)) => v,
                _ => return None,
            };
            Some(match value {
                Value::Int(_) => 64.0,
                Value::Str(s) => (8 * s.len()).max(8) as f64,
            })
        }
        ExprKind::And(a, b) | ExprKind::Or(a, b) => {
            Some(range_structure(a)?.max(range_structure(b)?))
        }
        ExprKind::Not(inner) => range_structure(inner),
        _ => None,
    }
}
