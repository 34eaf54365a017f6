//! The hardening pass: rewrites hardenable conditionals into comparisons
//! against precomputed digests.
//!
//! | rule | matches                 | rewritten to                          |
//! |------|-------------------------|---------------------------------------|
//! | R1   | `v == a`                | `hash_eq(v, D(a))`                    |
//! | R2   | `v == a1 \|\| v == a2 ...` | `hash_eq(v, D(a1)) \|\| ...`       |
//! | R3   | `contains(h, s)`        | `hash_contains(h, D(s), len(s))`      |
//!
//! Only the condition expression of an `if` is replaced; statements, blocks
//! and declarations are carried over unchanged.

use std::fmt::{self, Write as _};

use rand::RngCore;
use serde::Serialize;
use thiserror::Error;

use crate::ast::{CmpOp, Expr, ExprKind, Program, Span, Stmt, StmtKind};
use crate::classify::{scan_program, Classification, ClassifierPolicy, HardenableKind, Rejection, SiteClass};
use crate::crypto::{digest, encode_value, fp_bound, Digest, DigestError, HashConfig};
use crate::printer::pretty_print;
use crate::validate::{validate, ValidationError};
use crate::value::{escape, Value};

pub const DEFAULT_SALT_LEN: usize = 16;

/// Input length at which [`explain_report`] evaluates the false-positive bound.
pub const REFERENCE_INPUT_LEN: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HardeningMode {
    /// Fail unless every conditional site is hardenable.
    #[default]
    Strict,
    /// Harden what qualifies and report the rest.
    BestEffort,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SaltChoice {
    /// Draw [`DEFAULT_SALT_LEN`] bytes from the supplied randomness source.
    #[default]
    Random,
    Fixed(Vec<u8>),
    None,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HardeningPolicy {
    pub classifier: ClassifierPolicy,
    pub salt: SaltChoice,
    /// `None` means full 256-bit digests.
    pub truncate_bits: Option<u32>,
    pub mode: HardeningMode,
}

impl HardeningPolicy {
    fn hash_config<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<HashConfig, DigestError> {
        let salt = match &self.salt {
            SaltChoice::Random => {
                let mut salt = vec![0u8; DEFAULT_SALT_LEN];
                rng.fill_bytes(&mut salt);
                salt
            }
            SaltChoice::Fixed(salt) => salt.clone(),
            SaltChoice::None => Vec::new(),
        };
        HashConfig::new(salt, self.truncate_bits.unwrap_or(256))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Rule {
    R1,
    R2,
    R3,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Number of digest comparisons a site makes per evaluation, as a function of
/// haystack length `n`: `fixed + max(0, n - window + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct FpTerm {
    pub fixed_comparisons: u64,
    pub window: Option<u64>,
}

impl FpTerm {
    pub fn comparisons(&self, input_len: u64) -> u64 {
        let sliding = self
            .window
            .map_or(0, |w| (input_len + 1).saturating_sub(w));
        self.fixed_comparisons + sliding
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteReport {
    pub index: usize,
    pub span: Span,
    pub classification: Classification,
    pub rule: Option<Rule>,
    pub digests: Vec<Digest>,
    pub fp_term: FpTerm,
    pub guess_cost_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FpTotals {
    pub fixed_comparisons: u64,
    pub windows: Vec<u64>,
    pub digest_bits: u32,
    pub formula: String,
}

impl FpTotals {
    pub fn comparisons(&self, input_len: u64) -> u64 {
        self.fixed_comparisons
            + self
                .windows
                .iter()
                .map(|&w| (input_len + 1).saturating_sub(w))
                .sum::<u64>()
    }

    /// Union bound on a false positive anywhere in one run over inputs of
    /// length at most `input_len`.
    pub fn bound(&self, input_len: u64) -> f64 {
        fp_bound(self.comparisons(input_len), self.digest_bits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardeningReport {
    pub mode: HardeningMode,
    pub hash: HashConfig,
    pub sites: Vec<SiteReport>,
    pub hardened: usize,
    pub skipped: usize,
    pub fp_total: FpTotals,
    /// Plaintext constants removed from the program. This report must not be
    /// distributed with the hardened filter.
    pub secrets_scrubbed: Vec<Value>,
    /// Secrets still visible in the output (only possible in best-effort mode).
    pub residual_secrets: Vec<Value>,
    /// What the hardened program still reveals.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteViolation {
    pub index: usize,
    pub span: Span,
    pub kind: &'static str,
    pub reason: String,
}

impl fmt::Display for SiteViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "site {} at {}: {} ({})", self.index, self.span, self.kind, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HardenError {
    #[error("input program is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ValidationError>),
    #[error("strict mode: {} site(s) cannot be hardened: {}", .0.len(), .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    StrictModeViolation(Vec<SiteViolation>),
    #[error("strict mode: {0} hardened secret(s) still appear in the output program")]
    SecretLeak(usize),
    #[error(transparent)]
    Config(#[from] DigestError),
}

/// Produces the hardened program and a report of what was done.
///
/// `rng` is consulted only when the policy asks for a random salt.
pub fn harden_program<R: RngCore + ?Sized>(
    program: &Program,
    policy: &HardeningPolicy,
    rng: &mut R,
) -> Result<(Program, HardeningReport), HardenError> {
    let errors = validate(program);
    if !errors.is_empty() {
        return Err(HardenError::Invalid(errors));
    }
    let classifications = scan_program(program, &policy.classifier);
    if policy.mode == HardeningMode::Strict {
        let violations: Vec<SiteViolation> = classifications
            .iter()
            .filter(|c| !c.is_hardenable())
            .map(|c| SiteViolation {
                index: c.index,
                span: c.site,
                kind: c.kind_name(),
                reason: c.reason.clone(),
            })
            .collect();
        if !violations.is_empty() {
            return Err(HardenError::StrictModeViolation(violations));
        }
    }
    let cfg = policy.hash_config(rng)?;

    let mut rewriter = Rewriter {
        cfg: &cfg,
        classifications: &classifications,
        next_site: 0,
        sites: Vec::new(),
        secrets: Vec::new(),
    };
    let body = rewriter.block(&program.body);
    let hardened = Program {
        inputs: program.inputs.clone(),
        body,
    };
    let Rewriter { sites, secrets, .. } = rewriter;
    debug_assert_eq!(sites.len(), classifications.len());

    let residual = residual_secrets(&hardened, &secrets);
    if policy.mode == HardeningMode::Strict && !residual.is_empty() {
        return Err(HardenError::SecretLeak(residual.len()));
    }

    let report = build_report(policy.mode, cfg, sites, secrets, residual);
    Ok((hardened, report))
}

struct Rewriter<'a> {
    cfg: &'a HashConfig,
    classifications: &'a [Classification],
    next_site: usize,
    sites: Vec<SiteReport>,
    secrets: Vec<Value>,
}

impl Rewriter<'_> {
    // Must visit sites in the same order as `Program::sites`.
    fn block(&mut self, stmts: &[Stmt]) -> Vec<Stmt> {
        stmts.iter().map(|s| self.stmt(s)).collect()
    }

    fn stmt(&mut self, stmt: &Stmt) -> Stmt {
        let kind = match &stmt.kind {
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                let cond = self.site(cond);
                StmtKind::If {
                    cond,
                    then_block: self.block(then_block),
                    else_block: else_block.as_ref().map(|b| self.block(b)),
                }
            }
            other => other.clone(),
        };
        Stmt {
            kind,
            span: stmt.span,
        }
    }

    fn digest_of(&self, value: &Value) -> Digest {
        digest(&encode_value(value), self.cfg)
    }

    fn site(&mut self, cond: &Expr) -> Expr {
        let c = &self.classifications[self.next_site];
        self.next_site += 1;
        let (rule, rewritten, digests, fp_term) = match &c.class {
            SiteClass::NotHardenable(_) => (None, cond.clone(), Vec::new(), FpTerm::default()),
            SiteClass::Hardenable(HardenableKind::PointEquality { value, .. }) => {
                self.remember(value);
                let mut digests = Vec::new();
                let e = self.rewrite_equalities(cond, &mut digests);
                (Some(Rule::R1), e, digests, FpTerm { fixed_comparisons: 1, window: None })
            }
            SiteClass::Hardenable(HardenableKind::SetMembership { values, .. }) => {
                for v in values {
                    self.remember(v);
                }
                let mut digests = Vec::new();
                let e = self.rewrite_equalities(cond, &mut digests);
                let term = FpTerm {
                    fixed_comparisons: digests.len() as u64,
                    window: None,
                };
                (Some(Rule::R2), e, digests, term)
            }
            SiteClass::Hardenable(HardenableKind::SubstringMatch { haystack, needle }) => {
                let secret = Value::Str(needle.clone());
                self.remember(&secret);
                let d = self.digest_of(&secret);
                let window = needle.len() as u64;
                let e = Expr::with_span(
                    ExprKind::HashContains {
                        value: Box::new(haystack.clone()),
                        digest: d.clone(),
                        window,
                    },
                    cond.span,
                );
                (Some(Rule::R3), e, vec![d], FpTerm { fixed_comparisons: 0, window: Some(window) })
            }
        };
        self.sites.push(SiteReport {
            index: c.index,
            span: c.site,
            classification: c.clone(),
            rule,
            digests,
            fp_term,
            guess_cost_bits: c.guess_cost_bits,
        });
        rewritten
    }

    fn remember(&mut self, v: &Value) {
        if !self.secrets.contains(v) {
            self.secrets.push(v.clone());
        }
    }

    /// Replaces every `v == a` leaf of an `||` tree, keeping the tree shape.
    fn rewrite_equalities(&self, e: &Expr, digests: &mut Vec<Digest>) -> Expr {
        let kind = match &e.kind {
            ExprKind::Or(a, b) => {
                let a = self.rewrite_equalities(a, digests);
                let b = self.rewrite_equalities(b, digests);
                ExprKind::Or(Box::new(a), Box::new(b))
            }
            ExprKind::Cmp {
                op: CmpOp::Eq,
                lhs,
                rhs,
            } => {
                let (var, lit) = match (&lhs.kind, &rhs.kind) {
                    (ExprKind::Var(_), ExprKind::Int(_) | ExprKind::Str(_)) => (lhs, rhs),
                    _ => (rhs, lhs),
                };
                let value = match &lit.kind {
                    ExprKind::Int(n) => Value::Int(*n),
                    ExprKind::Str(s) => Value::Str(s.clone()),
                    _ => unreachable!("classifier guarantees a literal operand"),
                };
                let d = self.digest_of(&value);
                digests.push(d.clone());
                ExprKind::HashEq {
                    value: var.clone(),
                    digest: d,
                }
            }
            _ => unreachable!("classifier guarantees an equality disjunction"),
        };
        Expr::with_span(kind, e.span)
    }
}

/// Secrets still visible in `program`: as a literal in the tree, or (for
/// strings) anywhere in its printed text.
fn residual_secrets(program: &Program, secrets: &[Value]) -> Vec<Value> {
    let text = pretty_print(program);
    let mut literals = Vec::new();
    let mut stack: Vec<&Stmt> = program.body.iter().collect();
    let mut exprs: Vec<&Expr> = Vec::new();
    while let Some(stmt) = stack.pop() {
        match &stmt.kind {
            StmtKind::Let { value, .. } => exprs.push(value),
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                exprs.push(cond);
                stack.extend(then_block);
                stack.extend(else_block.iter().flatten());
            }
            StmtKind::Accept | StmtKind::Reject => {}
        }
    }
    while let Some(e) = exprs.pop() {
        match &e.kind {
            ExprKind::Int(n) => literals.push(Value::Int(*n)),
            ExprKind::Str(s) => literals.push(Value::Str(s.clone())),
            _ => {}
        }
        exprs.extend(e.children());
    }
    secrets
        .iter()
        .filter(|secret| match secret {
            Value::Int(_) => literals.contains(secret),
            Value::Str(s) => {
                literals.iter().any(|lit| match lit {
                    Value::Str(l) => contains_bytes(l, s),
                    Value::Int(_) => false,
                }) || contains_bytes(text.as_bytes(), s)
                    || contains_bytes(text.as_bytes(), escape(s).as_bytes())
            }
        })
        .cloned()
        .collect()
}

fn contains_bytes(haystack: &[u8], needle: &[u8]) -> bool {
    needle.is_empty() || haystack.windows(needle.len()).any(|w| w == needle)
}

fn build_report(
    mode: HardeningMode,
    hash: HashConfig,
    sites: Vec<SiteReport>,
    secrets_scrubbed: Vec<Value>,
    residual_secrets: Vec<Value>,
) -> HardeningReport {
    let hardened = sites.iter().filter(|s| s.rule.is_some()).count();
    let skipped = sites.len() - hardened;
    let fixed_comparisons: u64 = sites.iter().map(|s| s.fp_term.fixed_comparisons).sum();
    let windows: Vec<u64> = sites.iter().filter_map(|s| s.fp_term.window).collect();
    let digest_bits = hash.truncate_bits();

    let mut terms = Vec::new();
    if fixed_comparisons > 0 || windows.is_empty() {
        terms.push(fixed_comparisons.to_string());
    }
    terms.extend(windows.iter().map(|w| format!("max(0, n - {})", w - 1)));
    let formula = format!("({}) * 2^-{digest_bits}", terms.join(" + "));

    let mut notes = Vec::new();
    for s in &sites {
        match (&s.rule, &s.classification.class) {
            (Some(Rule::R1), SiteClass::Hardenable(HardenableKind::PointEquality { value, .. })) => {
                notes.push(format!(
                    "site {}: the digest's type tag reveals that the constant is {}",
                    s.index,
                    match value {
                        Value::Int(_) => "an int",
                        Value::Str(_) => "a string",
                    }
                ))
            }
            (Some(Rule::R2), _) => notes.push(format!(
                "site {}: the number of constants (k = {}) is visible",
                s.index,
                s.digests.len()
            )),
            (Some(Rule::R3), _) => notes.push(format!(
                "site {}: the window length reveals the secret is {} bytes long",
                s.index,
                s.fp_term.window.unwrap_or(0)
            )),
            _ => {}
        }
    }
    if !residual_secrets.is_empty() {
        notes.push(format!(
            "{} hardened secret(s) still appear in plaintext elsewhere in the program",
            residual_secrets.len()
        ));
    }

    HardeningReport {
        mode,
        hash,
        sites,
        hardened,
        skipped,
        fp_total: FpTotals {
            fixed_comparisons,
            windows,
            digest_bits,
            formula,
        },
        secrets_scrubbed,
        residual_secrets,
        notes,
    }
}

fn rule_summary(rule: Rule) -> &'static str {
    match rule {
        Rule::R1 => "one digest of the tagged value per evaluation",
        Rule::R2 => "up to k digest comparisons of one tagged value per evaluation",
        Rule::R3 => "one digest per window; linear in input length",
    }
}

fn rejection_summary(r: Rejection) -> &'static str {
    match r {
        Rejection::RangeCheck => "left in plaintext: recoverable by binary search",
        Rejection::SmallGuessingDomain => {
            "left in plaintext: recoverable by exhaustive search over a small domain"
        }
        Rejection::NonConstantComparand => "left in plaintext: no constant to hide",
        Rejection::Unsupported(_) => "left in plaintext: unsupported shape",
    }
}

/// Human-readable summary of a hardening report.
pub fn explain_report(report: &HardeningReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} site{}: {} hardened, {} skipped ({:?} mode, {}-bit digests)",
        report.sites.len(),
        if report.sites.len() == 1 { "" } else { "s" },
        report.hardened,
        report.skipped,
        report.mode,
        report.hash.truncate_bits()
    );
    for s in &report.sites {
        match s.rule {
            Some(rule) => {
                let _ = write!(
                    out,
                    "  site {} at {}: {} -> rule {rule}",
                    s.index,
                    s.span,
                    s.classification.kind_name()
                );
                if let Some(w) = s.fp_term.window {
                    let _ = write!(out, ", window {w}");
                }
                let _ = writeln!(
                    out,
                    ", guess cost {:.1} bits, {}",
                    s.guess_cost_bits,
                    rule_summary(rule)
                );
                let m = match s.fp_term.window {
                    Some(w) => format!("max(0, n - {})", w - 1),
                    None => s.fp_term.fixed_comparisons.to_string(),
                };
                let _ = writeln!(
                    out,
                    "    false-positive bound: m x 2^-{} with m = {m}",
                    report.hash.truncate_bits()
                );
            }
            None => {
                let reason = match s.classification.class {
                    SiteClass::NotHardenable(r) => rejection_summary(r),
                    SiteClass::Hardenable(_) => "not rewritten",
                };
                let _ = writeln!(
                    out,
                    "  site {} at {}: {} -> {reason} ({})",
                    s.index,
                    s.span,
                    s.classification.kind_name(),
                    s.classification.reason
                );
            }
        }
    }
    let _ = writeln!(
        out,
        "total false-positive bound: {} = {:e} at n = {REFERENCE_INPUT_LEN}",
        report.fp_total.formula,
        report.fp_total.bound(REFERENCE_INPUT_LEN)
    );
    for note in &report.notes {
        let _ = writeln!(out, "note: {note}");
    }
    out
}
