//! Cryptographic path hardening for MiniLang input filters.
//!
//! The pipeline is: [`parse`] a filter, [`scan_program`] to classify its
//! conditionals, [`harden_program`] to replace hardenable ones with digest
//! comparisons, then [`equivalence_check`] and [`attack_report`] to validate
//! the result.

pub mod ast;
pub mod attack;
pub mod classify;
pub mod crypto;
pub mod equivalence;
pub mod harden;
pub mod interp;
mod lexer;
pub mod parser;
pub mod printer;
pub mod validate;
pub mod value;

pub use ast::{CmpOp, Expr, ExprKind, InputDecl, InputType, Program, Site, Span, Stmt, StmtKind};
pub use attack::{
    attack_report, binary_search_attack, dictionary_attack, exhaustive_attack, AttackBudgets,
    AttackError, AttackOutcome, AttackReport, Attacker, ConditionalOracle, Consistency, Dictionary,
};
pub use classify::{
    classify_conditional, estimate_guess_cost, scan_program, Classification, ClassifierPolicy,
    HardenableKind, Rejection, SiteClass, UnsupportedReason,
};
pub use crypto::{
    digest, digest_eq, encode_value, fp_bound, hash_contains, Digest, DigestError, HashConfig,
};
pub use equivalence::{
    equivalence_check, DivergenceReport, EquivalenceError, InputGeneratorSpec, ValueGenerator,
};
pub use harden::{
    explain_report, harden_program, HardenError, HardeningMode, HardeningPolicy, HardeningReport,
    Rule, SaltChoice,
};
pub use interp::{eval_site, evaluate, CostReport, EvalError, InputBinding, Verdict};
pub use parser::{parse, parse_bytes, parse_syntax, FrontendError, ParseError};
pub use printer::{pretty_print, print_expr};
pub use validate::{validate, ValidationCode, ValidationError};
pub use value::Value;

/// Version of every JSON document this crate emits.
pub const FORMAT_VERSION: u32 = 1;
