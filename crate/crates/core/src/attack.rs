//! Black-box attacks on individual conditionals.
//!
//! Each `if` condition is turned into a [`ConditionalOracle`]: a predicate on
//! one input with every other input pinned. The attackers only see the
//! oracle's answers. [`attack_report`] picks an attack per site from its
//! classification and checks that the outcome matches the prediction.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ast::{Expr, ExprKind, InputType, Program, Site, Span};
use crate::classify::{Classification, HardenableKind, Rejection, SiteClass, UnsupportedReason};
use crate::equivalence::{trial_rng, ValueGenerator};
use crate::interp::{eval_site, InputBinding};
use crate::validate::validate;
use crate::value::Value;

pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Lengths drawn for string dictionary entries when the secret's length is unknown.
pub const DEFAULT_MAX_GUESS_LEN: usize = 32;

/// A predicate on a single value that counts how often it is asked.
pub struct ConditionalOracle<'a> {
    ty: InputType,
    predicate: Box<dyn Fn(&Value) -> bool + Send + Sync + 'a>,
    queries: AtomicU64,
}

impl fmt::Debug for ConditionalOracle<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConditionalOracle")
            .field("ty", &self.ty)
            .field("queries", &self.queries())
            .finish_non_exhaustive()
    }
}

impl<'a> ConditionalOracle<'a> {
    pub fn new(ty: InputType, predicate: impl Fn(&Value) -> bool + Send + Sync + 'a) -> Self {
        ConditionalOracle {
            ty,
            predicate: Box::new(predicate),
            queries: AtomicU64::new(0),
        }
    }

    /// Oracle for one site's condition as a function of `target`, with the
    /// remaining inputs taken from `fixed`.
    pub fn for_site(
        program: &Program,
        site: Site<'a>,
        target: &str,
        fixed: InputBinding,
    ) -> Result<Self, AttackError> {
        let ty = program
            .input_type(target)
            .ok_or_else(|| AttackError::UnknownInput(target.to_string()))?;
        let target = target.to_string();
        Ok(ConditionalOracle::new(ty, move |v: &Value| {
            let mut binding = fixed.clone();
            binding.insert(target.clone(), v.clone());
            matches!(eval_site(&site, &binding), Ok((true, _)))
        }))
    }

    pub fn ty(&self) -> InputType {
        self.ty
    }

    /// Values of the wrong type are answered `false` but still counted.
    pub fn query(&self, v: &Value) -> bool {
        self.queries.fetch_add(1, Ordering::Relaxed);
        v.ty() == self.ty && (self.predicate)(v)
    }

    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Attacker {
    BinarySearch,
    Exhaustive,
    Dictionary,
}

/// Result of one attack.
///
/// `queries` counts search queries, including the one that found the
/// witness. A success costs one more `confirmation_queries`, so
/// `queries + confirmation_queries == oracle_queries`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackOutcome {
    pub attacker: Attacker,
    pub success: bool,
    pub queries: u64,
    pub confirmation_queries: u64,
    /// Oracle counter delta over the attack.
    pub oracle_queries: u64,
    /// For binary search the recovered threshold, otherwise the witness.
    pub recovered: Option<Value>,
    /// An input the oracle accepted, re-checked by the confirmation query.
    pub witness: Option<Value>,
    pub budget: u64,
    pub seed: u64,
}

struct Tally<'o, 'a> {
    oracle: &'o ConditionalOracle<'a>,
    start: u64,
    attacker: Attacker,
    budget: u64,
    seed: u64,
}

impl<'o, 'a> Tally<'o, 'a> {
    fn new(oracle: &'o ConditionalOracle<'a>, attacker: Attacker, budget: u64, seed: u64) -> Self {
        Tally {
            oracle,
            start: oracle.queries(),
            attacker,
            budget,
            seed,
        }
    }

    fn finish(self, found: Option<(Value, Value)>) -> AttackOutcome {
        let queries = self.oracle.queries() - self.start;
        let (success, recovered, witness, confirmation_queries) = match found {
            Some((recovered, witness)) => {
                let ok = self.oracle.query(&witness);
                (ok, Some(recovered), Some(witness), 1)
            }
            None => (false, None, None, 0),
        };
        AttackOutcome {
            attacker: self.attacker,
            success,
            queries,
            confirmation_queries,
            oracle_queries: self.oracle.queries() - self.start,
            recovered,
            witness,
            budget: self.budget,
            seed: self.seed,
        }
    }
}

/// Maps a point of the `u64` search domain to a value of the oracle's type.
/// Strings use the 8-byte big-endian encoding, which preserves order.
fn domain_point(ty: InputType, x: u64) -> Value {
    match ty {
        InputType::Int => Value::Int(x),
        InputType::String => Value::Str(x.to_be_bytes().to_vec()),
    }
}

/// Query bound for [`binary_search_attack`] over `[lo, hi)`.
pub fn binary_search_bound(lo: u64, hi: u128) -> u64 {
    let width = hi.saturating_sub(lo as u128);
    let bits = if width <= 1 {
        0
    } else {
        128 - (width - 1).leading_zeros() as u64
    };
    bits + 2
}

/// Locates the single point in `[lo, hi)` where the oracle's answer flips.
///
/// The first query fixes the orientation: if `lo` satisfies the oracle the
/// search looks for the first rejected point (`x < c` shapes), otherwise for
/// the first accepted one (`x >= c` shapes). The recovered value is that
/// boundary. If the answer never flips the attack fails.
pub fn binary_search_attack(oracle: &ConditionalOracle<'_>, lo: u64, hi: u128) -> AttackOutcome {
    let budget = binary_search_bound(lo, hi);
    let tally = Tally::new(oracle, Attacker::BinarySearch, budget, 0);
    if hi <= lo as u128 {
        return tally.finish(None);
    }
    let ty = oracle.ty();
    let at = |x: u128| domain_point(ty, x as u64);
    let first = oracle.query(&at(lo as u128));
    // invariant: oracle(a) == first, and b is either `hi` or a point where it differs
    let (mut a, mut b) = (lo as u128, hi);
    while b - a > 1 {
        let mid = a + (b - a) / 2;
        if oracle.query(&at(mid)) == first {
            a = mid;
        } else {
            b = mid;
        }
    }
    if b == hi {
        return tally.finish(None);
    }
    let boundary = at(b);
    let witness = if first { at(a) } else { boundary.clone() };
    let recovered = match ty {
        InputType::Int => Value::Int(b as u64),
        InputType::String => boundary,
    };
    tally.finish(Some((recovered, witness)))
}

/// Tries candidates in order until one is accepted or `budget` queries are spent.
pub fn exhaustive_attack(
    oracle: &ConditionalOracle<'_>,
    candidates: impl IntoIterator<Item = Value>,
    budget: u64,
) -> AttackOutcome {
    let tally = Tally::new(oracle, Attacker::Exhaustive, budget, 0);
    let hit = candidates
        .into_iter()
        .take(budget as usize)
        .find(|v| oracle.query(v));
    tally.finish(hit.map(|v| (v.clone(), v)))
}

/// Seeded stream of guesses, optionally with known entries at fixed positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub generator: ValueGenerator,
    /// Entries that replace the generated value at the given (0-based) index.
    pub planted: BTreeMap<u64, Value>,
}

impl Dictionary {
    pub fn new(generator: ValueGenerator) -> Self {
        Dictionary {
            generator,
            planted: BTreeMap::new(),
        }
    }

    pub fn plant(mut self, index: u64, value: Value) -> Self {
        self.planted.insert(index, value);
        self
    }
}

/// Queries up to `budget` dictionary entries, stopping at the first accepted one.
pub fn dictionary_attack(
    oracle: &ConditionalOracle<'_>,
    dictionary: &Dictionary,
    budget: u64,
    seed: u64,
) -> AttackOutcome {
    let tally = Tally::new(oracle, Attacker::Dictionary, budget, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hit = None;
    for i in 0..budget {
        // always advance the stream so planting does not shift later entries
        let generated = dictionary.generator.generate(&mut rng);
        let guess = dictionary.planted.get(&i).cloned().unwrap_or(generated);
        if oracle.query(&guess) {
            hit = Some(guess);
            break;
        }
    }
    tally.finish(hit.map(|v| (v.clone(), v)))
}

/// Every byte string of length `len`, in lexicographic order.
pub fn strings_of_len(len: usize) -> impl Iterator<Item = Value> {
    let mut next = Some(vec![0u8; len]);
    std::iter::from_fn(move || {
        let current = next.take()?;
        let mut succ = current.clone();
        if let Some(i) = succ.iter().rposition(|&b| b != 0xff) {
            succ[i] += 1;
            succ[i + 1..].fill(0);
            next = Some(succ);
        }
        Some(Value::Str(current))
    })
}

/// All byte strings ordered by length, then lexicographically.
pub fn strings_by_len() -> impl Iterator<Item = Value> {
    (0..).flat_map(strings_of_len)
}

pub fn ints_ascending() -> impl Iterator<Item = Value> {
    (0..=u64::MAX).map(Value::Int)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackBudgets {
    pub dictionary: u64,
    pub exhaustive: u64,
    /// Guesses placed at the front of every type-compatible dictionary.
    pub planted: Vec<Value>,
}

impl Default for AttackBudgets {
    fn default() -> Self {
        AttackBudgets {
            dictionary: DEFAULT_BUDGET,
            exhaustive: DEFAULT_BUDGET,
            planted: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "expect", rename_all = "snake_case")]
pub enum Expectation {
    /// The site should fall within `max_queries` search queries.
    Crack { max_queries: u64 },
    /// No attack within budget should succeed.
    Resist,
    /// Not part of the verdict.
    Excluded { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteAttack {
    pub index: usize,
    pub span: Span,
    pub kind: &'static str,
    pub target: Option<String>,
    pub fixed_inputs: InputBinding,
    pub expectation: Expectation,
    pub outcomes: Vec<AttackOutcome>,
    pub cracked: bool,
    /// `None` for excluded sites.
    pub consistent: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Consistency {
    Pass,
    Fail,
}

impl fmt::Display for Consistency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Consistency::Pass => "PASS",
            Consistency::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub seed: u64,
    pub budgets: AttackBudgets,
    pub sites: Vec<SiteAttack>,
    pub consistency: Consistency,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("classifications do not match the program's sites: {0}")]
    ClassificationMismatch(String),
    #[error("program is invalid: {0}")]
    Invalid(String),
    #[error("`{0}` is not a declared input")]
    UnknownInput(String),
}

/// Inputs the condition depends on, following `let` bindings, in declaration order.
fn site_inputs(program: &Program, site: &Site<'_>) -> Vec<String> {
    let mut pending: Vec<String> = site.cond.free_vars().into_iter().map(String::from).collect();
    let mut seen: Vec<String> = Vec::new();
    while let Some(name) = pending.pop() {
        if seen.contains(&name) {
            continue;
        }
        if let Some((_, e)) = site.lets.iter().rev().find(|(n, _)| *n == name) {
            pending.extend(e.free_vars().into_iter().map(String::from));
        }
        seen.push(name);
    }
    program
        .inputs
        .iter()
        .map(|d| d.name.clone())
        .filter(|n| seen.contains(n))
        .collect()
}

/// Candidate string lengths implied by the condition, if any.
fn length_hint(c: &Classification, cond: &Expr) -> Vec<usize> {
    match &c.class {
        SiteClass::Hardenable(HardenableKind::SubstringMatch { needle, .. }) => vec![needle.len()],
        SiteClass::Hardenable(HardenableKind::PointEquality { value: Value::Str(s), .. }) => {
            vec![s.len()]
        }
        SiteClass::Hardenable(HardenableKind::SetMembership { values, .. }) => {
            let mut lens: Vec<usize> = values
                .iter()
                .filter_map(|v| match v {
                    Value::Str(s) => Some(s.len()),
                    Value::Int(_) => None,
                })
                .collect();
            lens.sort_unstable();
            lens.dedup();
            lens
        }
        _ => {
            let mut lens = Vec::new();
            let mut stack = vec![cond];
            while let Some(e) = stack.pop() {
                match &e.kind {
                    ExprKind::Str(s) => lens.push(s.len()),
                    ExprKind::HashContains { window, .. } => lens.push(*window as usize),
                    _ => {}
                }
                stack.extend(e.children());
            }
            lens.sort_unstable();
            lens.dedup();
            lens
        }
    }
}

fn candidates(ty: InputType, lens: &[usize]) -> Box<dyn Iterator<Item = Value>> {
    match (ty, lens) {
        (InputType::Int, _) => Box::new(ints_ascending()),
        (InputType::String, [len]) => Box::new(strings_of_len(*len)),
        (InputType::String, _) => Box::new(strings_by_len()),
    }
}

fn dictionary_for(ty: InputType, lens: &[usize], planted: &[Value]) -> Dictionary {
    let generator = match ty {
        InputType::Int => ValueGenerator::uniform_int(),
        InputType::String => {
            let (min_len, max_len) = match lens {
                [] => (0, DEFAULT_MAX_GUESS_LEN),
                _ => (lens[0], lens[lens.len() - 1]),
            };
            ValueGenerator::uniform_str(min_len, max_len)
        }
    };
    planted
        .iter()
        .filter(|v| v.ty() == ty)
        .enumerate()
        .fold(Dictionary::new(generator), |d, (i, v)| d.plant(i as u64, v.clone()))
}

fn site_seed(seed: u64, index: usize) -> u64 {
    trial_rng(seed, index as u64).gen()
}

/// Attacks every site of `program` with the attacker its classification
/// calls for and compares the results with the classifier's predictions.
///
/// Range checks get a binary search over the 64-bit domain and must fall
/// within its query bound. Small guessing domains get exhaustive search and
/// must fall within `2^guess_cost_bits` queries; when that exceeds the
/// exhaustive budget the site is excluded. Hardenable and already-hardened
/// sites get a dictionary attack and an exhaustive attack and must survive
/// both. Other sites are excluded. The verdict is PASS when every included
/// site behaves as predicted.
pub fn attack_report(
    program: &Program,
    classifications: &[Classification],
    budgets: &AttackBudgets,
    seed: u64,
) -> Result<AttackReport, AttackError> {
    let errors = validate(program);
    if let Some(e) = errors.first() {
        return Err(AttackError::Invalid(e.to_string()));
    }
    let sites = program.sites();
    if sites.len() != classifications.len() {
        return Err(AttackError::ClassificationMismatch(format!(
            "{} sites, {} classifications",
            sites.len(),
            classifications.len()
        )));
    }
    for (s, c) in sites.iter().zip(classifications) {
        if s.index != c.index || s.cond.span != c.site {
            return Err(AttackError::ClassificationMismatch(format!(
                "site {} at {} does not match classification {} at {}",
                s.index, s.cond.span, c.index, c.site
            )));
        }
    }

    let results: Vec<SiteAttack> = sites
        .into_par_iter()
        .zip(classifications.par_iter())
        .map(|(site, c)| attack_site(program, site, c, budgets, seed))
        .collect::<Result<_, _>>()?;
    let consistency = if results.iter().all(|s| s.consistent != Some(false)) {
        Consistency::Pass
    } else {
        Consistency::Fail
    };
    Ok(AttackReport {
        seed,
        budgets: budgets.clone(),
        sites: results,
        consistency,
    })
}

fn attack_site(
    program: &Program,
    site: Site<'_>,
    c: &Classification,
    budgets: &AttackBudgets,
    seed: u64,
) -> Result<SiteAttack, AttackError> {
    let seed = site_seed(seed, c.index);
    let inputs = site_inputs(program, &site);
    let mut report = SiteAttack {
        index: c.index,
        span: c.site,
        kind: c.kind_name(),
        target: None,
        fixed_inputs: InputBinding::new(),
        expectation: Expectation::Excluded {
            reason: String::new(),
        },
        outcomes: Vec::new(),
        cracked: false,
        consistent: None,
    };
    let target = match &c.class {
        SiteClass::Hardenable(
            HardenableKind::PointEquality { var, .. } | HardenableKind::SetMembership { var, .. },
        ) if inputs.contains(var) => Some(var.clone()),
        _ => inputs.first().cloned(),
    };
    let Some(target) = target else {
        report.expectation = Expectation::Excluded {
            reason: "condition does not depend on any input".into(),
        };
        return Ok(report);
    };

    let mut rng = trial_rng(seed, 0);
    for decl in &program.inputs {
        if decl.name != target {
            let generator = match decl.ty {
                InputType::Int => ValueGenerator::uniform_int(),
                InputType::String => ValueGenerator::uniform_str(0, 16),
            };
            report.fixed_inputs.insert(decl.name.clone(), generator.generate(&mut rng));
        }
    }
    let cond = site.cond;
    let oracle = ConditionalOracle::for_site(program, site, &target, report.fixed_inputs.clone())?;
    let ty = oracle.ty();
    let lens = length_hint(c, cond);
    report.target = Some(target);

    let resist = |report: &mut SiteAttack| {
        let dict = dictionary_for(ty, &lens, &budgets.planted);
        report.outcomes.push(dictionary_attack(&oracle, &dict, budgets.dictionary, seed));
        report
            .outcomes
            .push(exhaustive_attack(&oracle, candidates(ty, &lens), budgets.exhaustive));
        report.expectation = Expectation::Resist;
    };
    match &c.class {
        SiteClass::NotHardenable(Rejection::RangeCheck) => {
            let mut outcome = binary_search_attack(&oracle, 0, 1u128 << 64);
            outcome.seed = seed;
            report.expectation = Expectation::Crack {
                max_queries: outcome.budget,
            };
            report.outcomes.push(outcome);
        }
        SiteClass::NotHardenable(Rejection::SmallGuessingDomain) => {
            let predicted = 2f64.powf(c.guess_cost_bits).ceil();
            if predicted > budgets.exhaustive as f64 {
                report.expectation = Expectation::Excluded {
                    reason: format!(
                        "predicted {predicted} queries exceed the exhaustive budget {}",
                        budgets.exhaustive
                    ),
                };
            } else {
                let mut outcome =
                    exhaustive_attack(&oracle, candidates(ty, &lens), predicted as u64);
                outcome.seed = seed;
                report.expectation = Expectation::Crack {
                    max_queries: predicted as u64,
                };
                report.outcomes.push(outcome);
            }
        }
        SiteClass::Hardenable(_)
        | SiteClass::NotHardenable(Rejection::Unsupported(UnsupportedReason::AlreadyHardened)) => {
            resist(&mut report)
        }
        SiteClass::NotHardenable(r) => {
            report.expectation = Expectation::Excluded {
                reason: format!("no attack is predicted for {r:?}"),
            };
        }
    }
    for o in &mut report.outcomes {
        o.seed = seed;
    }
    report.cracked = report.outcomes.iter().any(|o| o.success);
    report.consistent = match &report.expectation {
        Expectation::Crack { max_queries } => Some(
            report
                .outcomes
                .iter()
                .any(|o| o.success && o.queries <= *max_queries),
        ),
        Expectation::Resist => Some(!report.cracked),
        Expectation::Excluded { .. } => None,
    };
    Ok(report)
}
