//! Sampled behavioural comparison of two programs over generated inputs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ast::{Expr, ExprKind, InputType, Program, Stmt, StmtKind};
use crate::interp::{evaluate, CostReport, EvalError, InputBinding, Verdict};
use crate::value::Value;

/// How to draw one input value.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ValueGenerator {
    /// Uniform `u64`, or one of `plants` with probability `plant_fraction`.
    Int { plants: Vec<u64>, plant_fraction: f64 },
    /// Length uniform in `[min_len, max_len]`, bytes uniform over `alphabet`
    /// (all 256 values when empty). With probability `plant_fraction` one of
    /// `plants` is written at a uniform offset.
    Str {
        min_len: usize,
        max_len: usize,
        #[serde(serialize_with = "crate::crypto::hex_bytes")]
        alphabet: Vec<u8>,
        #[serde(skip)]
        plants: Vec<Vec<u8>>,
        plant_fraction: f64,
    },
}

impl ValueGenerator {
    pub fn uniform_int() -> Self {
        ValueGenerator::Int {
            plants: Vec::new(),
            plant_fraction: 0.0,
        }
    }

    pub fn uniform_str(min_len: usize, max_len: usize) -> Self {
        ValueGenerator::Str {
            min_len,
            max_len,
            alphabet: Vec::new(),
            plants: Vec::new(),
            plant_fraction: 0.0,
        }
    }

    pub fn ty(&self) -> InputType {
        match self {
            ValueGenerator::Int { .. } => InputType::Int,
            ValueGenerator::Str { .. } => InputType::String,
        }
    }

    fn check(&self) -> Result<(), String> {
        let fraction = match self {
            ValueGenerator::Int { plant_fraction, .. } => *plant_fraction,
            ValueGenerator::Str {
                min_len,
                max_len,
                plant_fraction,
                ..
            } => {
                if min_len > max_len {
                    return Err(format!("min_len {min_len} exceeds max_len {max_len}"));
                }
                *plant_fraction
            }
        };
        if !(0.0..=1.0).contains(&fraction) {
            return Err(format!("plant fraction {fraction} is outside [0, 1]"));
        }
        Ok(())
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match self {
            ValueGenerator::Int {
                plants,
                plant_fraction,
            } => {
                if !plants.is_empty() && rng.gen_bool(*plant_fraction) {
                    Value::Int(plants[rng.gen_range(0..plants.len())])
                } else {
                    Value::Int(rng.gen())
                }
            }
            ValueGenerator::Str {
                min_len,
                max_len,
                alphabet,
                plants,
                plant_fraction,
            } => {
                let len = rng.gen_range(*min_len..=*max_len);
                let mut bytes: Vec<u8> = if alphabet.is_empty() {
                    (0..len).map(|_| rng.gen()).collect()
                } else {
                    (0..len)
                        .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                        .collect()
                };
                if !plants.is_empty() && rng.gen_bool(*plant_fraction) {
                    let plant = &plants[rng.gen_range(0..plants.len())];
                    if plant.len() >= bytes.len() {
                        bytes = plant.clone();
                    } else {
                        let at = rng.gen_range(0..=bytes.len() - plant.len());
                        bytes[at..at + plant.len()].copy_from_slice(plant);
                    }
                }
                Value::Str(bytes)
            }
        }
    }
}

/// One generator per declared input.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct InputGeneratorSpec {
    pub inputs: BTreeMap<String, ValueGenerator>,
}

impl InputGeneratorSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, generator: ValueGenerator) -> Self {
        self.inputs.insert(name.into(), generator);
        self
    }

    /// Generators that plant the program's own literals: every string literal
    /// into string inputs, and every int literal and its successor into int
    /// inputs.
    pub fn from_program(program: &Program, max_len: usize, plant_fraction: f64) -> Self {
        let mut strs: Vec<Vec<u8>> = Vec::new();
        let mut ints: Vec<u64> = Vec::new();
        for_each_expr(&program.body, &mut |e| match &e.kind {
            ExprKind::Int(n) => {
                for v in [*n, n.wrapping_add(1)] {
                    if !ints.contains(&v) {
                        ints.push(v);
                    }
                }
            }
            ExprKind::Str(s) => {
                if !s.is_empty() && !strs.contains(s) {
                    strs.push(s.clone());
                }
            }
            _ => {}
        });
        let inputs = program
            .inputs
            .iter()
            .map(|decl| {
                let generator = match decl.ty {
                    InputType::Int => ValueGenerator::Int {
                        plants: ints.clone(),
                        plant_fraction,
                    },
                    InputType::String => ValueGenerator::Str {
                        min_len: 0,
                        max_len,
                        alphabet: Vec::new(),
                        plants: strs.clone(),
                        plant_fraction,
                    },
                };
                (decl.name.clone(), generator)
            })
            .collect();
        InputGeneratorSpec { inputs }
    }

    fn check(&self, program: &Program) -> Result<(), EquivalenceError> {
        for decl in &program.inputs {
            match self.inputs.get(&decl.name) {
                None => {
                    return Err(EquivalenceError::GeneratorMismatch(format!(
                        "no generator for input `{}`",
                        decl.name
                    )))
                }
                Some(g) if g.ty() != decl.ty => {
                    return Err(EquivalenceError::GeneratorMismatch(format!(
                        "generator for `{}` produces {}, input is {}",
                        decl.name,
                        g.ty(),
                        decl.ty
                    )))
                }
                Some(g) => g.check().map_err(|e| {
                    EquivalenceError::GeneratorMismatch(format!("`{}`: {e}", decl.name))
                })?,
            }
        }
        if let Some(extra) = self.inputs.keys().find(|k| program.input_type(k).is_none()) {
            return Err(EquivalenceError::GeneratorMismatch(format!(
                "generator for undeclared input `{extra}`"
            )));
        }
        Ok(())
    }

    /// The binding for trial `trial`; depends only on `(seed, trial)`.
    pub fn binding(&self, program: &Program, seed: u64, trial: u64) -> InputBinding {
        let mut rng = trial_rng(seed, trial);
        let mut binding = InputBinding::new();
        for decl in &program.inputs {
            binding.insert(decl.name.clone(), self.inputs[&decl.name].generate(&mut rng));
        }
        binding
    }
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn for_each_expr<'a>(stmts: &'a [Stmt], f: &mut impl FnMut(&'a Expr)) {
    fn walk<'a>(e: &'a Expr, f: &mut impl FnMut(&'a Expr)) {
        f(e);
        for child in e.children() {
            walk(child, f);
        }
    }
    for stmt in stmts {
        match &stmt.kind {
            StmtKind::Let { value, .. } => walk(value, f),
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                walk(cond, f);
                for_each_expr(then_block, f);
                if let Some(b) = else_block {
                    for_each_expr(b, f);
                }
            }
            StmtKind::Accept | StmtKind::Reject => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquivalenceError {
    #[error("programs declare different inputs: {0}")]
    InputMismatch(String),
    #[error("generator does not match declarations: {0}")]
    GeneratorMismatch(String),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub trial: u64,
    pub inputs: InputBinding,
    pub verdict_p: Verdict,
    pub verdict_q: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DivergenceCounts {
    /// `p` accepts, `q` rejects: a false positive of `q`.
    pub accept_reject: u64,
    /// `p` rejects, `q` accepts: a false negative of `q`.
    pub reject_accept: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// Trials contributing to the summary.
    pub samples: u64,
}

impl RatioSummary {
    /// Summary of `q / p` over all trials where it is defined. `0 / 0`
    /// counts as 1; a non-zero count over zero is skipped.
    fn of(pairs: impl Iterator<Item = (u64, u64)>) -> Option<RatioSummary> {
        let mut ratios: Vec<f64> = pairs
            .filter_map(|(p, q)| match (p, q) {
                (0, 0) => Some(1.0),
                (0, _) => None,
                (p, q) => Some(q as f64 / p as f64),
            })
            .collect();
        if ratios.is_empty() {
            return None;
        }
        ratios.sort_by(f64::total_cmp);
        let n = ratios.len();
        let median = if n % 2 == 1 {
            ratios[n / 2]
        } else {
            (ratios[n / 2 - 1] + ratios[n / 2]) / 2.0
        };
        Some(RatioSummary {
            min: ratios[0],
            median,
            max: ratios[n - 1],
            samples: n as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRatios {
    pub steps: Option<RatioSummary>,
    pub hash_invocations: Option<RatioSummary>,
    pub bytes_hashed: Option<RatioSummary>,
    pub total: Option<RatioSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub trials: u64,
    pub seed: u64,
    pub divergences: Vec<Divergence>,
    pub counts: DivergenceCounts,
    /// Trials on which `p` rejected.
    pub rejects_p: u64,
    pub cost_ratio: CostRatios,
}

impl DivergenceReport {
    pub fn is_equivalent(&self) -> bool {
        self.divergences.is_empty()
    }
}

/// Runs `p` and `q` on `trials` generated inputs and records every
/// disagreement along with the distribution of `q`'s cost relative to `p`'s.
///
/// Trial `i` draws its inputs from a stream keyed by `(seed, i)`, so the
/// report does not depend on how trials are scheduled across threads.
pub fn equivalence_check(
    p: &Program,
    q: &Program,
    gen: &InputGeneratorSpec,
    trials: u64,
    seed: u64,
) -> Result<DivergenceReport, EquivalenceError> {
    if trials == 0 {
        return Err(EquivalenceError::NoTrials);
    }
    if p.inputs != q.inputs {
        let show = |prog: &Program| {
            prog.inputs
                .iter()
                .map(|d| format!("{}: {}", d.name, d.ty))
                .collect::<Vec<_>>()
                .join(", ")
        };
        return Err(EquivalenceError::InputMismatch(format!(
            "[{}] vs [{}]",
            show(p),
            show(q)
        )));
    }
    gen.check(p)?;

    struct Trial {
        verdicts: (Verdict, Verdict),
        costs: (CostReport, CostReport),
        inputs: Option<InputBinding>,
    }
    let results: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let binding = gen.binding(p, seed, trial);
            let (vp, cp) = evaluate(p, &binding)?;
            let (vq, cq) = evaluate(q, &binding)?;
            Ok(Trial {
                verdicts: (vp, vq),
                costs: (cp, cq),
                inputs: (vp != vq).then_some(binding),
            })
        })
        .collect::<Result<_, EvalError>>()?;

    let mut divergences = Vec::new();
    let mut counts = DivergenceCounts::default();
    let mut rejects_p = 0;
    for (trial, t) in results.iter().enumerate() {
        if t.verdicts.0 == Verdict::Reject {
            rejects_p += 1;
        }
        if let Some(inputs) = &t.inputs {
            match t.verdicts {
                (Verdict::Accept, Verdict::Reject) => counts.accept_reject += 1,
                _ => counts.reject_accept += 1,
            }
            divergences.push(Divergence {
                trial: trial as u64,
                inputs: inputs.clone(),
                verdict_p: t.verdicts.0,
                verdict_q: t.verdicts.1,
            });
        }
    }
    let ratio = |f: fn(&CostReport) -> u64| {
        RatioSummary::of(results.iter().map(|t| (f(&t.costs.0), f(&t.costs.1))))
    };
    Ok(DivergenceReport {
        trials,
        seed,
        divergences,
        counts,
        rejects_p,
        cost_ratio: CostRatios {
            steps: ratio(|c| c.steps),
            hash_invocations: ratio(|c| c.hash_invocations),
            bytes_hashed: ratio(|c| c.bytes_hashed),
            total: ratio(CostReport::total),
        },
    })
}
