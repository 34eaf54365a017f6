mod common;

use std::fs;
use std::path::PathBuf;

use pathharden_core::attack::{binary_search_attack, AttackBudgets};
use pathharden_core::classify::ClassifierPolicy;
use pathharden_core::{
    attack_report, equivalence_check, evaluate, harden_program, parse, pretty_print, scan_program,
    Consistency, HardeningMode, HardeningPolicy, InputBinding, InputGeneratorSpec, InputType,
    Program, Rule, SaltChoice, Value, ValueGenerator, Verdict,
};
use proptest::prelude::*;
use rand::rngs::mock::StepRng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn corpus() -> Vec<(String, Program)> {
    let mut files: Vec<PathBuf> = fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "ml1"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let src = fs::read_to_string(&p).unwrap();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let program = parse(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, program)
        })
        .collect()
}

fn best_effort(bits: Option<u32>, salt: SaltChoice) -> HardeningPolicy {
    HardeningPolicy {
        salt,
        truncate_bits: bits,
        mode: HardeningMode::BestEffort,
        ..HardeningPolicy::default()
    }
}

fn harden(p: &Program, policy: &HardeningPolicy) -> Program {
    harden_program(p, policy, &mut StepRng::new(17, 31)).unwrap().0
}

#[test]
fn corpus_covers_every_rule_and_rejection() {
    let corpus = corpus();
    assert!(corpus.len() >= 10);
    let mut kinds = std::collections::BTreeSet::new();
    let mut rules = std::collections::BTreeSet::new();
    for (_, p) in &corpus {
        for c in scan_program(p, &ClassifierPolicy::default()) {
            kinds.insert(c.kind_name());
        }
        let (_, report) = harden_program(p, &best_effort(None, SaltChoice::Random), &mut StepRng::new(0, 1)).unwrap();
        rules.extend(report.sites.iter().filter_map(|s| s.rule));
        // fp totals are the sum of the per-site terms
        for n in [0, 15, 16, 1000] {
            let per_site: u64 = report.sites.iter().map(|s| s.fp_term.comparisons(n)).sum();
            assert_eq!(report.fp_total.comparisons(n), per_site);
        }
        assert_eq!(report.hardened + report.skipped, report.sites.len());
    }
    assert_eq!(rules.into_iter().collect::<Vec<_>>(), [Rule::R1, Rule::R2, Rule::R3]);
    for kind in ["RangeCheck", "SmallGuessingDomain", "PointEquality", "SetMembership", "SubstringMatch"] {
        assert!(kinds.contains(kind), "corpus lacks {kind}");
    }
}

#[test]
fn corpus_hardening_preserves_unhardened_text_and_scrubs_secrets() {
    for (name, p) in corpus() {
        let (q, report) =
            harden_program(&p, &best_effort(None, SaltChoice::Random), &mut StepRng::new(5, 9)).unwrap();
        let text = pretty_print(&q);
        for secret in &report.secrets_scrubbed {
            if let Value::Str(s) = secret {
                assert!(
                    !text.as_bytes().windows(s.len()).any(|w| w == s.as_slice()),
                    "{name}: secret survives"
                );
            }
        }
        assert!(report.residual_secrets.is_empty(), "{name}");
        assert_eq!(p.inputs, q.inputs);
        // unhardened sites print identically
        let original = pretty_print(&p);
        for (site, s) in q.sites().iter().zip(&report.sites) {
            if s.rule.is_none() {
                let printed = pathharden_core::print_expr(site.cond);
                assert!(original.contains(&format!("if ({printed})")), "{name}: {printed}");
            }
        }
    }
}

#[test]
fn corpus_equivalence_at_full_digests() {
    for (name, p) in corpus() {
        let q = harden(&p, &best_effort(None, SaltChoice::Random));
        let gen = InputGeneratorSpec::from_program(&p, 48, 0.2);
        let r = equivalence_check(&p, &q, &gen, 5_000, 1).unwrap();
        assert!(r.is_equivalent(), "{name}: {:?}", r.divergences.first());
    }
}

#[test]
fn hardened_corpus_attack_verdict() {
    let budgets = AttackBudgets {
        dictionary: 2_000,
        exhaustive: 2_000,
        planted: Vec::new(),
    };
    for (name, p) in corpus() {
        for program in [p.clone(), harden(&p, &best_effort(None, SaltChoice::Random))] {
            let cs = scan_program(&program, &ClassifierPolicy::default());
            let r = attack_report(&program, &cs, &budgets, 3).unwrap();
            assert_eq!(r.consistency, Consistency::Pass, "{name}\n{}", pretty_print(&program));
            for site in &r.sites {
                for o in &site.outcomes {
                    assert_eq!(o.queries + o.confirmation_queries, o.oracle_queries);
                    assert!(o.queries <= o.budget, "{name}: {o:?}");
                }
            }
        }
    }
}

#[test]
fn attack_reports_are_reproducible() {
    let (_, p) = corpus().into_iter().find(|(n, _)| n == "mixed_waf.ml1").unwrap();
    let cs = scan_program(&p, &ClassifierPolicy::default());
    let budgets = AttackBudgets {
        dictionary: 3_000,
        exhaustive: 3_000,
        planted: Vec::new(),
    };
    let a = attack_report(&p, &cs, &budgets, 77).unwrap();
    let b = attack_report(&p, &cs, &budgets, 77).unwrap();
    assert_eq!(a, b);
}

const PHP: &str = r#"input req: string; if (contains(req, "2250738585072011")) { reject; } accept;"#;

fn cost_at(p: &Program, n: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let Value::Str(s) = ValueGenerator::Str {
        min_len: n,
        max_len: n,
        alphabet: b"0123456789.e-+x".to_vec(),
        plants: Vec::new(),
        plant_fraction: 0.0,
    }
    .generate(&mut rng) else {
        unreachable!()
    };
    let binding = InputBinding::new().with("req", Value::Str(s));
    evaluate(p, &binding).unwrap().1.steps
}

#[test]
fn hardened_cost_doubles_with_length() {
    let p = parse(PHP).unwrap();
    let q = harden(&p, &HardeningPolicy::default());
    for n in [1024usize, 2048, 4096] {
        for prog in [&p, &q] {
            let ratio = cost_at(prog, 2 * n) as f64 / cost_at(prog, n) as f64;
            assert!((1.8..=2.2).contains(&ratio), "n = {n}: ratio {ratio}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncated_hardening_is_one_sided(
        needle in proptest::collection::vec(any::<u8>(), 8..12),
        haystacks in proptest::collection::vec(proptest::collection::vec(0u8..4, 0..40), 1..40),
        salt: [u8; 4],
    ) {
        let src = format!(
            "input s: string; if (contains(s, \"{}\")) {{ reject; }} accept;",
            pathharden_core::value::escape(&needle)
        );
        let p = parse(&src).unwrap();
        let policy = HardeningPolicy {
            salt: SaltChoice::Fixed(salt.to_vec()),
            truncate_bits: Some(8),
            ..HardeningPolicy::default()
        };
        let q = harden(&p, &policy);
        for mut h in haystacks {
            if h.len() > 5 {
                let at = h.len() / 2;
                h.splice(at..at, needle.iter().copied());
            }
            let b = InputBinding::new().with("s", Value::Str(h));
            let (vp, _) = evaluate(&p, &b).unwrap();
            let (vq, _) = evaluate(&q, &b).unwrap();
            prop_assert!(!(vp == Verdict::Reject && vq == Verdict::Accept));
        }
    }

    #[test]
    fn hardening_is_deterministic_and_idempotent(seed: u64) {
        let program = common::random_program(&mut ChaCha8Rng::seed_from_u64(seed));
        let policy = best_effort(None, SaltChoice::Fixed(vec![7; 16]));
        let (a, ra) = harden_program(&program, &policy, &mut StepRng::new(0, 1)).unwrap();
        let (b, rb) = harden_program(&program, &policy, &mut StepRng::new(99, 3)).unwrap();
        prop_assert_eq!(pretty_print(&a), pretty_print(&b));
        prop_assert_eq!(ra, rb);
        let (c, rc) = harden_program(&a, &policy, &mut StepRng::new(0, 1)).unwrap();
        // a second pass can only find sites the first pass left alone
        if rc.hardened == 0 {
            prop_assert_eq!(&c, &a);
        }
        prop_assert!(pathharden_core::validate(&a).is_empty());
    }

    #[test]
    fn generated_programs_hardened_agree(seed: u64) {
        let program = common::random_program(&mut ChaCha8Rng::seed_from_u64(seed));
        let q = harden(&program, &best_effort(None, SaltChoice::Random));
        let gen = InputGeneratorSpec::from_program(&program, 24, 0.5);
        let r = equivalence_check(&program, &q, &gen, 50, seed).unwrap();
        prop_assert!(r.is_equivalent(), "{:?}", r.divergences.first());
    }

    #[test]
    fn interpreter_is_deterministic(seed: u64, trial in 0u64..1000) {
        let program = common::random_program(&mut ChaCha8Rng::seed_from_u64(seed));
        let gen = InputGeneratorSpec::from_program(&program, 32, 0.3);
        let binding = gen.binding(&program, seed, trial);
        prop_assert_eq!(evaluate(&program, &binding), evaluate(&program, &binding));
    }

    #[test]
    fn binary_search_recovers_string_thresholds(bound in proptest::collection::vec(any::<u8>(), 1..8)) {
        prop_assume!(bound.iter().any(|&b| b != 0));
        let b2 = bound.clone();
        let oracle = pathharden_core::ConditionalOracle::new(InputType::String, move |v| match v {
            Value::Str(s) => s.as_slice() < b2.as_slice(),
            Value::Int(_) => false,
        });
        let r = binary_search_attack(&oracle, 0, 1 << 64);
        prop_assert!(r.success);
        prop_assert!(r.oracle_queries <= 66);
        let mut padded = bound.clone();
        padded.resize(8, 0);
        prop_assert_eq!(r.recovered, Some(Value::Str(padded)));
    }
}
