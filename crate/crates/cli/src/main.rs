use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::rngs::OsRng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value as Json};

use pathharden_core::attack::{AttackBudgets, DEFAULT_BUDGET};
use pathharden_core::classify::ClassifierPolicy;
use pathharden_core::{
    attack_report, equivalence_check, evaluate, explain_report, harden_program, parse_bytes,
    pretty_print, scan_program, FrontendError, HardenError, HardeningMode, HardeningPolicy,
    InputBinding, InputGeneratorSpec, Program, SaltChoice, Value, FORMAT_VERSION,
};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (format version 1)");

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "pathharden", version = VERSION, about = "Hide the trigger constants of MiniLang input filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a program.
    CheckSyntax {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Classify every conditional as hardenable or not.
    Classify {
        file: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        json: bool,
    },
    /// Rewrite hardenable conditionals into digest comparisons.
    Harden(HardenArgs),
    /// Evaluate a program on one input binding.
    Run {
        file: PathBuf,
        /// `name=value`; string values accept \xNN, \" and \\ escapes.
        #[arg(long = "input", value_name = "NAME=VALUE")]
        inputs: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Compare two programs on generated inputs.
    Check {
        original: PathBuf,
        hardened: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, env = "PATHHARDEN_SEED", default_value_t = 0)]
        seed: u64,
        /// Maximum generated string length.
        #[arg(long, default_value_t = 64)]
        max_len: usize,
        /// Fraction of values that embed one of the original's literals.
        #[arg(long, default_value_t = 0.01)]
        plant_fraction: f64,
        #[arg(long)]
        json: bool,
    },
    /// Attack every conditional as a black box.
    Attack {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        #[arg(long, env = "PATHHARDEN_SEED", default_value_t = 0)]
        seed: u64,
        /// Put this guess at the front of the dictionary (typed per site).
        #[arg(long, value_name = "VALUE")]
        plant: Vec<String>,
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct PolicyArgs {
    /// Minimum guess cost, in bits, for a site to be hardenable.
    #[arg(long, value_name = "BITS", default_value_t = 64.0)]
    min_entropy_bits: f64,
    /// Minimum needle length, in bytes, for substring tests.
    #[arg(long, value_name = "BYTES", default_value_t = 8)]
    min_needle_len: usize,
}

impl PolicyArgs {
    fn policy(&self) -> Result<ClassifierPolicy, Failure> {
        ClassifierPolicy::new(self.min_entropy_bits, self.min_needle_len, 8.0)
            .map_err(|e| Failure::usage("policy", e.to_string()))
    }
}

#[derive(Args)]
struct HardenArgs {
    file: PathBuf,
    /// Write the hardened program here instead of standard output.
    #[arg(short = 'o', long = "output", value_name = "FILE")]
    output: Option<PathBuf>,
    /// Fail if any conditional cannot be hardened (default).
    #[arg(long, conflicts_with = "best_effort")]
    strict: bool,
    /// Harden what qualifies and leave the rest in place.
    #[arg(long)]
    best_effort: bool,
    /// Salt as hex; drawn at random when omitted.
    #[arg(long, value_name = "HEX", conflicts_with = "no_salt")]
    salt: Option<String>,
    #[arg(long)]
    no_salt: bool,
    #[arg(long, value_name = "N")]
    truncate_bits: Option<u32>,
    /// Seeds the salt generator.
    #[arg(long, env = "PATHHARDEN_SEED")]
    seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long)]
    json: bool,
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
    details: Json,
}

impl Failure {
    fn usage(kind: &'static str, message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            kind,
            message: message.into(),
            details: Json::Null,
        }
    }

    fn operational(kind: &'static str, message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_FAILURE,
            kind,
            message: message.into(),
            details: Json::Null,
        }
    }

    fn with_details(mut self, details: Json) -> Self {
        self.details = details;
        self
    }
}

/// Adds `format_version` to a serialized document.
fn document(body: impl Serialize) -> Json {
    let mut doc = serde_json::to_value(body).expect("serializable output");
    match &mut doc {
        Json::Object(map) => {
            map.insert("format_version".into(), json!(FORMAT_VERSION));
            doc
        }
        _ => json!({ "format_version": FORMAT_VERSION, "result": doc }),
    }
}

fn print_json(doc: &Json) {
    println!("{}", serde_json::to_string_pretty(doc).expect("serializable output"));
}

fn write_json(path: &Path, doc: &Json) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(doc).expect("serializable output") + "\n";
    fs::write(path, text)
        .map_err(|e| Failure::operational("io", format!("cannot write {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Program, Failure> {
    let bytes = fs::read(path)
        .map_err(|e| Failure::usage("io", format!("cannot read {}: {e}", path.display())))?;
    parse_bytes(&bytes).map_err(|e| frontend_failure(path, e))
}

fn frontend_failure(path: &Path, e: FrontendError) -> Failure {
    let (kind, message, details) = match &e {
        FrontendError::Parse(p) => ("parse", format!("{}:{p}", path.display()), json!([p])),
        FrontendError::Validation(errors) => (
            "validation",
            errors
                .iter()
                .map(|v| format!("{}:{v}", path.display()))
                .collect::<Vec<_>>()
                .join("\n"),
            json!(errors),
        ),
    };
    Failure::usage(kind, message).with_details(details)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = match &cli.command {
        Command::CheckSyntax { json, .. }
        | Command::Classify { json, .. }
        | Command::Run { json, .. }
        | Command::Check { json, .. }
        | Command::Attack { json, .. } => *json,
        Command::Harden(args) => args.json,
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            if json {
                print_json(&json!({
                    "format_version": FORMAT_VERSION,
                    "ok": false,
                    "error": { "kind": f.kind, "message": f.message, "details": f.details },
                }));
            }
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<u8, Failure> {
    match command {
        Command::CheckSyntax { file, json } => check_syntax(&file, json),
        Command::Classify { file, policy, json } => classify(&file, &policy, json),
        Command::Harden(args) => harden(&args),
        Command::Run { file, inputs, json } => run(&file, &inputs, json),
        Command::Check {
            original,
            hardened,
            trials,
            seed,
            max_len,
            plant_fraction,
            json,
        } => check(&original, &hardened, trials, seed, max_len, plant_fraction, json),
        Command::Attack {
            file,
            budget,
            seed,
            plant,
            report,
            policy,
            json,
        } => attack(&file, budget, seed, &plant, report.as_deref(), &policy, json),
    }
}

fn check_syntax(file: &Path, json: bool) -> Result<u8, Failure> {
    let program = load(file)?;
    let sites = program.sites().len();
    if json {
        print_json(&json!({
            "format_version": FORMAT_VERSION,
            "ok": true,
            "inputs": program.inputs.iter().map(|d| json!({"name": d.name, "type": d.ty})).collect::<Vec<_>>(),
            "sites": sites,
        }));
    } else {
        println!("{}: ok ({} inputs, {sites} conditionals)", file.display(), program.inputs.len());
    }
    Ok(0)
}

fn classify(file: &Path, policy: &PolicyArgs, json: bool) -> Result<u8, Failure> {
    let program = load(file)?;
    let classifications = scan_program(&program, &policy.policy()?);
    if json {
        print_json(&document(json!({ "classifications": classifications })));
    } else {
        for c in &classifications {
            let detail = c.detail();
            println!(
                "site {} at {}: {}{} ({:.1} bits): {}",
                c.index,
                c.site,
                c.kind_name(),
                if detail.is_empty() { String::new() } else { format!(" [{detail}]") },
                c.guess_cost_bits,
                c.reason
            );
        }
    }
    Ok(0)
}

fn harden(args: &HardenArgs) -> Result<u8, Failure> {
    let program = load(&args.file)?;
    let salt = match (&args.salt, args.no_salt) {
        (Some(hex_salt), _) => SaltChoice::Fixed(
            hex::decode(hex_salt).map_err(|e| Failure::usage("usage", format!("--salt: {e}")))?,
        ),
        (None, true) => SaltChoice::None,
        (None, false) => SaltChoice::Random,
    };
    let policy = HardeningPolicy {
        classifier: args.policy.policy()?,
        salt,
        truncate_bits: args.truncate_bits,
        mode: if args.best_effort {
            HardeningMode::BestEffort
        } else {
            HardeningMode::Strict
        },
    };
    let result = match args.seed {
        Some(seed) => harden_program(&program, &policy, &mut ChaCha8Rng::seed_from_u64(seed)),
        None => harden_program(&program, &policy, &mut OsRng),
    };
    let (hardened, report) = result.map_err(|e| match &e {
        HardenError::StrictModeViolation(sites) => {
            Failure::operational("strict_mode_violation", e.to_string()).with_details(json!(sites))
        }
        HardenError::SecretLeak(_) => Failure::operational("secret_leak", e.to_string()),
        HardenError::Config(_) => Failure::usage("usage", e.to_string()),
        HardenError::Invalid(errors) => {
            Failure::usage("validation", e.to_string()).with_details(json!(errors))
        }
    })?;
    let text = pretty_print(&hardened);
    let report_doc = document(&report);
    if let Some(path) = &args.report {
        write_json(path, &report_doc)?;
    }
    if let Some(path) = &args.output {
        fs::write(path, &text).map_err(|e| {
            Failure::operational("io", format!("cannot write {}: {e}", path.display()))
        })?;
    }
    if args.json {
        print_json(&json!({
            "format_version": FORMAT_VERSION,
            "ok": true,
            "output": args.output,
            "program": text,
            "report": report_doc,
        }));
    } else {
        if args.output.is_none() {
            print!("{text}");
        }
        eprint!("{}", explain_report(&report));
    }
    Ok(0)
}

fn run(file: &Path, inputs: &[String], json: bool) -> Result<u8, Failure> {
    let program = load(file)?;
    let binding = InputBinding::from_assignments(&program, inputs)
        .map_err(|e| Failure::usage("input", e))?;
    let (verdict, cost) = evaluate(&program, &binding)
        .map_err(|e| Failure::operational("evaluation", e.to_string()))?;
    if json {
        print_json(&document(json!({
            "verdict": verdict,
            "cost": {
                "steps": cost.steps,
                "hash_invocations": cost.hash_invocations,
                "bytes_hashed": cost.bytes_hashed,
                "total": cost.total(),
            },
        })));
    } else {
        println!("{verdict}");
        eprintln!(
            "steps {}, hash invocations {}, bytes hashed {}",
            cost.steps, cost.hash_invocations, cost.bytes_hashed
        );
    }
    Ok(0)
}

fn check(
    original: &Path,
    hardened: &Path,
    trials: u64,
    seed: u64,
    max_len: usize,
    plant_fraction: f64,
    json: bool,
) -> Result<u8, Failure> {
    let p = load(original)?;
    let q = load(hardened)?;
    let gen = InputGeneratorSpec::from_program(&p, max_len, plant_fraction);
    let report = equivalence_check(&p, &q, &gen, trials, seed)
        .map_err(|e| Failure::usage("check", e.to_string()))?;
    if json {
        print_json(&document(&report));
    } else {
        println!(
            "{} trials, {} divergences ({} accept->reject, {} reject->accept), original rejected {}",
            report.trials,
            report.divergences.len(),
            report.counts.accept_reject,
            report.counts.reject_accept,
            report.rejects_p
        );
        for (name, summary) in [
            ("steps", &report.cost_ratio.steps),
            ("hash_invocations", &report.cost_ratio.hash_invocations),
            ("bytes_hashed", &report.cost_ratio.bytes_hashed),
            ("total", &report.cost_ratio.total),
        ] {
            match summary {
                Some(s) => println!(
                    "cost ratio {name}: min {:.3}, median {:.3}, max {:.3}",
                    s.min, s.median, s.max
                ),
                None => println!("cost ratio {name}: undefined"),
            }
        }
        for d in report.divergences.iter().take(10) {
            eprintln!(
                "divergence at trial {}: {} vs {} on {}",
                d.trial,
                d.verdict_p,
                d.verdict_q,
                serde_json::to_string(&d.inputs).expect("serializable output")
            );
        }
    }
    Ok(if report.is_equivalent() { 0 } else { EXIT_FAILURE })
}

#[allow(clippy::too_many_arguments)]
fn attack(
    file: &Path,
    budget: u64,
    seed: u64,
    plant: &[String],
    report_path: Option<&Path>,
    policy: &PolicyArgs,
    json: bool,
) -> Result<u8, Failure> {
    if budget == 0 {
        return Err(Failure::usage("usage", "--budget must be at least 1"));
    }
    let program = load(file)?;
    let classifications = scan_program(&program, &policy.policy()?);
    let mut planted = Vec::new();
    for text in plant {
        // a guess that parses as an int is tried against int inputs too
        if let Ok(n) = text.parse::<u64>() {
            planted.push(Value::Int(n));
        }
        planted.push(
            Value::parse_as(pathharden_core::InputType::String, text)
                .map_err(|e| Failure::usage("usage", format!("--plant: {e}")))?,
        );
    }
    let budgets = AttackBudgets {
        dictionary: budget,
        exhaustive: budget,
        planted,
    };
    let report = attack_report(&program, &classifications, &budgets, seed)
        .map_err(|e| Failure::usage("attack", e.to_string()))?;
    let doc = document(&report);
    if let Some(path) = report_path {
        write_json(path, &doc)?;
    }
    if json {
        print_json(&doc);
    } else {
        for site in &report.sites {
            let outcome = site
                .outcomes
                .iter()
                .map(|o| {
                    format!(
                        "{:?} {} in {} queries",
                        o.attacker,
                        if o.success { "succeeded" } else { "failed" },
                        o.queries
                    )
                })
                .collect::<Vec<_>>()
                .join(", ");
            let verdict = match site.consistent {
                Some(true) => "as predicted",
                Some(false) => "NOT as predicted",
                None => "excluded",
            };
            println!(
                "site {} at {}: {}: {}; {verdict}",
                site.index,
                site.span,
                site.kind,
                if outcome.is_empty() { "not attacked".to_string() } else { outcome }
            );
        }
        println!("consistency: {}", report.consistency);
    }
    Ok(match report.consistency {
        pathharden_core::Consistency::Pass => 0,
        pathharden_core::Consistency::Fail => EXIT_FAILURE,
    })
}
