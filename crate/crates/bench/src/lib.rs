//! Fixtures shared by the benchmarks.

use pathharden_core::{harden_program, parse, HardeningPolicy, InputBinding, Program, SaltChoice, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CASE_STUDY: &str =
    "input req: string;\nif (contains(req, \"2250738585072011\")) {\n  reject;\n}\naccept;\n";

pub const INPUT_LENGTHS: [usize; 5] = [1024, 2048, 4096, 8192, 16384];

pub fn case_study() -> Program {
    parse(CASE_STUDY).expect("case study parses")
}

/// The case study hardened with an all-zero 16-byte salt.
pub fn hardened_case_study() -> Program {
    let policy = HardeningPolicy {
        salt: SaltChoice::Fixed(vec![0; 16]),
        ..HardeningPolicy::default()
    };
    harden_program(&case_study(), &policy, &mut ChaCha8Rng::seed_from_u64(0))
        .expect("case study hardens")
        .0
}

/// Printable bytes that never contain the case-study secret.
pub fn request(len: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(b'a'..=b'z')).collect()
}

pub fn request_binding(len: usize) -> InputBinding {
    InputBinding::new().with("req", Value::Str(request(len, len as u64)))
}
