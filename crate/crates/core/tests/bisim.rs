//! Reference interpreter vs compiled engine: exact trace and register
//! equality over the corpus and a batch of generated programs.

use fpgavirt_core::bisim::{check_all, Case, Verdict};
use fpgavirt_core::corpus;
use fpgavirt_core::fuzz;

const FUZZ_SEEDS: u64 = 300;

#[test]
fn corpus_bisimulates() {
    let cases: Vec<Case> = (0..3).flat_map(corpus::all_cases).collect();
    for (c, v) in cases.iter().zip(check_all(&cases)) {
        assert!(v.is_match(), "{}: {v:?}", c.name);
    }
}

#[test]
fn generated_programs_bisimulate() {
    let cases: Vec<Case> = (0..FUZZ_SEEDS).map(|s| fuzz::generate(s).into()).collect();
    let verdicts = check_all(&cases);
    let mismatches: Vec<&Verdict> = verdicts.iter().filter(|v| matches!(v, Verdict::Mismatch(_))).collect();
    assert!(mismatches.is_empty(), "{mismatches:#?}");
    // The generator only builds programs the reference accepts.
    let valid = verdicts.iter().filter(|v| v.is_match()).count();
    assert_eq!(valid as u64, FUZZ_SEEDS);
}
