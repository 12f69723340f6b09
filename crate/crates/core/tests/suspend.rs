//! Suspend/resume transparency and quiescence-annotated checkpoints.

use std::sync::Arc;

use fpgavirt_core::bisim::{runtime_for, Case};
use fpgavirt_core::checkpoint::Checkpoint;
use fpgavirt_core::corpus;
use fpgavirt_core::host::{FileOpKind, TaskEffect, TraceEntry};
use fpgavirt_core::runtime::{Interrupt, Runtime};
use fpgavirt_core::stimulus::Stimulus;
use fpgavirt_core::transform::{compile_source, Compiled};

fn start(case: &Case, c: &Arc<Compiled>) -> Runtime {
    let mut rt = runtime_for(case, c).unwrap();
    rt.load().unwrap();
    rt
}

fn uninterrupted(case: &Case, c: &Arc<Compiled>) -> Vec<TraceEntry> {
    let mut rt = start(case, c);
    rt.run(case.max_ticks).unwrap();
    rt.host.trace
}

/// Runs `k` ticks, checkpoints through the byte encoding, resumes in a
/// fresh runtime and returns the resumed trace.
fn resumed_at(case: &Case, c: &Arc<Compiled>, k: u64) -> Vec<TraceEntry> {
    let mut a = start(case, c);
    for _ in 0..k {
        a.step().unwrap();
    }
    let bytes = a.checkpoint().unwrap().encode();
    let mut b = runtime_for(case, c).unwrap();
    b.restore(&Checkpoint::decode(&bytes).unwrap()).unwrap();
    assert_eq!(b.checkpoint().unwrap().encode(), bytes, "restore then save must be idempotent");
    b.run(case.max_ticks).unwrap();
    b.host.trace
}

/// Entries from tick `k` on. Opens happen at load, which a resumed run
/// replaces with the checkpoint's descriptor table.
fn suffix(trace: &[TraceEntry], k: u64) -> Vec<TraceEntry> {
    trace
        .iter()
        .filter(|t| t.tick >= k && !matches!(t.effect, TaskEffect::FileOp(FileOpKind::Open, ..)))
        .cloned()
        .collect()
}

#[test]
fn mips32_resumes_transparently_at_every_tick() {
    let mut case = corpus::case("mips32", 0).unwrap();
    case.stimulus = Stimulus::with_ticks(50);
    let c = compile_source(&case.source, None).unwrap();
    let full = uninterrupted(&case, &c);
    assert!(full.len() >= 3, "the first 50 ticks should print");
    for k in 0..=50 {
        assert_eq!(resumed_at(&case, &c, k), suffix(&full, k), "k = {k}");
    }
}

#[test]
fn streaming_programs_resume_with_their_file_offsets() {
    for name in ["fig2", "regex", "nw"] {
        let mut case = corpus::case(name, 7).unwrap();
        case.stimulus = Stimulus::with_ticks(40);
        let c = compile_source(&case.source, None).unwrap();
        let full = uninterrupted(&case, &c);
        for k in [0, 1, 13, 39, 40] {
            assert_eq!(resumed_at(&case, &c, k), suffix(&full, k), "{name} k = {k}");
        }
    }
}

const ATTEMPT: u64 = 66;

#[test]
fn bitcoin_checkpoint_skips_volatile_state() {
    let case = corpus::case("bitcoin", 0).unwrap();
    let annotated = compile_source(corpus::BITCOIN, None).unwrap();
    let plain = compile_source(&corpus::without_yield(corpus::BITCOIN), None).unwrap();
    let plain_case = Case::new("bitcoin-plain", corpus::without_yield(corpus::BITCOIN), Stimulus::default());
    let mut a = start(&case, &annotated);
    let mut p = start(&plain_case, &plain);
    for _ in 0..3 * ATTEMPT {
        a.step().unwrap();
        p.step().unwrap();
    }
    let (ka, kp) = (a.checkpoint().unwrap(), p.checkpoint().unwrap());
    assert_eq!(ka.bits(), annotated.manifest.bits(Some(false)));
    assert_eq!(kp.bits(), plain.manifest.bits(None));
    assert!(ka.bits() * 10 <= kp.bits(), "{} of {} bits", ka.bits(), kp.bits());
}

#[test]
fn bitcoin_resumes_after_any_yield() {
    let case = corpus::case("bitcoin", 0).unwrap();
    let c = compile_source(&case.source, None).unwrap();
    let full = uninterrupted(&case, &c);
    let finished_at = full.last().unwrap().tick;
    for j in 1..=finished_at / ATTEMPT {
        let k = j * ATTEMPT;
        assert_eq!(resumed_at(&case, &c, k), suffix(&full, k), "k = {k}");
    }
}

#[test]
fn save_requests_wait_for_a_yield_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck");
    let case = corpus::case("bitcoin", 0).unwrap();
    let c = compile_source(&case.source, None).unwrap();
    let full = uninterrupted(&case, &c);
    let mut a = start(&case, &c);
    for _ in 0..100 {
        a.step().unwrap();
    }
    a.interrupts.push(Interrupt::SaveTo(path.clone()));
    while a.interrupts.contains(&Interrupt::SaveTo(path.clone())) {
        a.step().unwrap();
    }
    let ck = Checkpoint::read(&path).unwrap();
    assert_eq!(ck.tick, 2 * ATTEMPT);
    let mut b = runtime_for(&case, &c).unwrap();
    b.restore(&ck).unwrap();
    b.run(case.max_ticks).unwrap();
    assert_eq!(b.host.trace, suffix(&full, ck.tick));
}
