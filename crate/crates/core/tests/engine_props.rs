//! ABI-level properties of the state-machine engine.

use std::sync::Arc;

use fpgavirt_core::bisim::{engine_registers, runtime_for, Case};
use fpgavirt_core::corpus;
use fpgavirt_core::engine::{Engine, Outcome, StateMachineEngine};
use fpgavirt_core::runtime::Runtime;
use fpgavirt_core::stimulus::Stimulus;
use fpgavirt_core::transform::fsm::Terminator;
use fpgavirt_core::transform::{compile_source, Compiled};
use fpgavirt_core::{Result, Value};
use proptest::prelude::*;

const EDGES: &str = "module t(input wire x, input wire [3:0] y);
  reg [7:0] n = 0;
  always @(posedge x) n <= n + 1;
  reg [7:0] m = 0;
  always @(y) m <= m + 1;
endmodule";

proptest! {
    /// A guard fires in exactly the evaluations that follow its edge,
    /// compared against direct edge detection on the values sent.
    #[test]
    fn guard_soundness(steps in proptest::collection::vec((any::<bool>(), 0u64..16), 1..60)) {
        let c = compile_source(EDGES, None).unwrap();
        let mut e = StateMachineEngine::new(c);
        let (mut px, mut py) = (false, 0u64);
        let (mut posedges, mut changes) = (0u64, 0u64);
        for (x, y) in steps {
            e.set("x", Value::bit(x)).unwrap();
            e.set("y", Value::new(4, y)).unwrap();
            let pos = !px && x;
            let any = py != y;
            let out = e.evaluate().unwrap();
            prop_assert_eq!(out == Outcome::Idle, !pos && !any);
            if out == Outcome::Done {
                prop_assert!(!e.update().unwrap());
            }
            posedges += pos as u64;
            changes += any as u64;
            prop_assert_eq!(e.get("n").unwrap().bits(), posedges & 0xff);
            prop_assert_eq!(e.get("m").unwrap().bits(), changes & 0xff);
            px = x;
            py = y;
        }
    }

    #[test]
    fn get_set_round_trip(pick in any::<prop::sample::Index>(), v: u64) {
        let c = compile_source(corpus::MIPS32, None).unwrap();
        let mut e = StateMachineEngine::new(Arc::clone(&c));
        let names: Vec<(String, u32)> = c.manifest.entries.iter().map(|m| (m.name.clone(), m.width)).collect();
        let (name, width) = pick.get(&names);
        e.set(name, Value::new(64, v)).unwrap();
        prop_assert_eq!(e.get(name).unwrap(), Value::new(*width, v));
    }
}

/// Forwards to a state-machine engine, reading every register whenever a
/// trap is outstanding.
struct Snooping(StateMachineEngine, Vec<String>);

impl Engine for Snooping {
    fn get(&mut self, n: &str) -> Result<Value> {
        self.0.get(n)
    }
    fn set(&mut self, n: &str, v: Value) -> Result<()> {
        self.0.set(n, v)
    }
    fn evaluate(&mut self) -> Result<Outcome> {
        let o = self.0.evaluate()?;
        if matches!(o, Outcome::Trap(_)) {
            for n in &self.1 {
                self.0.get(n)?;
            }
        }
        Ok(o)
    }
    fn cont(&mut self, r: &[Value]) -> Result<()> {
        self.0.cont(r)
    }
    fn update(&mut self) -> Result<bool> {
        self.0.update()
    }
    fn device_cycles(&self) -> u64 {
        self.0.device_cycles()
    }
}

fn finished(case: &Case, c: &Arc<Compiled>, rt: &mut Runtime) -> (Vec<String>, Vec<(String, Value)>) {
    rt.load().unwrap();
    rt.run(case.max_ticks).unwrap();
    let trace = rt.host.trace.iter().map(|t| t.to_string()).collect();
    (trace, engine_registers(c, rt.engine()).unwrap())
}

#[test]
fn gets_between_trap_and_continue_change_nothing() {
    for name in ["fig2", "adpcm", "df"] {
        let case = corpus::case(name, 4).unwrap();
        let c = compile_source(&case.source, None).unwrap();
        let plain = finished(&case, &c, &mut runtime_for(&case, &c).unwrap());
        let names = c.manifest.entries.iter().map(|m| m.name.clone()).collect();
        let snoop = Snooping(StateMachineEngine::new(Arc::clone(&c)), names);
        let mut rt = Runtime::new(Arc::clone(&c), Box::new(snoop), case.host(), case.stimulus.clone(), None).unwrap();
        assert_eq!(finished(&case, &c, &mut rt), plain, "{name}");
    }
}

#[test]
fn identical_messages_give_identical_state() {
    let case = corpus::case("nw", 2).unwrap();
    let c = compile_source(&case.source, None).unwrap();
    let mut a = runtime_for(&case, &c).unwrap();
    let mut b = runtime_for(&case, &c).unwrap();
    a.load().unwrap();
    b.load().unwrap();
    for _ in 0..100 {
        a.step().unwrap();
        b.step().unwrap();
        assert_eq!(a.checkpoint().unwrap(), b.checkpoint().unwrap());
        assert_eq!(a.device_cycles(), b.device_cycles());
    }
}

fn straight_line(c: &Compiled) -> bool {
    c.machine
        .states
        .iter()
        .all(|s| matches!(s.term, Terminator::Task { .. } | Terminator::Fallthrough(_) | Terminator::Done))
}

#[test]
fn every_corpus_tick_costs_at_least_three_cycles() {
    for case in corpus::all_cases(0) {
        let c = compile_source(&case.source, None).unwrap();
        let mut rt = runtime_for(&case, &c).unwrap();
        rt.load().unwrap();
        let mut ticks = 0;
        while let Some(r) = rt.step().unwrap() {
            assert!(r.cycles >= 3, "{} tick {}: {} cycles", case.name, r.tick, r.cycles);
            ticks += 1;
            if ticks == case.max_ticks {
                break;
            }
        }
        assert!(ticks > 0);
    }
}

#[test]
fn straight_line_ticks_cost_three_plus_one_per_trap() {
    let programs = [
        "module t(input wire clock); reg [7:0] n = 0; always @(posedge clock) n <= n + 1; endmodule",
        "module t(input wire clock); reg [7:0] n = 0;
         always @(posedge clock) begin $display(\"%d\", n); n <= n + 1; end endmodule",
        "module t(input wire clock); reg [31:0] fd = $fopen(\"f\"); reg [31:0] w; reg [31:0] s = 0;
         always @(posedge clock) begin $fread32(fd, w); s <= s + w; $display(\"%d\", s); end endmodule",
    ];
    for (i, src) in programs.iter().enumerate() {
        let c = compile_source(src, None).unwrap();
        assert!(straight_line(&c));
        let mut case = Case::new("t", *src, Stimulus::with_ticks(10));
        case.files.push(("f".into(), corpus::words_to_bytes(&[1, 2, 3])));
        let mut rt = runtime_for(&case, &c).unwrap();
        rt.load().unwrap();
        for _ in 0..10 {
            let r = rt.step().unwrap().unwrap();
            assert_eq!(r.traps, i as u64);
            assert_eq!(r.cycles, 3 + r.traps, "program {i} tick {}", r.tick);
        }
    }
}
