//! The engine contract and the state-machine engine that runs a compiled
//! program one device cycle at a time.
//!
//! Cycle accounting: a settle cycle brings continuous assigns (guard wires
//! included) to a fixed point and samples every guarded variable into its
//! previous-value register; each state executed costs one cycle; latching
//! non-blocking assignments costs one cycle. Continue is free.

use std::sync::Arc;

use crate::comb::Comb;
use crate::error::{Error, Result};
use crate::frontend::ast::{Edge, LValue};
use crate::interp::{fires, SETTLE_BOUND};
use crate::store::{split_task_args, Arg, NoSys, Store, Target};
use crate::transform::merge::{DONE, STATE_REG, TASK_REG};
use crate::transform::{Compiled, Terminator};
use crate::value::Value;

pub const STEP_BOUND: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trap {
    pub code: u32,
    pub args: Vec<Arg>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Trap(Trap),
    Done,
    /// No guard fired; the core did not run.
    Idle,
}

/// What the runtime needs from an engine, local or remote.
pub trait Engine: Send {
    fn get(&mut self, name: &str) -> Result<Value>;
    fn set(&mut self, name: &str, v: Value) -> Result<()>;
    fn evaluate(&mut self) -> Result<Outcome>;
    /// Resumes after a trap. `retvals[0]`, if present, goes to the task's
    /// output argument.
    fn cont(&mut self, retvals: &[Value]) -> Result<()>;
    /// Latches pending non-blocking assignments. Returns whether a guard
    /// fires afterwards, i.e. whether another evaluate is needed.
    fn update(&mut self) -> Result<bool>;
    fn device_cycles(&self) -> u64;
    /// Whether the engine's host asked for a state-safe pause.
    fn pause_requested(&mut self) -> Result<bool> {
        Ok(false)
    }
    /// Called at a permitted boundary after the runtime has read the
    /// state; returns once the host has finished reprogramming.
    fn pause(&mut self) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Pending {
    code: u32,
    out: Option<LValue>,
}

#[derive(Debug, Clone)]
pub struct StateMachineEngine {
    compiled: Arc<Compiled>,
    store: Store,
    comb: Comb,
    /// (edge, guarded variable slot, guard wire slot)
    guards: Vec<(Edge, usize, usize)>,
    /// (guarded variable slot, previous-value register slot)
    prevs: Vec<(usize, usize)>,
    state: usize,
    task: usize,
    done: usize,
    nba: Vec<(Target, Value)>,
    pending: Option<Pending>,
    cycles: u64,
}

impl StateMachineEngine {
    pub fn new(compiled: Arc<Compiled>) -> StateMachineEngine {
        let store = Store::new(&compiled.program);
        let comb = Comb::new(&compiled.program, &store);
        let slot = |n: &str| store.index_of(n).expect("generated register");
        let guards = compiled
            .meta
            .guards
            .iter()
            .map(|(g, w)| (g.edge, slot(&g.var), slot(w)))
            .collect();
        let prevs = compiled
            .meta
            .prev_regs
            .iter()
            .map(|(v, p)| (slot(v), slot(p)))
            .collect();
        let (state, task, done) = (slot(STATE_REG), slot(TASK_REG), slot(DONE));
        StateMachineEngine {
            compiled,
            store,
            comb,
            guards,
            prevs,
            state,
            task,
            done,
            nba: Vec::new(),
            pending: None,
            cycles: 0,
        }
    }

    pub fn compiled(&self) -> &Arc<Compiled> {
        &self.compiled
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn trap_pending(&self) -> bool {
        self.pending.is_some()
    }

    /// Settles continuous assigns, reports whether any guard wire is set,
    /// and latches every previous-value register.
    fn sample(&mut self) -> Result<bool> {
        let mut events = 0;
        self.comb.settle(&mut self.store, &mut events, SETTLE_BOUND)?;
        let fired = self
            .guards
            .iter()
            .any(|&(_, _, w)| self.store.get_at(w).is_true());
        debug_assert!(self.guards.iter().all(|&(e, v, w)| {
            let p = self.prevs.iter().find(|p| p.0 == v).unwrap().1;
            fires(e, self.store.get_at(p), self.store.get_at(v)) == self.store.get_at(w).is_true()
        }));
        for &(v, p) in &self.prevs {
            let x = self.store.get_at(v);
            self.store.write(Target::Whole(p), x);
        }
        Ok(fired)
    }

    fn reg(&self, slot: usize) -> u64 {
        self.store.get_at(slot).bits()
    }

    fn put(&mut self, slot: usize, v: u64) {
        let w = self.store.get_at(slot).width();
        self.store.write(Target::Whole(slot), Value::new(w, v));
    }

    fn charge(&mut self, spent: &mut u64) -> Result<()> {
        self.cycles += 1;
        *spent += 1;
        if *spent > STEP_BOUND {
            return Err(Error::Runaway(STEP_BOUND));
        }
        Ok(())
    }
}

impl Engine for StateMachineEngine {
    fn get(&mut self, name: &str) -> Result<Value> {
        self.store.get_named(name)
    }

    /// A change to a guarded variable records the old value as its
    /// previous value, so the edge is visible at the next settle.
    fn set(&mut self, name: &str, v: Value) -> Result<()> {
        let old = self.store.set_named(name, v)?;
        if let Some(i) = self.store.index_of(name) {
            let new = self.store.get_at(i);
            if new != old {
                if let Some(&(_, p)) = self.prevs.iter().find(|(s, _)| *s == i) {
                    self.store.write(Target::Whole(p), old);
                }
            }
        }
        Ok(())
    }

    fn evaluate(&mut self) -> Result<Outcome> {
        if self.pending.is_some() {
            return Err(Error::Protocol("evaluate while a trap is pending".into()));
        }
        let compiled = Arc::clone(&self.compiled);
        let machine = &compiled.machine;
        let mut spent = 0;
        if self.reg(self.state) == 0 {
            self.charge(&mut spent)?;
            if !self.sample()? {
                return Ok(Outcome::Idle);
            }
            self.put(self.done, 0);
            self.put(self.state, 1);
        }
        loop {
            self.charge(&mut spent)?;
            let st = machine.state(self.reg(self.state) as u32);
            for s in &st.stmts {
                self.store.exec(s, &mut self.nba, &mut NoSys)?;
            }
            let next = match &st.term {
                Terminator::Task {
                    code,
                    kind,
                    args,
                    next,
                } => {
                    let (ins, out) = split_task_args(*kind, args);
                    let args = self.store.eval_args(ins, &mut NoSys)?;
                    self.put(self.task, *code as u64);
                    self.put(self.state, *next as u64);
                    self.pending = Some(Pending { code: *code, out });
                    return Ok(Outcome::Trap(Trap { code: *code, args }));
                }
                Terminator::Branch {
                    cond,
                    then_id,
                    else_id,
                } => {
                    if self.store.eval(cond, &mut NoSys)?.is_true() {
                        *then_id
                    } else {
                        *else_id
                    }
                }
                Terminator::CaseBranch {
                    subject,
                    arms,
                    default,
                } => {
                    let v = self.store.eval(subject, &mut NoSys)?.bits();
                    let mut chosen = None;
                    for (labels, id) in arms {
                        for l in labels {
                            let lv = self.store.eval(l, &mut NoSys)?.bits();
                            if chosen.is_none() && lv == v {
                                chosen = Some(*id);
                            }
                        }
                    }
                    chosen.unwrap_or(*default)
                }
                Terminator::Fallthrough(n) => *n,
                Terminator::Done => {
                    self.put(self.done, 1);
                    self.put(self.state, 0);
                    if !self.sample()? {
                        return Ok(Outcome::Done);
                    }
                    // Blocking writes raised a guard: another settle cycle.
                    self.charge(&mut spent)?;
                    self.put(self.done, 0);
                    1
                }
            };
            self.put(self.state, next as u64);
        }
    }

    fn cont(&mut self, retvals: &[Value]) -> Result<()> {
        let p = self
            .pending
            .take()
            .ok_or_else(|| Error::Protocol("continue without a pending trap".into()))?;
        if let (Some(out), Some(v)) = (&p.out, retvals.first()) {
            let t = self.store.resolve(out, &mut NoSys)?;
            self.store.write(t, *v);
        }
        debug_assert_eq!(self.reg(self.task), p.code as u64);
        self.put(self.task, 0);
        Ok(())
    }

    fn update(&mut self) -> Result<bool> {
        if self.pending.is_some() {
            return Err(Error::Protocol("update while a trap is pending".into()));
        }
        self.cycles += 1;
        for (t, v) in std::mem::take(&mut self.nba) {
            self.store.write(t, v);
        }
        let mut events = 0;
        self.comb.settle(&mut self.store, &mut events, SETTLE_BOUND)?;
        let fired = self
            .guards
            .iter()
            .any(|&(_, _, w)| self.store.get_at(w).is_true());
        if !fired {
            for &(v, p) in &self.prevs {
                let x = self.store.get_at(v);
                self.store.write(Target::Whole(p), x);
            }
        }
        Ok(fired)
    }

    fn device_cycles(&self) -> u64 {
        self.cycles
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::compile_source;

    fn engine(src: &str) -> StateMachineEngine {
        StateMachineEngine::new(compile_source(src, None).unwrap())
    }

    const SWAP: &str = "module t(input wire clock); reg a = 0; reg b = 1;
        always @(posedge clock) begin a <= b; b <= a; end endmodule";

    #[test]
    fn straight_line_program_is_done_in_two_cycles() {
        let mut e = engine(SWAP);
        e.set("clock", Value::bit(true)).unwrap();
        assert_eq!(e.evaluate().unwrap(), Outcome::Done);
        assert_eq!(e.device_cycles(), 2);
        assert_eq!(e.get("a").unwrap().bits(), 0);
        assert!(!e.update().unwrap());
        assert_eq!(e.device_cycles(), 3);
        assert_eq!((e.get("a").unwrap().bits(), e.get("b").unwrap().bits()), (1, 0));
    }

    #[test]
    fn idle_evaluate_costs_one_cycle() {
        let mut e = engine(SWAP);
        assert_eq!(e.evaluate().unwrap(), Outcome::Idle);
        assert_eq!(e.device_cycles(), 1);
        let before = e.store().snapshot();
        assert!(!e.update().unwrap());
        assert_eq!(e.device_cycles(), 2);
        assert_eq!(before, e.store().snapshot());
    }

    #[test]
    fn clock_edge_follows_the_last_set() {
        let mut e = engine(SWAP);
        for v in [true, false, true] {
            e.set("clock", Value::bit(v)).unwrap();
        }
        assert_eq!(e.evaluate().unwrap(), Outcome::Done);
        // Setting to the current value leaves prev-tracking alone.
        e.set("clock", Value::bit(true)).unwrap();
        assert_eq!(e.evaluate().unwrap(), Outcome::Idle);
    }

    #[test]
    fn trap_and_continue() {
        let mut e = engine(
            "module t(input wire clock); reg [7:0] n = 5;
             always @(posedge clock) begin $display(\"n=%d\", n); n = n + 1; end endmodule",
        );
        e.set("clock", Value::bit(true)).unwrap();
        let Outcome::Trap(t) = e.evaluate().unwrap() else {
            panic!()
        };
        assert_eq!(t.args[1], Arg::Val(Value::new(8, 5)));
        assert_eq!(e.get(TASK_REG).unwrap().bits(), t.code as u64);
        assert!(matches!(e.evaluate(), Err(Error::Protocol(_))));
        assert!(matches!(e.update(), Err(Error::Protocol(_))));
        e.cont(&[]).unwrap();
        assert_eq!(e.get(TASK_REG).unwrap().bits(), 0);
        assert_eq!(e.evaluate().unwrap(), Outcome::Done);
        assert_eq!(e.get("n").unwrap().bits(), 6);
        assert!(matches!(e.cont(&[]), Err(Error::Protocol(_))));
    }

    #[test]
    fn unknown_names_and_memory_elements() {
        let mut e = engine("module t(); reg [3:0] m [0:3]; endmodule");
        assert!(matches!(e.set("nope", Value::bit(true)), Err(Error::UnknownVariable(_))));
        assert!(e.get("m[4]").is_err());
        e.set("m[2]", Value::new(8, 0x1f)).unwrap();
        assert_eq!(e.get("m[2]").unwrap(), Value::new(4, 0xf));
    }

    #[test]
    fn blocking_write_to_guarded_variable_reenters_the_core() {
        let mut e = engine(
            "module t(input wire clock); reg go = 0; reg [3:0] hits = 0;
             always @(posedge clock) go = 1;
             always @(posedge go) hits = hits + 1; endmodule",
        );
        e.set("clock", Value::bit(true)).unwrap();
        assert_eq!(e.evaluate().unwrap(), Outcome::Done);
        assert_eq!(e.get("hits").unwrap().bits(), 1);
        // settle + state, then settle + state again for the `go` edge.
        assert_eq!(e.device_cycles(), 4);
    }
}
