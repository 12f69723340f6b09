//! Reference interpreter: event-driven semantics of the original program
//! with system tasks executed inline.
//!
//! Schedule of one `settle`: bring continuous assigns to a fixed point,
//! collect the blocks whose guards fire (source order), sample every
//! guarded variable, then run the collected blocks one after another.
//! Repeat until no block fires. Continuous assigns are not re-evaluated
//! while blocks run.

use crate::comb::Comb;
use crate::error::{Error, Result};
use crate::frontend::ast::Edge;
use crate::host::TaskHost;
use crate::program::{Init, Program};
use crate::stimulus::{clock_input, Action, Stimulus};
use crate::store::{Store, Sys, Target};
use crate::value::Value;

pub const SETTLE_BOUND: u64 = 1 << 16;

pub fn fires(edge: Edge, prev: Value, cur: Value) -> bool {
    match edge {
        Edge::Pos => prev.bits() & 1 == 0 && cur.bits() & 1 == 1,
        Edge::Neg => prev.bits() & 1 == 1 && cur.bits() & 1 == 0,
        Edge::Any => prev.bits() != cur.bits(),
    }
}

#[derive(Debug, Clone)]
pub struct Interpreter {
    prog: Program,
    pub store: Store,
    comb: Comb,
    /// Store slots of guarded variables and their last sampled values.
    guarded: Vec<usize>,
    prev: Vec<Value>,
    /// Per block: (edge, index into `guarded`).
    block_guards: Vec<Vec<(Edge, usize)>>,
    pub nba: Vec<(Target, Value)>,
    pub bound: u64,
}

impl Interpreter {
    pub fn new(prog: Program) -> Interpreter {
        let store = Store::new(&prog);
        let comb = Comb::new(&prog, &store);
        let mut guarded: Vec<usize> = Vec::new();
        let mut block_guards = Vec::new();
        for b in &prog.blocks {
            let mut gs = Vec::new();
            for g in &b.guards {
                let slot = store.index_of(&g.var).expect("checked program");
                let k = match guarded.iter().position(|s| *s == slot) {
                    Some(k) => k,
                    None => {
                        guarded.push(slot);
                        guarded.len() - 1
                    }
                };
                gs.push((g.edge, k));
            }
            block_guards.push(gs);
        }
        let prev = guarded.iter().map(|&s| store.get_at(s)).collect();
        Interpreter {
            prog,
            store,
            comb,
            guarded,
            prev,
            block_guards,
            nba: Vec::new(),
            bound: SETTLE_BOUND,
        }
    }

    pub fn program(&self) -> &Program {
        &self.prog
    }

    /// Runs `$fopen` register initializers in declaration order.
    pub fn load(&mut self, host: &mut TaskHost) -> Result<()> {
        for (n, d) in &self.prog.decls {
            if let Init::Fopen(path) = &d.init {
                let fd = host.open(path)?;
                self.store.set(n, Value::new(32, fd))?;
            }
        }
        for (k, &s) in self.guarded.iter().enumerate() {
            self.prev[k] = self.store.get_at(s);
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Value> {
        self.store
            .get(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn set(&mut self, name: &str, v: Value) -> Result<()> {
        self.store.set(name, v)
    }

    pub fn settle(&mut self, sys: &mut dyn Sys) -> Result<()> {
        let mut events = 0u64;
        loop {
            self.comb.settle(&mut self.store, &mut events, self.bound)?;
            let cur: Vec<Value> = self.guarded.iter().map(|&s| self.store.get_at(s)).collect();
            let triggered: Vec<usize> = self
                .block_guards
                .iter()
                .enumerate()
                .filter(|(_, gs)| gs.iter().any(|&(e, k)| fires(e, self.prev[k], cur[k])))
                .map(|(i, _)| i)
                .collect();
            self.prev = cur;
            if triggered.is_empty() {
                return Ok(());
            }
            for i in triggered {
                events += 1;
                if events > self.bound {
                    return Err(Error::Oscillation(self.bound));
                }
                let body = &self.prog.blocks[i].body;
                self.store.exec(body, &mut self.nba, sys)?;
            }
        }
    }

    /// Latches pending non-blocking assignments in order; returns whether
    /// there were any.
    pub fn update(&mut self) -> bool {
        let any = !self.nba.is_empty();
        for (t, v) in std::mem::take(&mut self.nba) {
            self.store.write(t, v);
        }
        any
    }

    /// Applies inputs, then alternates settle and update until no
    /// non-blocking assignment is pending.
    pub fn tick(&mut self, inputs: &[(String, Value)], sys: &mut dyn Sys) -> Result<()> {
        for (n, v) in inputs {
            if !self.prog.inputs.contains(n) {
                return Err(Error::UnknownVariable(n.clone()));
            }
            self.store.set(n, *v)?;
        }
        for _ in 0..self.bound {
            self.settle(sys)?;
            if !self.update() {
                return Ok(());
            }
        }
        Err(Error::Oscillation(self.bound))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefRun {
    pub ticks: u64,
    pub finished: bool,
    /// Registers of the original program, memories flattened.
    pub registers: Vec<(String, Value)>,
}

/// Drives the interpreter through logical ticks the way the runtime drives
/// an engine: stimulus sets, clock rise, clock fall. Effects land in
/// `host.trace`. Save/restart/migrate actions are ignored.
pub fn run_reference(
    prog: &Program,
    stim: &Stimulus,
    host: &mut TaskHost,
    clock: Option<&str>,
    max_ticks: u64,
) -> Result<RefRun> {
    let clock = clock_input(prog, clock);
    let mut it = Interpreter::new(prog.clone());
    host.tick = 0;
    it.load(host)?;
    let limit = stim.ticks.unwrap_or(max_ticks).min(max_ticks);
    let mut tick = 0;
    while tick < limit && !host.finished {
        host.tick = tick;
        host.yielded = false;
        let mut inputs = Vec::new();
        for a in stim.actions_at(tick) {
            if let Action::Set(n, v) = a {
                let w = prog.decl(n).ok_or_else(|| Error::UnknownVariable(n.clone()))?.width;
                inputs.push((n.clone(), Value::new(w, *v)));
            }
        }
        if let Some(c) = &clock {
            inputs.push((c.clone(), Value::bit(true)));
        }
        it.tick(&inputs, host)?;
        if let Some(c) = &clock {
            it.tick(&[(c.clone(), Value::bit(false))], host)?;
        }
        tick += 1;
    }
    Ok(RefRun {
        ticks: tick,
        finished: host.finished,
        registers: register_snapshot(prog, &it.store),
    })
}

/// Flattened values of `prog`'s registers read from `store`.
pub fn register_snapshot(prog: &Program, store: &Store) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    for (n, d) in prog.registers() {
        match d.depth {
            Some(depth) => {
                for i in 0..depth as u64 {
                    out.push((format!("{n}[{i}]"), store.get_elem(n, i).expect("declared")));
                }
            }
            None => out.push((n.clone(), store.get(n).expect("declared"))),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{elaborate, find_top, parse};
    use crate::store::NoSys;

    fn prog(src: &str) -> Program {
        let su = parse(src).unwrap();
        elaborate(&su, &find_top(&su).unwrap()).unwrap()
    }

    #[test]
    fn continuous_assign_settles() {
        let mut it = Interpreter::new(prog(
            "module t(input wire [7:0] x); wire [7:0] y; assign y = x + 1; endmodule",
        ));
        it.tick(&[("x".into(), Value::new(8, 1))], &mut NoSys).unwrap();
        assert_eq!(it.get("y").unwrap().bits(), 2);
    }

    #[test]
    fn nonblocking_swap_waits_for_update() {
        let mut it = Interpreter::new(prog(
            "module t(input wire c); reg a = 0; reg b = 1; always @(posedge c) begin a <= b; b <= a; end endmodule",
        ));
        it.set("c", Value::bit(true)).unwrap();
        it.settle(&mut NoSys).unwrap();
        assert_eq!(it.nba.len(), 2);
        assert_eq!((it.get("a").unwrap().bits(), it.get("b").unwrap().bits()), (0, 1));
        it.update();
        assert_eq!((it.get("a").unwrap().bits(), it.get("b").unwrap().bits()), (1, 0));
        assert!(!it.update());
    }

    #[test]
    fn oscillation_is_reported() {
        let mut it = Interpreter::new(prog(
            "module t(); wire a; wire b; assign a = !b; assign b = a; endmodule",
        ));
        assert!(matches!(it.settle(&mut NoSys), Err(Error::Oscillation(_))));
    }

    #[test]
    fn idle_tick_changes_nothing() {
        let p = prog("module t(input wire clock); reg [3:0] r = 5; wire [3:0] w; assign w = r; endmodule");
        let mut it = Interpreter::new(p);
        it.tick(&[], &mut NoSys).unwrap();
        let before = it.store.snapshot();
        it.tick(&[], &mut NoSys).unwrap();
        assert_eq!(before, it.store.snapshot());
    }
}
