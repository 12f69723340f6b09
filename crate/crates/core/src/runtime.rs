//! Drives logical clock ticks against an engine, services task traps and
//! performs checkpoint, restart, migration and state-safe pauses at tick
//! boundaries.
//!
//! One logical tick: apply the tick's stimulus sets, raise the clock and run
//! a half (evaluate, service traps, continue, until done; then update, and
//! repeat while the update retriggers a guard); lower the clock and run a
//! second half. The falling half is skipped when every guard of the program
//! is `posedge <clock>`: no guard can fire and the engine records the edge
//! in its previous-value register at the next set.

use std::collections::VecDeque;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use crate::checkpoint::{Checkpoint, FileRecord};
use crate::engine::{Engine, Outcome, Trap, STEP_BOUND};
use crate::error::{Error, Result};
use crate::frontend::ast::{Edge, TaskKind};
use crate::host::{HostRequest, TaskHost};
use crate::interp::SETTLE_BOUND;
use crate::program::Init;
use crate::stimulus::{clock_input, Action, Stimulus};
use crate::transform::Compiled;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Interrupt {
    SaveTo(PathBuf),
    RestartFrom(PathBuf),
    Migrate(String),
    StateSafePause,
    Terminate,
}

/// Pending runtime actions. Clones share the queue, so other threads can
/// append while the runtime is ticking.
#[derive(Debug, Clone, Default)]
pub struct InterruptQueue(Arc<Mutex<VecDeque<Interrupt>>>);

impl InterruptQueue {
    pub fn push(&self, i: Interrupt) {
        self.0.lock().unwrap().push_back(i);
    }

    pub fn pop(&self) -> Option<Interrupt> {
        self.0.lock().unwrap().pop_front()
    }

    pub fn len(&self) -> usize {
        self.0.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, i: &Interrupt) -> bool {
        self.0.lock().unwrap().contains(i)
    }
}

/// Opens an engine for the same compiled program somewhere else.
pub trait Connector: Send {
    fn connect(&mut self, endpoint: &str, compiled: &Arc<Compiled>) -> Result<Box<dyn Engine>>;
}

/// `wall_seconds,tick,virtual_hz,event` rows. Periodic rows are written at
/// most every `interval` seconds; event rows always.
pub struct Profiler {
    out: Box<dyn Write + Send>,
    start: Instant,
    last: (f64, u64),
    pub interval: f64,
}

impl Profiler {
    pub fn new(mut out: Box<dyn Write + Send>, interval: f64) -> Result<Profiler> {
        writeln!(out, "wall_seconds,tick,virtual_hz,event").map_err(|e| Error::io("profile", &e))?;
        Ok(Profiler {
            out,
            start: Instant::now(),
            last: (0.0, 0),
            interval,
        })
    }

    pub fn create(path: &Path, interval: f64) -> Result<Profiler> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), &e))?;
        Profiler::new(Box::new(std::io::BufWriter::new(f)), interval)
    }

    pub fn record(&mut self, tick: u64, event: Option<&str>) -> Result<()> {
        let now = self.start.elapsed().as_secs_f64();
        let dt = now - self.last.0;
        if event.is_none() && dt < self.interval {
            return Ok(());
        }
        let hz = if dt > 0.0 {
            tick.saturating_sub(self.last.1) as f64 / dt
        } else {
            0.0
        };
        writeln!(self.out, "{now:.6},{tick},{hz:.1},{}", event.unwrap_or("tick"))
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io("profile", &e))?;
        self.last = (now, tick);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickReport {
    pub tick: u64,
    pub traps: u64,
    pub cycles: u64,
    pub yielded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub ticks: u64,
    pub finished: bool,
    pub cycles: u64,
}

pub struct Runtime {
    compiled: Arc<Compiled>,
    engine: Box<dyn Engine>,
    pub host: TaskHost,
    stim: Stimulus,
    clock: Option<String>,
    skip_fall: bool,
    yields: bool,
    /// Task kind by code; codes start at 1.
    kinds: Vec<TaskKind>,
    tick: u64,
    terminated: bool,
    /// Tick whose boundary actions are already queued.
    queued_for: Option<u64>,
    last_yield: bool,
    pub interrupts: InterruptQueue,
    connector: Option<Box<dyn Connector>>,
    profiler: Option<Profiler>,
    /// Boundary events in order: saves, restores, migrations, pauses.
    pub log: Vec<String>,
}

impl Runtime {
    pub fn new(
        compiled: Arc<Compiled>,
        engine: Box<dyn Engine>,
        host: TaskHost,
        stim: Stimulus,
        clock: Option<&str>,
    ) -> Result<Runtime> {
        let clk = clock_input(&compiled.source, clock);
        if let (Some(c), None) = (clock, &clk) {
            return Err(Error::Other(format!("clock '{c}' is not an input")));
        }
        let guards = &compiled.meta.guards;
        let skip_fall = !guards.is_empty()
            && guards
                .iter()
                .all(|(g, _)| g.edge == Edge::Pos && Some(&g.var) == clk.as_ref());
        let mut codes = compiled.machine.task_codes();
        codes.sort_by_key(|c| c.0);
        debug_assert!(codes.iter().enumerate().all(|(i, c)| c.0 as usize == i + 1));
        Ok(Runtime {
            yields: compiled.program.uses_task(TaskKind::Yield),
            kinds: codes.into_iter().map(|c| c.1).collect(),
            compiled,
            engine,
            host,
            stim,
            clock: clk,
            skip_fall,
            tick: 0,
            terminated: false,
            queued_for: None,
            last_yield: false,
            interrupts: InterruptQueue::default(),
            connector: None,
            profiler: None,
            log: Vec::new(),
        })
    }

    pub fn with_connector(mut self, c: Box<dyn Connector>) -> Self {
        self.connector = Some(c);
        self
    }

    pub fn with_profiler(mut self, p: Profiler) -> Self {
        self.profiler = Some(p);
        self
    }

    pub fn compiled(&self) -> &Arc<Compiled> {
        &self.compiled
    }

    pub fn engine(&mut self) -> &mut dyn Engine {
        self.engine.as_mut()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Sets pushed for the current or a later tick take effect when that
    /// tick starts. Boundary actions of the current tick may already be
    /// queued; push interrupts for those instead.
    pub fn stimulus_mut(&mut self) -> &mut Stimulus {
        &mut self.stim
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    pub fn device_cycles(&self) -> u64 {
        self.engine.device_cycles()
    }

    /// Runs `$fopen` register initializers.
    pub fn load(&mut self) -> Result<()> {
        let compiled = Arc::clone(&self.compiled);
        for (n, d) in &compiled.program.decls {
            if let Init::Fopen(path) = &d.init {
                let fd = Value::new(d.width, self.host.open(path)?);
                self.engine.set(n, fd)?;
                if let Some((_, p)) = compiled.meta.prev_regs.iter().find(|(v, _)| v == n) {
                    self.engine.set(p, fd)?;
                }
            }
        }
        Ok(())
    }

    fn set_input(&mut self, name: &str, v: u64) -> Result<()> {
        if !self.compiled.source.inputs.iter().any(|i| i == name) {
            return Err(Error::UnknownVariable(name.to_string()));
        }
        let w = self.compiled.program.decls[name].width;
        self.engine.set(name, Value::new(w, v))
    }

    pub fn exec_task_trap(&mut self, trap: &Trap) -> Result<Vec<Value>> {
        let kind = trap
            .code
            .checked_sub(1)
            .and_then(|i| self.kinds.get(i as usize))
            .copied()
            .ok_or_else(|| Error::Protocol(format!("unknown task code {}", trap.code)))?;
        Ok(self.host.run_task(kind, &trap.args)?.into_iter().collect())
    }

    fn run_half(&mut self, traps: &mut u64) -> Result<()> {
        for _ in 0..SETTLE_BOUND {
            let mut steps = 0;
            while let Outcome::Trap(t) = self.engine.evaluate()? {
                *traps += 1;
                steps += 1;
                if steps > STEP_BOUND {
                    return Err(Error::Runaway(STEP_BOUND));
                }
                let r = self.exec_task_trap(&t)?;
                self.engine.cont(&r)?;
            }
            if !self.engine.update()? {
                return Ok(());
            }
        }
        Err(Error::Oscillation(SETTLE_BOUND))
    }

    /// One logical tick, preceded by the boundary for the current tick.
    /// Returns `None` once terminated.
    pub fn step(&mut self) -> Result<Option<TickReport>> {
        self.boundary()?;
        if self.terminated {
            return Ok(None);
        }
        let t = self.tick;
        self.host.tick = t;
        self.host.yielded = false;
        let c0 = self.engine.device_cycles();
        let mut traps = 0;
        // The engine takes a changed guarded variable's old value as its
        // previous value, so each input is set once, to its final value.
        let mut sets: Vec<(String, u64)> = Vec::new();
        for a in self.stim.actions_at(t) {
            if let Action::Set(n, v) = a {
                sets.retain(|(m, _)| m != n);
                sets.push((n.clone(), *v));
            }
        }
        if let Some(c) = &self.clock {
            sets.retain(|(m, _)| m != c);
            sets.push((c.clone(), 1));
        }
        for (n, v) in sets {
            self.set_input(&n, v)?;
        }
        if let Some(c) = self.clock.clone() {
            self.run_half(&mut traps)?;
            self.engine.set(&c, Value::bit(false))?;
            if !self.skip_fall {
                self.run_half(&mut traps)?;
            }
        } else {
            self.run_half(&mut traps)?;
        }
        self.tick += 1;
        self.last_yield = self.host.yielded;
        for r in std::mem::take(&mut self.host.requests) {
            self.interrupts.push(match r {
                HostRequest::Save(p) => Interrupt::SaveTo(p.into()),
                HostRequest::Restart(p) => Interrupt::RestartFrom(p.into()),
            });
        }
        if self.host.finished {
            self.terminated = true;
        }
        if let Some(p) = &mut self.profiler {
            p.record(self.tick, self.terminated.then_some("finish"))?;
        }
        Ok(Some(TickReport {
            tick: t,
            traps,
            cycles: self.engine.device_cycles() - c0,
            yielded: self.last_yield,
        }))
    }

    /// Runs until `$finish`, the stimulus tick count or `max_ticks`,
    /// then services the final boundary.
    pub fn run(&mut self, max_ticks: u64) -> Result<RunSummary> {
        let limit = self.stim.ticks.unwrap_or(max_ticks).min(max_ticks);
        let mut steps = 0u64;
        let step_limit = limit.saturating_mul(8).max(1024);
        while !self.terminated && self.tick < limit && steps < step_limit {
            self.step()?;
            steps += 1;
        }
        self.boundary()?;
        Ok(RunSummary {
            ticks: self.tick,
            finished: self.host.finished,
            cycles: self.engine.device_cycles(),
        })
    }

    fn permitted(&self) -> bool {
        !self.yields || self.tick == 0 || self.last_yield || self.terminated
    }

    /// Queues the stimulus actions of the current tick and a pending pause
    /// request, then drains the queue if this boundary permits it.
    pub fn boundary(&mut self) -> Result<()> {
        if self.queued_for != Some(self.tick) {
            self.queued_for = Some(self.tick);
            let acts: Vec<Interrupt> = self
                .stim
                .actions_at(self.tick)
                .filter_map(|a| match a {
                    Action::Save(p) => Some(Interrupt::SaveTo(p.into())),
                    Action::Restart(p) => Some(Interrupt::RestartFrom(p.into())),
                    Action::Migrate(e) => Some(Interrupt::Migrate(e.clone())),
                    Action::Set(..) => None,
                })
                .collect();
            for a in acts {
                self.interrupts.push(a);
            }
        }
        if self.engine.pause_requested()? && !self.interrupts.contains(&Interrupt::StateSafePause) {
            self.interrupts.push(Interrupt::StateSafePause);
        }
        if !self.permitted() {
            return Ok(());
        }
        while let Some(i) = self.interrupts.pop() {
            match i {
                Interrupt::SaveTo(p) => {
                    self.save(&p)?;
                }
                Interrupt::RestartFrom(p) => {
                    let ck = Checkpoint::read(&p)?;
                    self.restore(&ck)?;
                    self.queued_for = Some(self.tick);
                    self.event(format!("restart {} tick={}", p.display(), self.tick))?;
                }
                Interrupt::Migrate(e) => {
                    if let Err(err) = self.migrate(&e) {
                        self.event(format!("migrate {e} failed: {err}"))?;
                    }
                }
                Interrupt::StateSafePause => self.state_safe_pause()?,
                Interrupt::Terminate => {
                    self.terminated = true;
                    self.event("terminate".into())?;
                }
            }
        }
        Ok(())
    }

    fn event(&mut self, e: String) -> Result<()> {
        if let Some(p) = &mut self.profiler {
            p.record(self.tick, Some(e.split(' ').next().unwrap_or("event")))?;
        }
        self.log.push(e);
        Ok(())
    }

    /// Non-volatile state via gets; the engine is not otherwise touched.
    pub fn checkpoint(&mut self) -> Result<Checkpoint> {
        let compiled = Arc::clone(&self.compiled);
        let mut entries = Vec::new();
        for e in compiled.manifest.non_volatile() {
            entries.push((e.name.clone(), self.engine.get(&e.name)?));
        }
        let files = self
            .host
            .files
            .iter()
            .map(|(fd, f)| FileRecord {
                fd: fd as u32,
                path: f.name.clone(),
                offset: f.offset,
            })
            .collect();
        Ok(Checkpoint {
            program_hash: compiled.manifest.program_hash,
            tick: self.tick,
            entries,
            files,
        })
    }

    pub fn save(&mut self, path: &Path) -> Result<Checkpoint> {
        let ck = self.checkpoint()?;
        ck.write(path)?;
        self.event(format!("save {} tick={}", path.display(), ck.tick))?;
        Ok(ck)
    }

    /// Restores a checkpoint taken at the start of tick `k`: re-applies the
    /// stimulus inputs in force before tick `k`, then the saved registers.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        let compiled = Arc::clone(&self.compiled);
        if ck.program_hash != compiled.manifest.program_hash {
            return Err(Error::HashMismatch);
        }
        let expected = compiled.manifest.non_volatile().map(|e| e.name.as_str());
        if !expected.eq(ck.entries.iter().map(|(n, _)| n.as_str())) {
            return Err(Error::Checkpoint("entries do not match the program manifest".into()));
        }
        self.host.clear_files();
        for f in &ck.files {
            self.host.reopen(f.fd as u64, &f.path, f.offset)?;
        }
        if ck.tick > 0 {
            for (n, v) in self.stim.inputs_as_of(ck.tick - 1) {
                self.set_input(&n, v)?;
            }
        }
        for (n, v) in &ck.entries {
            self.engine.set(n, *v)?;
        }
        self.tick = ck.tick;
        self.terminated = false;
        self.host.finished = false;
        self.queued_for = None;
        self.last_yield = true;
        Ok(())
    }

    fn inputs(&mut self) -> Result<Vec<(String, Value)>> {
        let names = self.compiled.source.inputs.clone();
        names
            .into_iter()
            .map(|n| self.engine.get(&n).map(|v| (n, v)))
            .collect()
    }

    /// Moves execution to an engine at `endpoint`. On failure the local
    /// engine is untouched.
    pub fn migrate(&mut self, endpoint: &str) -> Result<()> {
        let ck = self.checkpoint()?;
        let inputs = self.inputs()?;
        let conn = self
            .connector
            .as_mut()
            .ok_or_else(|| Error::Other("no connector configured for migration".into()))?;
        let mut target = conn.connect(endpoint, &self.compiled)?;
        for (n, v) in inputs.iter().chain(&ck.entries) {
            target.set(n, *v)?;
        }
        let old = std::mem::replace(&mut self.engine, target);
        drop(old);
        self.event(format!("migrate {endpoint} tick={}", self.tick))
    }

    /// Reads the state, lets the engine's host reprogram, then writes the
    /// state back.
    fn state_safe_pause(&mut self) -> Result<()> {
        let mut saved = self.inputs()?;
        saved.extend(self.checkpoint()?.entries);
        self.engine.pause()?;
        for (n, v) in &saved {
            self.engine.set(n, *v)?;
        }
        self.event(format!("pause tick={}", self.tick))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::StateMachineEngine;
    use crate::transform::compile_source;

    fn runtime(src: &str, stim: Stimulus) -> Runtime {
        let c = compile_source(src, None).unwrap();
        let e = Box::new(StateMachineEngine::new(c.clone()));
        Runtime::new(c, e, TaskHost::new(), stim, None).unwrap()
    }

    const COUNTER: &str = "module t(input wire clock); reg [7:0] n = 0;
        always @(posedge clock) n <= n + 1; endmodule";

    #[test]
    fn straight_line_tick_costs_three_cycles() {
        let mut rt = runtime(COUNTER, Stimulus::with_ticks(5));
        let r = rt.step().unwrap().unwrap();
        assert_eq!((r.cycles, r.traps), (3, 0));
        rt.run(100).unwrap();
        assert_eq!(rt.engine().get("n").unwrap().bits(), 5);
        assert_eq!(rt.device_cycles(), 15);
    }

    #[test]
    fn negedge_programs_run_the_falling_half() {
        let mut rt = runtime(
            "module t(input wire clock); reg [7:0] n = 0;
             always @(negedge clock) n <= n + 1; endmodule",
            Stimulus::with_ticks(3),
        );
        rt.run(100).unwrap();
        assert_eq!(rt.engine().get("n").unwrap().bits(), 3);
    }

    #[test]
    fn finish_terminates_after_the_tick() {
        let mut rt = runtime(
            "module t(input wire clock); reg [3:0] n = 0;
             always @(posedge clock) begin n = n + 1; if (n == 3) $finish; $display(\"%d\", n); end endmodule",
            Stimulus::default(),
        );
        let s = rt.run(100).unwrap();
        assert_eq!((s.ticks, s.finished), (3, true));
        let shown: Vec<String> = rt.host.trace.iter().map(|t| t.to_string()).collect();
        assert_eq!(shown.last().unwrap(), "tick=2 display \"3\"");
        assert!(rt.step().unwrap().is_none());
    }

    #[test]
    fn yield_programs_defer_interrupts() {
        let mut rt = runtime(
            "module t(input wire clock); reg [3:0] n = 0;
             always @(posedge clock) begin n <= n + 1; if (n == 2) $yield; end endmodule",
            Stimulus::default(),
        );
        rt.step().unwrap();
        rt.interrupts.push(Interrupt::Terminate);
        rt.step().unwrap(); // boundary 1: not a yield tick
        rt.step().unwrap(); // boundary 2: still not; tick 2 yields
        assert!(!rt.terminated());
        assert!(rt.step().unwrap().is_none());
        assert_eq!(rt.tick(), 3);
    }

    #[test]
    fn save_restore_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck");
        let mut a = runtime(COUNTER, Stimulus::with_ticks(4));
        a.run(100).unwrap();
        let ck = a.save(&p).unwrap();
        let mut b = runtime(COUNTER, Stimulus::with_ticks(8));
        b.restore(&Checkpoint::read(&p).unwrap()).unwrap();
        assert_eq!(b.checkpoint().unwrap().encode(), ck.encode());
        b.run(100).unwrap();
        assert_eq!(b.engine().get("n").unwrap().bits(), 8);
        let mut other = runtime("module t(input wire clock); reg q; endmodule", Stimulus::default());
        assert!(matches!(other.restore(&ck), Err(Error::HashMismatch)));
    }
}
