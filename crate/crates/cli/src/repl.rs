//! Line-oriented interactive session over one runtime.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use fpgavirt_core::runtime::{Interrupt, Runtime};
use fpgavirt_core::stimulus::{parse_number, Action, Stimulus};

use crate::error::{CliError, Result};
use crate::setup::{self, DataBinding, Sources, Target};

const HELP: &str = "\
load <file>... [top=<module>]   compile and load a program
data [<name>=]<path>            bind $fopen names for the next load
engine local|<host:port>        engine target for the next load
set <input> <value>             drive an input from the next tick on
step [n]                        run n ticks (default 1)
run [max]                       run until $finish
inspect <var>                   print a variable
save <path>                     checkpoint at the next permitted boundary
restart <path>                  restore a checkpoint
migrate <host:port>             move the engine to a hypervisor
status                          tick, cycles and pending actions
quit";

pub struct Repl<W: Write> {
    out: W,
    target: Target,
    data: Vec<DataBinding>,
    clock: Option<String>,
    rt: Option<Runtime>,
    /// Trace entries and log lines already shown.
    shown: (usize, usize),
}

enum Flow {
    Continue,
    Quit,
}

impl<W: Write> Repl<W> {
    pub fn new(out: W, target: Target, data: Vec<DataBinding>, clock: Option<String>) -> Self {
        Repl {
            out,
            target,
            data,
            clock,
            rt: None,
            shown: (0, 0),
        }
    }

    /// Runs commands until `quit` or end of input. Command errors are
    /// reported to `err` and the session continues; returns the number of
    /// failed commands.
    pub fn run(&mut self, input: impl BufRead, err: &mut dyn Write, prompt: bool) -> std::io::Result<usize> {
        let mut failed = 0;
        let mut lines = input.lines();
        loop {
            if prompt {
                write!(self.out, "> ")?;
                self.out.flush()?;
            }
            let Some(line) = lines.next() else { break };
            match self.exec(&line?) {
                Ok(Flow::Continue) => {}
                Ok(Flow::Quit) => break,
                Err(e) => {
                    failed += 1;
                    writeln!(err, "error: {e}")?;
                }
            }
            self.out.flush()?;
        }
        Ok(failed)
    }

    fn rt(&mut self) -> Result<&mut Runtime> {
        self.rt.as_mut().ok_or_else(|| CliError::user("no program loaded"))
    }

    fn exec(&mut self, line: &str) -> Result<Flow> {
        let line = line.split('#').next().unwrap_or("").trim();
        let words: Vec<&str> = line.split_whitespace().collect();
        let num = |w: &str| parse_number(w).ok_or_else(|| CliError::user(format!("bad number '{w}'")));
        match words.as_slice() {
            [] => {}
            ["quit" | "exit"] => return Ok(Flow::Quit),
            ["help"] => writeln!(self.out, "{HELP}")?,
            ["load", rest @ ..] => self.load(rest)?,
            ["data", b] => self.data.push(b.parse().map_err(CliError::User)?),
            ["engine", t] => self.target = t.parse().map_err(CliError::User)?,
            ["set", name, v] => {
                let v = num(v)?;
                let rt = self.rt()?;
                if !rt.compiled().source.inputs.iter().any(|i| i == name) {
                    return Err(CliError::user(format!("'{name}' is not an input")));
                }
                let t = rt.tick();
                rt.stimulus_mut().push(t, Action::Set(name.to_string(), v));
            }
            ["step"] => self.step(1)?,
            ["step", n] => self.step(num(n)?)?,
            ["run"] => self.step(u64::MAX)?,
            ["run", n] => self.step(num(n)?)?,
            ["inspect", name] => {
                let v = self.rt()?.engine().get(name)?;
                writeln!(self.out, "{name} = {} ({v})", v.bits())?;
            }
            ["save", p] => self.interrupt(Interrupt::SaveTo(PathBuf::from(p)))?,
            ["restart", p] => self.interrupt(Interrupt::RestartFrom(PathBuf::from(p)))?,
            ["migrate", e] => self.interrupt(Interrupt::Migrate(e.to_string()))?,
            ["status"] => {
                let rt = self.rt()?;
                let s = format!(
                    "tick {} cycles {} pending {}{}",
                    rt.tick(),
                    rt.device_cycles(),
                    rt.interrupts.len(),
                    if rt.terminated() { " finished" } else { "" }
                );
                writeln!(self.out, "{s}")?;
            }
            _ => return Err(CliError::user(format!("unknown command '{line}' (try help)"))),
        }
        Ok(Flow::Continue)
    }

    fn load(&mut self, args: &[&str]) -> Result<()> {
        let (tops, files): (Vec<&str>, Vec<&str>) = args.iter().partition(|a| a.starts_with("top="));
        let top = tops.last().map(|t| &t[4..]);
        let sources = Sources::read(&files.iter().map(PathBuf::from).collect::<Vec<_>>())?;
        let compiled = sources.compile(top)?;
        let host = setup::host(&compiled, &self.data)?;
        let mut rt = setup::runtime(
            compiled,
            &sources.text,
            &self.target,
            host,
            Stimulus::default(),
            self.clock.as_deref(),
        )?;
        rt.load()?;
        writeln!(self.out, "loaded {}", rt.compiled().name)?;
        self.rt = Some(rt);
        self.shown = (0, 0);
        Ok(())
    }

    fn step(&mut self, n: u64) -> Result<()> {
        let rt = self.rt()?;
        let mut r = Ok(());
        for _ in 0..n {
            match rt.step() {
                Ok(Some(_)) => {}
                Ok(None) => break,
                Err(e) => {
                    r = Err(e.into());
                    break;
                }
            }
            if rt.terminated() {
                break;
            }
        }
        self.flush_effects()?;
        let rt = self.rt()?;
        let line = format!("tick {}{}", rt.tick(), if rt.terminated() { " finished" } else { "" });
        writeln!(self.out, "{line}")?;
        r
    }

    fn interrupt(&mut self, i: Interrupt) -> Result<()> {
        let rt = self.rt()?;
        rt.interrupts.push(i.clone());
        let r = rt.boundary();
        let queued = rt.interrupts.contains(&i);
        self.flush_effects()?;
        r?;
        if queued {
            writeln!(self.out, "queued until the next yield boundary")?;
        }
        Ok(())
    }

    /// Prints displays produced since the last call and new boundary
    /// events. A failed migration is logged rather than returned by the
    /// runtime, so it is surfaced here as an error line.
    fn flush_effects(&mut self) -> Result<()> {
        let Some(rt) = self.rt.as_mut() else { return Ok(()) };
        let (t, l) = self.shown;
        let mut lines = Vec::new();
        for e in &rt.host.trace[t.min(rt.host.trace.len())..] {
            if let fpgavirt_core::host::TaskEffect::Display(s) = &e.effect {
                lines.push(s.clone());
            }
        }
        let failures: Vec<String> = rt.log[l..].iter().filter(|e| e.contains(" failed: ")).cloned().collect();
        lines.extend(rt.log[l..].iter().filter(|e| !e.contains(" failed: ")).map(|e| format!("[{e}]")));
        self.shown = (rt.host.trace.len(), rt.log.len());
        for s in lines {
            writeln!(self.out, "{s}")?;
        }
        match failures.into_iter().next() {
            Some(f) => Err(CliError::User(f)),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(script: &str) -> (String, String, usize) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let failed = Repl::new(&mut out, Target::Local, vec![], None)
            .run(script.as_bytes(), &mut err, false)
            .unwrap();
        (String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap(), failed)
    }

    #[test]
    fn errors_do_not_end_the_session() {
        let (out, err, failed) = session("step\nfrobnicate\nhelp\nquit\nstep\n");
        assert_eq!(failed, 2);
        assert!(err.contains("no program loaded"));
        assert!(err.contains("unknown command"));
        assert!(out.contains("inspect <var>"));
    }
}
