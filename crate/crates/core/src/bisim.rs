//! Differential runs: the reference interpreter on the elaborated program
//! against the runtime driving a state-machine engine on the compiled one.
//! Traces and final register values must agree exactly.

use std::sync::Arc;

use crate::engine::{Engine, StateMachineEngine};
use crate::error::Result;
use crate::host::{TaskHost, TraceEntry};
use crate::interp::run_reference;
use crate::runtime::Runtime;
use crate::stimulus::Stimulus;
use crate::transform::{compile_source, Compiled};
use crate::value::Value;

pub const DEFAULT_MAX_TICKS: u64 = 1 << 16;

#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub source: String,
    pub stimulus: Stimulus,
    pub files: Vec<(String, Vec<u8>)>,
    pub max_ticks: u64,
}

impl Case {
    pub fn new(name: impl Into<String>, source: impl Into<String>, stimulus: Stimulus) -> Case {
        Case {
            name: name.into(),
            source: source.into(),
            stimulus,
            files: vec![],
            max_ticks: DEFAULT_MAX_TICKS,
        }
    }

    pub fn host(&self) -> TaskHost {
        let mut h = TaskHost::new();
        for (n, d) in &self.files {
            h.preload(n.clone(), d.clone());
        }
        h
    }
}

impl From<crate::fuzz::FuzzCase> for Case {
    fn from(f: crate::fuzz::FuzzCase) -> Case {
        Case {
            name: format!("fuzz-{}", f.seed),
            source: f.source,
            stimulus: f.stimulus,
            files: f.files,
            max_ticks: crate::fuzz::MAX_TICKS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observed {
    pub ticks: u64,
    pub finished: bool,
    pub trace: Vec<TraceEntry>,
    pub registers: Vec<(String, Value)>,
}

pub fn reference(case: &Case, compiled: &Compiled) -> Result<Observed> {
    let mut host = case.host();
    let r = run_reference(&compiled.source, &case.stimulus, &mut host, None, case.max_ticks)?;
    Ok(Observed {
        ticks: r.ticks,
        finished: r.finished,
        trace: host.trace,
        registers: r.registers,
    })
}

/// Original-program registers read back through the engine.
pub fn engine_registers(compiled: &Compiled, e: &mut dyn Engine) -> Result<Vec<(String, Value)>> {
    let mut out = Vec::new();
    for (n, d) in compiled.source.registers() {
        match d.depth {
            Some(depth) => {
                for i in 0..depth {
                    let k = format!("{n}[{i}]");
                    let v = e.get(&k)?;
                    out.push((k, v));
                }
            }
            None => out.push((n.clone(), e.get(n)?)),
        }
    }
    Ok(out)
}

pub fn runtime_for(case: &Case, compiled: &Arc<Compiled>) -> Result<Runtime> {
    let engine = Box::new(StateMachineEngine::new(Arc::clone(compiled)));
    Runtime::new(Arc::clone(compiled), engine, case.host(), case.stimulus.clone(), None)
}

pub fn transformed(case: &Case, compiled: &Arc<Compiled>) -> Result<(Observed, u64)> {
    let mut rt = runtime_for(case, compiled)?;
    rt.load()?;
    let s = rt.run(case.max_ticks)?;
    let registers = engine_registers(compiled, rt.engine())?;
    Ok((
        Observed {
            ticks: s.ticks,
            finished: s.finished,
            trace: std::mem::take(&mut rt.host.trace),
            registers,
        },
        s.cycles,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Match { ticks: u64, cycles: u64 },
    /// The reference itself rejected the case (e.g. oscillation).
    Invalid(String),
    Mismatch(String),
}

impl Verdict {
    pub fn is_match(&self) -> bool {
        matches!(self, Verdict::Match { .. })
    }
}

fn first_difference(a: &Observed, b: &Observed) -> String {
    if let Some(i) = (0..a.trace.len().max(b.trace.len())).find(|&i| a.trace.get(i) != b.trace.get(i)) {
        let show = |t: Option<&TraceEntry>| t.map_or("<end>".to_string(), |t| t.to_string());
        return format!(
            "trace entry {i}: reference {} / engine {}",
            show(a.trace.get(i)),
            show(b.trace.get(i))
        );
    }
    if let Some((x, y)) = a.registers.iter().zip(&b.registers).find(|(x, y)| x != y) {
        return format!("register {}: reference {:?} / engine {:?}", x.0, x.1, y.1);
    }
    format!(
        "ticks {}/{} finished {}/{}",
        a.ticks, b.ticks, a.finished, b.finished
    )
}

pub fn check(case: &Case) -> Verdict {
    let compiled = match compile_source(&case.source, None) {
        Ok(c) => c,
        Err(d) => return Verdict::Invalid(format!("{}: {d}", case.name)),
    };
    let r = match reference(case, &compiled) {
        Ok(r) => r,
        Err(e) => return Verdict::Invalid(format!("{}: reference: {e}", case.name)),
    };
    match transformed(case, &compiled) {
        Ok((t, cycles)) if t == r => Verdict::Match {
            ticks: t.ticks,
            cycles,
        },
        Ok((t, _)) => Verdict::Mismatch(format!("{}: {}", case.name, first_difference(&r, &t))),
        Err(e) => Verdict::Mismatch(format!("{}: engine failed: {e}", case.name)),
    }
}

/// Checks every case; data-parallel with the `parallel` feature.
pub fn check_all(cases: &[Case]) -> Vec<Verdict> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        cases.par_iter().map(check).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        check_sequential(cases)
    }
}

pub fn check_sequential(cases: &[Case]) -> Vec<Verdict> {
    cases.iter().map(check).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_sum_matches_reference() {
        let src = r#"module sum(input wire clock);
  reg [31:0] fd = $fopen("data");
  reg [31:0] r;
  reg [31:0] total;
  always @(posedge clock) begin
    $fread32(fd, r);
    if ($feof(fd)) begin
      $display("res = %d", total);
      $finish;
    end else
      total <= total + r;
  end
endmodule"#;
        let mut c = Case::new("sum", src, Stimulus::default());
        let words: Vec<u8> = [3u32, 4, 5].iter().flat_map(|w| w.to_le_bytes()).collect();
        c.files.push(("data".into(), words));
        let v = check(&c);
        assert_eq!(v, Verdict::Match { ticks: 4, cycles: v.clone().cycles() });
        let compiled = compile_source(src, None).unwrap();
        let (o, _) = transformed(&c, &compiled).unwrap();
        assert!(o.trace.iter().any(|t| t.to_string() == "tick=3 display \"res = 12\""));
    }

    #[test]
    fn fuzz_sample_matches() {
        let cases: Vec<Case> = (0..40).map(|s| crate::fuzz::generate(s).into()).collect();
        for v in check_all(&cases) {
            assert!(!matches!(v, Verdict::Mismatch(_)), "{v:?}");
        }
    }

    impl Verdict {
        fn cycles(self) -> u64 {
            match self {
                Verdict::Match { cycles, .. } => cycles,
                _ => 0,
            }
        }
    }
}
