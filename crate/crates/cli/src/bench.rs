//! Corpus throughput table and the multiplexing, suspend and migration
//! scenarios. Every scenario emits `wall_seconds,series,virtual_hz,event`
//! rows and a list of checks with measured and expected values.

use std::io::Write;
use std::path::PathBuf;
use std::thread;
use std::time::{Duration, Instant};

use clap::ValueEnum;
use fpgavirt_core::bisim::{self, transformed, Case};
use fpgavirt_core::checkpoint::Checkpoint;
use fpgavirt_core::corpus;
use fpgavirt_core::runtime::{Interrupt, Runtime};
use fpgavirt_core::stimulus::Action;
use fpgavirt_core::transform::compile_source;
use fpgavirt_hypervisor::log::{lint, Event, EventKind};
use fpgavirt_hypervisor::scenario;
use fpgavirt_hypervisor::{Config, DeviceModel, Hypervisor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    Temporal,
    Spatial,
    Suspend,
    Migration,
}

/// Tolerances for the scenario checks.
pub const SHARE_TOLERANCE: f64 = 0.05;
pub const RATIO_TOLERANCE: f64 = 0.05;
pub const GRANT_WINDOW: usize = 1000;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub measured: String,
    pub expected: String,
    pub ok: bool,
}

impl Check {
    fn new(name: &str, measured: impl ToString, expected: impl ToString, ok: bool) -> Check {
        Check {
            name: name.into(),
            measured: measured.to_string(),
            expected: expected.to_string(),
            ok,
        }
    }

    fn within(name: &str, measured: f64, target: f64, tol: f64) -> Check {
        Check::new(
            name,
            format!("{measured:.3}"),
            format!("{target}±{tol}"),
            (measured - target).abs() <= tol,
        )
    }
}

/// Names from a comma-separated list; `all` is the whole corpus and an
/// empty list is an empty suite.
pub fn suite_names(list: &str) -> Result<Vec<&'static str>> {
    let all: Vec<&'static str> = ["fig1", "fig2"]
        .into_iter()
        .chain(corpus::SUITE.iter().map(|b| b.name))
        .collect();
    let mut out = Vec::new();
    for w in list.split(',').map(str::trim).filter(|w| !w.is_empty()) {
        if w == "all" {
            out.extend(&all);
            continue;
        }
        match all.iter().find(|n| **n == w) {
            Some(n) => out.push(*n),
            None => return Err(CliError::user(format!("unknown benchmark '{w}'"))),
        }
    }
    Ok(out)
}

/// Runs each benchmark on the local engine and against the reference.
pub fn suite(names: &[&str], seed: u64, out: &mut dyn Write) -> Result<Vec<Check>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "benchmark",
        "ticks",
        "device_cycles",
        "cycles_per_tick",
        "wall_seconds",
        "virtual_hz",
        "bisim",
    ])?;
    let mut checks = Vec::new();
    for name in names {
        let case = corpus::case(name, seed).expect("listed benchmark");
        let c = compile_source(&case.source, None)?;
        let t = Instant::now();
        let (o, cycles) = transformed(&case, &c)?;
        let secs = t.elapsed().as_secs_f64();
        let per_tick = cycles as f64 / o.ticks.max(1) as f64;
        let matched = bisim::check(&case).is_match();
        w.write_record([
            name.to_string(),
            o.ticks.to_string(),
            cycles.to_string(),
            format!("{per_tick:.2}"),
            format!("{secs:.4}"),
            format!("{:.1}", o.ticks as f64 / secs.max(1e-9)),
            if matched { "match" } else { "MISMATCH" }.to_string(),
        ])?;
        checks.push(Check::new(&format!("{name} cycles/tick"), format!("{per_tick:.2}"), ">= 3", per_tick >= 3.0));
        checks.push(Check::new(&format!("{name} bisimulation"), matched, true, matched));
    }
    w.flush()?;
    Ok(checks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub wall_seconds: f64,
    pub series: String,
    pub virtual_hz: f64,
    pub event: String,
}

/// Ticks-per-second samples of one series.
struct Sampler {
    t0: Instant,
    every: Duration,
    series: String,
    last: (Instant, u64),
    rows: Vec<Row>,
}

impl Sampler {
    fn new(t0: Instant, series: &str, every: Duration) -> Sampler {
        Sampler {
            t0,
            every,
            series: series.into(),
            last: (Instant::now(), 0),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, ticks: u64, event: &str) {
        let now = Instant::now();
        let dt = (now - self.last.0).as_secs_f64();
        self.rows.push(Row {
            wall_seconds: (now - self.t0).as_secs_f64(),
            series: self.series.clone(),
            virtual_hz: if dt > 0.0 { ticks.saturating_sub(self.last.1) as f64 / dt } else { 0.0 },
            event: event.into(),
        });
        self.last = (now, ticks);
    }

    fn tick(&mut self, ticks: u64) {
        if self.last.0.elapsed() >= self.every {
            self.push(ticks, "tick");
        }
    }

    /// Restarts the rate baseline, e.g. for a fresh runtime counting from
    /// a restored tick.
    fn rebase(&mut self, ticks: u64) {
        self.last.1 = ticks;
    }
}

pub fn write_rows(rows: &[Row], out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["wall_seconds", "series", "virtual_hz", "event"])?;
    for r in rows {
        w.write_record([
            format!("{:.3}", r.wall_seconds),
            r.series.clone(),
            format!("{:.1}", r.virtual_hz),
            r.event.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub struct Params {
    pub seed: u64,
    /// Measurement window; scenarios scale their phases to it.
    pub window: Duration,
    pub log_dir: Option<PathBuf>,
}

fn hypervisor(device: DeviceModel, p: &Params, tag: &str) -> Result<Hypervisor> {
    let cfg = Config {
        device,
        handshake_timeout: Duration::from_secs(20),
        peer: None,
        log_path: p.log_dir.as_ref().map(|d| d.join(format!("{tag}.jsonl"))),
    };
    Ok(Hypervisor::start("127.0.0.1:0", cfg)?)
}

fn device(capacity: u64, cycle_rate: Option<f64>) -> DeviceModel {
    DeviceModel {
        compile_latency: Duration::from_millis(200),
        cycle_rate,
        ..DeviceModel::new(capacity, &[1.0, 0.5])
    }
}

fn lint_check(name: &str, ev: &[Event]) -> Check {
    match lint(ev) {
        Ok(n) => Check::new(name, format!("{n} swaps, ordered"), "handshake order holds", true),
        Err(v) => Check::new(name, v.join("; "), "handshake order holds", false),
    }
}

pub fn run_scenario(s: Scenario, p: &Params) -> Result<(Vec<Row>, Vec<Check>)> {
    match s {
        Scenario::Temporal => temporal(p),
        Scenario::Spatial => spatial(p),
        Scenario::Suspend => suspend(p),
        Scenario::Migration => migration(p),
    }
}

fn temporal(p: &Params) -> Result<(Vec<Row>, Vec<Check>)> {
    let h = hypervisor(device(10_000, None), p, "temporal")?;
    let r = scenario::temporal(h.addr(), &|| h.events(), GRANT_WINDOW, p.seed)?;
    let rows = r
        .rate
        .iter()
        .map(|&(t, eid, hz)| Row {
            wall_seconds: t,
            series: format!("eid{eid}"),
            virtual_hz: hz,
            event: "grants".into(),
        })
        .collect();
    let checks = vec![
        Check::new("window grants", r.window, GRANT_WINDOW, r.window == GRANT_WINDOW),
        Check::within("long matcher share", r.share_a, 0.5, SHARE_TOLERANCE),
        Check::within("short matcher share", r.share_b, 0.5, SHARE_TOLERANCE),
        Check::new("grants to recover", r.recovery, "<= 2 (one rotation)", r.recovery <= 2),
        Check::new("survivor share", r.survivor_share, 1.0, r.survivor_share == 1.0),
        Check::new("outputs match local runs", r.outputs_match, true, r.outputs_match),
        lint_check("handshake log", &h.events()),
    ];
    Ok((rows, checks))
}

/// Capacity that admits two small counters at the full tier but not with
/// the adpcm codec added; 600 cycles/s makes the counters tick at about
/// 200 Hz.
pub const SPATIAL_CAPACITY: u64 = 400;
pub const SPATIAL_CYCLE_RATE: f64 = 600.0;

fn spatial(p: &Params) -> Result<(Vec<Row>, Vec<Check>)> {
    let h = hypervisor(device(SPATIAL_CAPACITY, Some(SPATIAL_CYCLE_RATE)), p, "spatial")?;
    let r = scenario::spatial(h.addr(), &|| h.events(), p.window)?;
    let rows = r
        .series
        .iter()
        .map(|&(t, i, hz)| Row {
            wall_seconds: t,
            series: format!("tenant{i}"),
            virtual_hz: hz,
            event: "tick".into(),
        })
        .collect();
    let ev = h.events();
    let halvings = ev
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Tier { to: 1, factor, .. } if factor == 0.5))
        .count();
    let [ra, rb] = r.ratios();
    let checks = vec![
        Check::new("tier before", r.tier_before, 0, r.tier_before == 0),
        Check::new("tier with third tenant", r.tier_during, 1, r.tier_during == 1),
        Check::new("halving events logged", halvings, ">= 1", halvings >= 1),
        Check::within("tenant0 frequency ratio", ra, 0.5, RATIO_TOLERANCE),
        Check::within("tenant1 frequency ratio", rb, 0.5, RATIO_TOLERANCE),
        Check::new("tier after removal", r.tier_after, 0, r.tier_after == 0),
        lint_check("handshake log", &ev),
    ];
    Ok((rows, checks))
}

/// Cycles per second that make `case` take about `secs` at the full tier.
fn pace_for(case: &Case, secs: f64) -> Result<(f64, bisim::Observed)> {
    let c = compile_source(&case.source, None)?;
    let (o, cycles) = transformed(case, &c)?;
    Ok((cycles as f64 / secs.max(0.1), o))
}

fn step_sampled(rt: &mut Runtime, s: &mut Sampler, until: impl Fn(&Runtime) -> bool) -> Result<()> {
    while !rt.terminated() && !until(rt) {
        rt.step()?;
        s.tick(rt.tick());
    }
    Ok(())
}

/// Runs the nonce search, suspends it to a checkpoint a third of the way
/// in, waits, and resumes on a fresh engine.
fn suspend(p: &Params) -> Result<(Vec<Row>, Vec<Check>)> {
    let case = corpus::case("bitcoin", p.seed).unwrap();
    let secs = p.window.as_secs_f64();
    let (rate, reference) = pace_for(&case, secs)?;
    let h = hypervisor(device(10_000, Some(rate)), p, "suspend")?;
    let path = std::env::temp_dir().join(format!("fpgavirt-suspend-{}.ckpt", std::process::id()));
    let t0 = Instant::now();
    let mut s = Sampler::new(t0, "bitcoin", Duration::from_millis(250));

    let mut rt = scenario::remote_runtime(h.addr(), &case)?;
    rt.load()?;
    let pause_at = t0 + p.window / 3;
    step_sampled(&mut rt, &mut s, |_| Instant::now() >= pause_at)?;
    let req = Interrupt::SaveTo(path.clone());
    rt.interrupts.push(req.clone());
    rt.boundary()?;
    step_sampled(&mut rt, &mut s, |rt| !rt.interrupts.contains(&req))?;
    s.push(rt.tick(), "save");
    let mut trace = std::mem::take(&mut rt.host.trace);
    drop(rt);

    let resume_at = Instant::now() + p.window / 3;
    while Instant::now() < resume_at {
        thread::sleep(Duration::from_millis(50));
        s.tick(s.last.1);
    }
    let ck = Checkpoint::read(&path)?;
    let _ = std::fs::remove_file(&path);
    let mut rt = scenario::remote_runtime(h.addr(), &case)?;
    rt.restore(&ck)?;
    s.rebase(ck.tick);
    s.push(ck.tick, "restore");
    step_sampled(&mut rt, &mut s, |rt| rt.tick() >= case.max_ticks)?;
    s.push(rt.tick(), "finish");
    let rest = scenario::observe(&mut rt, case.max_ticks)?;
    trace.extend(rest.trace);

    let idle = s.rows.iter().filter(|r| r.event == "tick" && r.virtual_hz == 0.0).count();
    let checks = vec![
        Check::new("checkpoint at a yield boundary", ck.tick, "multiple of 66", ck.tick % 66 == 0),
        Check::new("frequency drops to zero while suspended", idle, ">= 1 sample", idle >= 1),
        Check::new("trace matches uninterrupted run", trace == reference.trace, true, trace == reference.trace),
        Check::new(
            "final registers match",
            rest.registers == reference.registers,
            true,
            rest.registers == reference.registers,
        ),
        lint_check("handshake log", &h.events()),
    ];
    Ok((s.rows, checks))
}

/// Moves the sorting processor between two hypervisors at a random tick.
fn migration(p: &Params) -> Result<(Vec<Row>, Vec<Check>)> {
    let mut case = corpus::case("mips32", p.seed).unwrap();
    let (rate, reference) = pace_for(&case, p.window.as_secs_f64())?;
    let a = hypervisor(device(10_000, Some(rate)), p, "migration-a")?;
    let b = hypervisor(device(10_000, Some(rate)), p, "migration-b")?;
    let tick = ChaCha8Rng::seed_from_u64(p.seed).gen_range(1..reference.ticks.max(2));
    case.stimulus.push(tick, Action::Migrate(b.addr().to_string()));
    let mut s = Sampler::new(Instant::now(), "mips32", Duration::from_millis(250));
    let mut rt = scenario::remote_runtime(a.addr(), &case)?;
    rt.load()?;
    let mut seen = 0;
    while !rt.terminated() && rt.tick() < case.max_ticks {
        rt.step()?;
        s.tick(rt.tick());
        if rt.log.len() > seen {
            seen = rt.log.len();
            let e = rt.log[seen - 1].split(' ').next().unwrap_or("event").to_string();
            s.push(rt.tick(), &e);
        }
    }
    let o = scenario::observe(&mut rt, case.max_ticks)?;
    let moved = rt
        .log
        .iter()
        .find_map(|l| l.strip_prefix(&format!("migrate {} tick=", b.addr())))
        .map(str::to_string);
    let checks = vec![
        Check::new("migrated", moved.as_deref().unwrap_or("never"), format!("tick {tick}"), moved.is_some()),
        Check::new("output matches unmigrated run", o == reference, true, o == reference),
        lint_check("source hypervisor log", &a.events()),
        lint_check("target hypervisor log", &b.events()),
    ];
    Ok((s.rows, checks))
}
