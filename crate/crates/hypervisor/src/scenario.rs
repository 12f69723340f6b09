//! Multi-tenant experiments against running hypervisors: migration,
//! temporal and spatial multiplexing, and cross-tenant message fuzzing.
//! Each takes endpoints and an event-log source, so the hypervisors may
//! live in this process or elsewhere.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fpgavirt_core::bisim::{engine_registers, transformed, Case, Observed};
use fpgavirt_core::corpus;
use fpgavirt_core::runtime::Runtime;
use fpgavirt_core::stimulus::{Action, Stimulus};
use fpgavirt_core::transform::compile_source;
use fpgavirt_core::{Error, Result, Value};

use crate::client::{Client, RemoteConnector, RemoteEngine};
use crate::log::{Event, EventKind};
use crate::proto::Message;

/// A small always-busy program: three device cycles per tick.
pub const SPIN: &str = "module spin(input wire clock);
  reg [31:0] n = 0;
  always @(posedge clock) n <= n + 1;
endmodule
";

/// Registers that only an edge on `go` can change; `go` is never driven,
/// so the state is constant unless someone else writes it.
pub const VAULT: &str = "module vault(input wire clock, input wire go);
  reg [31:0] a = 1;
  reg [31:0] b = 2;
  reg [15:0] c = 3;
  reg [7:0] m [0:3];
  always @(posedge go) begin
    a <= a + b;
    m[c[1:0]] <= a[7:0];
  end
endmodule
";

pub fn remote_runtime(addr: SocketAddr, case: &Case) -> Result<Runtime> {
    Ok(remote_tenant(addr, case)?.1)
}

/// A runtime on a fresh remote engine, and that engine's eid.
pub fn remote_tenant(addr: SocketAddr, case: &Case) -> Result<(u32, Runtime)> {
    let compiled = compile_source(&case.source, None)?;
    let engine = RemoteEngine::connect(addr, &case.source)?;
    let eid = engine.eid();
    let rt = Runtime::new(compiled, Box::new(engine), case.host(), case.stimulus.clone(), None)?
        .with_connector(Box::new(RemoteConnector::new(case.source.clone())));
    Ok((eid, rt))
}

pub fn observe(rt: &mut Runtime, max_ticks: u64) -> Result<Observed> {
    let s = rt.run(max_ticks)?;
    let compiled = rt.compiled().clone();
    let registers = engine_registers(&compiled, rt.engine())?;
    Ok(Observed {
        ticks: s.ticks,
        finished: s.finished,
        trace: std::mem::take(&mut rt.host.trace),
        registers,
    })
}

pub fn run_remote(addr: SocketAddr, case: &Case) -> Result<Observed> {
    let mut rt = remote_runtime(addr, case)?;
    rt.load()?;
    observe(&mut rt, case.max_ticks)
}

pub fn run_local(case: &Case) -> Result<Observed> {
    let c = compile_source(&case.source, None)?;
    Ok(transformed(case, &c)?.0)
}

/// A runtime ticking on its own thread until stopped. After `$finish` it
/// keeps servicing boundaries so it still answers handshakes.
pub struct Tenant {
    stop: Arc<AtomicBool>,
    ticks: Arc<AtomicU64>,
    handle: JoinHandle<Result<Runtime>>,
}

impl Tenant {
    pub fn spawn(mut rt: Runtime) -> Result<Tenant> {
        rt.load()?;
        let stop = Arc::new(AtomicBool::new(false));
        let ticks = Arc::new(AtomicU64::new(0));
        let (s, t) = (Arc::clone(&stop), Arc::clone(&ticks));
        let handle = thread::spawn(move || {
            while !s.load(Ordering::Relaxed) {
                if rt.terminated() {
                    rt.boundary()?;
                    thread::sleep(Duration::from_millis(2));
                    continue;
                }
                rt.step()?;
                t.store(rt.tick(), Ordering::Relaxed);
            }
            Ok(rt)
        });
        Ok(Tenant {
            stop,
            ticks,
            handle,
        })
    }

    pub fn ticks(&self) -> u64 {
        self.ticks.load(Ordering::Relaxed)
    }

    pub fn stop(self) -> Result<Runtime> {
        self.stop.store(true, Ordering::Relaxed);
        self.handle
            .join()
            .map_err(|_| Error::Other("tenant thread panicked".into()))?
    }
}

fn wait_log(
    events: &dyn Fn() -> Vec<Event>,
    timeout: Duration,
    what: &str,
    f: impl Fn(&[Event]) -> bool,
) -> Result<Vec<Event>> {
    let end = Instant::now() + timeout;
    loop {
        let ev = events();
        if f(&ev) {
            return Ok(ev);
        }
        if Instant::now() > end {
            return Err(Error::Other(format!("timed out waiting for {what}")));
        }
        thread::sleep(Duration::from_millis(10));
    }
}

fn last_swap(ev: &[Event]) -> Option<(&[u32], usize)> {
    ev.iter().rev().find_map(|e| match &e.kind {
        EventKind::Swap { eids, tier, .. } => Some((eids.as_slice(), *tier)),
        _ => None,
    })
}

pub struct MigrationReport {
    pub migrated: Observed,
    pub reference: Observed,
    /// The tenant runtime's boundary events.
    pub runtime_log: Vec<String>,
}

impl MigrationReport {
    pub fn identical(&self) -> bool {
        self.migrated == self.reference
    }
}

/// Runs `case` on `from`, migrating to `to` at the first permitted
/// boundary at or after `tick`, against an unmigrated local run.
pub fn migration(from: SocketAddr, to: SocketAddr, case: &Case, tick: u64) -> Result<MigrationReport> {
    let mut moved = case.clone();
    moved.stimulus.push(tick, Action::Migrate(to.to_string()));
    let mut rt = remote_runtime(from, &moved)?;
    rt.load()?;
    let migrated = observe(&mut rt, case.max_ticks)?;
    Ok(MigrationReport {
        migrated,
        reference: run_local(case)?,
        runtime_log: rt.log.clone(),
    })
}

pub struct TemporalReport {
    pub a: u32,
    pub b: u32,
    /// Grants to `a` or `b`, in order.
    pub grants: Vec<u32>,
    /// Grants in the measured window, taken while both contend.
    pub window: usize,
    pub share_a: f64,
    pub share_b: f64,
    /// Grants after `b`'s last one before every remaining grant went to
    /// `a`.
    pub recovery: usize,
    /// Share of `a` among the grants after `b` finished.
    pub survivor_share: f64,
    /// (wall seconds, eid, grants per second) in 100 ms bins.
    pub rate: Vec<(f64, u32, f64)>,
    pub outputs_match: bool,
}

/// Two streaming matchers contend for the I/O resource; the second has
/// half the input and finishes first.
pub fn temporal(addr: SocketAddr, events: &dyn Fn() -> Vec<Event>, window: usize, seed: u64) -> Result<TemporalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = |n| corpus::words_to_bytes(&corpus::regex_text(&mut rng, n));
    let mut long = corpus::case("regex", seed).unwrap();
    long.files = vec![("text".into(), text(2 * window + 1000))];
    let mut short = long.clone();
    short.files = vec![("text".into(), text(window + 200))];

    let (a, ra) = remote_tenant(addr, &long)?;
    let (b, rb) = remote_tenant(addr, &short)?;
    let spawn = |mut rt: Runtime, max| {
        thread::spawn(move || -> Result<Observed> {
            rt.load()?;
            observe(&mut rt, max)
        })
    };
    let (ta, tb) = (spawn(ra, long.max_ticks), spawn(rb, short.max_ticks));
    let oa = ta.join().map_err(|_| Error::Other("tenant panicked".into()))??;
    let ob = tb.join().map_err(|_| Error::Other("tenant panicked".into()))??;
    let outputs_match = oa == run_local(&long)? && ob == run_local(&short)?;

    let ev = events();
    let timed: Vec<(f64, u32)> = ev
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Grant { eid } if eid == a || eid == b => Some((e.t, eid)),
            _ => None,
        })
        .collect();
    let grants: Vec<u32> = timed.iter().map(|g| g.1).collect();
    let first_b = grants.iter().position(|&g| g == b).unwrap_or(0);
    let last_b = grants.iter().rposition(|&g| g == b).unwrap_or(0);
    let contended = &grants[first_b..=last_b];
    let w = window.min(contended.len());
    let mid = (contended.len() - w) / 2;
    let win = &contended[mid..mid + w];
    let share = |e| win.iter().filter(|&&g| g == e).count() as f64 / w.max(1) as f64;
    let after = &grants[last_b + 1..];
    let recovery = after.iter().rposition(|&g| g != a).map_or(0, |i| i + 1);
    let survivor_share = after.iter().filter(|&&g| g == a).count() as f64 / after.len().max(1) as f64;

    let mut rate = Vec::new();
    if let (Some(t0), Some(t1)) = (timed.first(), timed.last()) {
        let bins = ((t1.0 - t0.0) / 0.1).ceil() as usize + 1;
        for eid in [a, b] {
            let mut n = vec![0u32; bins];
            for (t, g) in &timed {
                if *g == eid {
                    n[((t - t0.0) / 0.1) as usize] += 1;
                }
            }
            for (i, c) in n.into_iter().enumerate() {
                rate.push((i as f64 * 0.1, eid, c as f64 / 0.1));
            }
        }
    }
    Ok(TemporalReport {
        a,
        b,
        window: w,
        share_a: share(a),
        share_b: share(b),
        recovery,
        survivor_share,
        grants,
        rate,
        outputs_match,
    })
}

pub struct SpatialReport {
    /// Virtual frequency (ticks per wall second) of the two small tenants
    /// at the full tier, then with the large third tenant present.
    pub before: [f64; 2],
    pub during: [f64; 2],
    pub tier_before: usize,
    pub tier_during: usize,
    pub tier_after: usize,
    /// (wall seconds, tenant index, virtual Hz) samples every 0.5 s.
    pub series: Vec<(f64, usize, f64)>,
}

impl SpatialReport {
    pub fn ratios(&self) -> [f64; 2] {
        [self.during[0] / self.before[0], self.during[1] / self.before[1]]
    }
}

fn measure(
    tenants: &[&Tenant],
    window: Duration,
    t0: Instant,
    series: &mut Vec<(f64, usize, f64)>,
) -> Vec<f64> {
    let start: Vec<u64> = tenants.iter().map(|t| t.ticks()).collect();
    let began = Instant::now();
    let mut last = (began, start.clone());
    while began.elapsed() < window {
        thread::sleep(Duration::from_millis(500).min(window));
        let now = Instant::now();
        for (i, t) in tenants.iter().enumerate() {
            let n = t.ticks();
            let dt = (now - last.0).as_secs_f64();
            series.push(((now - t0).as_secs_f64(), i, (n - last.1[i]) as f64 / dt));
            last.1[i] = n;
        }
        last.0 = now;
    }
    let dt = began.elapsed().as_secs_f64();
    tenants
        .iter()
        .zip(start)
        .map(|(t, s)| (t.ticks() - s) as f64 / dt)
        .collect()
}

/// Two small tenants run alone, then alongside a large one whose cost
/// pushes the device past its full-tier budget, then alone again. The
/// hypervisor's capacity must admit SPIN twice but not with adpcm added.
pub fn spatial(addr: SocketAddr, events: &dyn Fn() -> Vec<Event>, window: Duration) -> Result<SpatialReport> {
    let t0 = Instant::now();
    let settle = Duration::from_secs(60);
    let spin = Case::new("spin", SPIN, Stimulus::default());
    let a = Tenant::spawn(remote_runtime(addr, &spin)?)?;
    let b = Tenant::spawn(remote_runtime(addr, &spin)?)?;
    let ev = wait_log(events, settle, "both small tenants on the device", |ev| {
        last_swap(ev).is_some_and(|(e, _)| e.len() == 2)
    })?;
    let tier_before = last_swap(&ev).unwrap().1;
    let mut series = Vec::new();
    let before = measure(&[&a, &b], window, t0, &mut series);

    let mut big = corpus::case("adpcm", 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    big.files = vec![("pcm".into(), corpus::words_to_bytes(&corpus::adpcm_samples(&mut rng, 1 << 20)))];
    let c = Tenant::spawn(remote_runtime(addr, &big)?)?;
    let ev = wait_log(events, settle, "the third tenant on the device", |ev| {
        last_swap(ev).is_some_and(|(e, _)| e.len() == 3)
    })?;
    let tier_during = last_swap(&ev).unwrap().1;
    let during = measure(&[&a, &b], window, t0, &mut series);

    drop(c.stop()?);
    let ev = wait_log(events, settle, "the rebuild without the third tenant", |ev| {
        last_swap(ev).is_some_and(|(e, _)| e.len() == 2)
    })?;
    let tier_after = last_swap(&ev).unwrap().1;
    drop(a.stop()?);
    drop(b.stop()?);
    Ok(SpatialReport {
        before: [before[0], before[1]],
        during: [during[0], during[1]],
        tier_before,
        tier_during,
        tier_after,
        series,
    })
}

pub struct IsolationReport {
    pub messages: u64,
    pub errors: u64,
    /// Victim registers whose value differs after the attack.
    pub changed: Vec<String>,
}

/// Sends `n` adversarial Get/Set/Continue messages from one tenant aimed
/// at another's engine: its eid, eids that do not exist, and the victim's
/// names qualified the way the coalesced image spells them.
pub fn isolation(addr: SocketAddr, n: u64, seed: u64) -> Result<IsolationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let compiled = compile_source(VAULT, None)?;
    let engine = RemoteEngine::connect(addr, VAULT)?;
    let victim_eid = engine.eid();
    let mut victim_rt = Runtime::new(
        compiled.clone(),
        Box::new(engine),
        Default::default(),
        Stimulus::default(),
        None,
    )?;
    let names: Vec<String> = compiled.manifest.entries.iter().map(|e| e.name.clone()).collect();
    // Distinctive values, so a reset to the initial state would show.
    for e in &compiled.manifest.entries {
        if !e.name.starts_with("__") {
            victim_rt.engine().set(&e.name, Value::new(e.width, rng.gen()))?;
        }
    }
    let snapshot = |rt: &mut Runtime| -> Result<Vec<(String, Value)>> {
        names
            .iter()
            .map(|n| rt.engine().get(n).map(|v| (n.clone(), v)))
            .collect()
    };
    let before = snapshot(&mut victim_rt)?;
    let victim = Tenant::spawn(victim_rt)?;

    let mut attacker = Client::connect(addr)?;
    let own = attacker.register(SPIN)?;
    let mut targets = vec![victim_eid, own + 1, 0, u32::MAX];
    targets.extend((0..4).map(|_| rng.gen_range(own + 2..own + 1000)));
    let mut spelled: Vec<String> = Vec::new();
    for v in &names {
        spelled.push(v.clone());
        spelled.push(format!("m_{victim_eid}.{v}"));
        spelled.push(format!("router.m_{victim_eid}.{v}"));
    }
    spelled.push(format!("e{victim_eid}_clock"));

    let mut errors = 0;
    for _ in 0..n {
        // Keep our own engine alive through rebuilds.
        while let Some(m) = attacker.poll_notice() {
            if let Message::SaveBegin { eid } = m {
                attacker.send(&Message::SaveSafe { eid })?;
            }
        }
        let own_with_foreign_name = rng.gen_bool(0.2);
        let eid = if own_with_foreign_name {
            own
        } else {
            targets[rng.gen_range(0..targets.len())]
        };
        let name = if own_with_foreign_name {
            spelled[rng.gen_range(0..spelled.len())].clone()
        } else {
            names[rng.gen_range(0..names.len())].clone()
        };
        let name = if own_with_foreign_name && !name.contains('.') && !name.starts_with('e') {
            format!("m_{victim_eid}.{name}")
        } else {
            name
        };
        let m = match rng.gen_range(0..3) {
            0 => Message::Get { eid, name },
            1 => Message::Set {
                eid,
                name,
                value: Value::new(rng.gen_range(1..=64), rng.gen()),
            },
            _ => Message::Continue {
                eid,
                retvals: (0..rng.gen_range(0..3))
                    .map(|_| Value::new(32, rng.gen()))
                    .collect(),
            },
        };
        if matches!(attacker.request(&m)?, Message::Error { .. }) {
            errors += 1;
        }
    }
    let mut victim_rt = victim.stop()?;
    let after = snapshot(&mut victim_rt)?;
    let changed = before
        .iter()
        .zip(&after)
        .filter(|(x, y)| x != y && !x.0.starts_with("__"))
        .map(|(x, _)| x.0.clone())
        .collect();
    Ok(IsolationReport {
        messages: n,
        errors,
        changed,
    })
}
