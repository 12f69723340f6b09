//! `fpgavirt`: batch runner, REPL, hypervisor daemon, compiler driver and
//! benchmark harness. Exit status 0 on success, 1 on user error, 2 on
//! internal error.

mod bench;
mod error;
mod repl;
mod setup;

use std::io::{self, BufReader, IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use fpgavirt_core::checkpoint::Checkpoint;
use fpgavirt_core::host::TaskEffect;
use fpgavirt_core::runtime::{Interrupt, Profiler};
use fpgavirt_core::stimulus::{parse_number, Stimulus};
use fpgavirt_hypervisor::{Config, DeviceModel, Hypervisor};

use crate::error::{CliError, Result};
use crate::setup::{DataBinding, Sources, Target};

#[derive(Parser)]
#[command(name = "fpgavirt", version, about = "Run Verilog programs on virtualized engines")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile and run a program to completion.
    Run(RunArgs),
    /// Interactive session; reads commands from stdin.
    Repl(ReplArgs),
    /// Serve engines to runtimes over TCP.
    Hypervisor(DaemonArgs),
    /// Print the compiled state-machine program or its state manifest.
    Compile(CompileArgs),
    /// Corpus throughput table, or one of the multiplexing scenarios.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ticks {
    Auto,
    N(u64),
}

impl std::str::FromStr for Ticks {
    type Err = String;

    fn from_str(s: &str) -> Result<Ticks, String> {
        match s {
            "auto" => Ok(Ticks::Auto),
            _ => parse_number(s).map(Ticks::N).ok_or_else(|| format!("bad tick count '{s}'")),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Source files, concatenated in order.
    #[arg(required = true)]
    sources: Vec<PathBuf>,
    #[arg(long)]
    top: Option<String>,
    /// Input toggled as the virtual clock (default: `clock` or `clk`).
    #[arg(long)]
    clock: Option<String>,
    /// Stimulus script: ticks, input sets, save/restart/migrate.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Tick count or `auto` (until $finish); overrides the script.
    #[arg(long)]
    ticks: Option<Ticks>,
    /// `[NAME=]PATH`: file opened by `$fopen("NAME")`.
    #[arg(long = "data", value_name = "[NAME=]PATH")]
    data: Vec<DataBinding>,
    /// `local`, or a hypervisor `host:port`.
    #[arg(long, default_value = "local")]
    engine: Target,
    /// Resume from a checkpoint of the same program.
    #[arg(long)]
    restore: Option<PathBuf>,
    /// Checkpoint at the first permitted boundary after the run stops.
    #[arg(long)]
    save: Option<PathBuf>,
    /// Write `wall_seconds,tick,virtual_hz,event` rows here.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    profile_interval: f64,
    /// Bound on ticks when running until $finish.
    #[arg(long, default_value_t = 1 << 24)]
    max_ticks: u64,
    /// Print every task effect with its tick instead of only displays.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct ReplArgs {
    /// Files to load before reading commands.
    sources: Vec<PathBuf>,
    #[arg(long)]
    top: Option<String>,
    #[arg(long)]
    clock: Option<String>,
    #[arg(long = "data", value_name = "[NAME=]PATH")]
    data: Vec<DataBinding>,
    #[arg(long, default_value = "local")]
    engine: Target,
}

#[derive(Args)]
struct DaemonArgs {
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// 0 picks a free port; the chosen address is printed.
    #[arg(long, default_value_t = 7000)]
    port: u16,
    /// Full-tier resource budget.
    #[arg(long, default_value_t = 10_000)]
    capacity: u64,
    /// Clock factor of each tier, fastest first.
    #[arg(long, value_delimiter = ',', default_value = "1,0.5")]
    tiers: Vec<f64>,
    /// Modeled device cycles per second at the full tier; 0 disables pacing.
    #[arg(long, default_value_t = 1e6)]
    cycle_rate: f64,
    #[arg(long, default_value_t = 2000)]
    compile_latency_ms: u64,
    /// How long a tenant may take to report safe before it is removed.
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    /// Hypervisor that takes registrations this one cannot place.
    #[arg(long)]
    peer: Option<String>,
    /// JSON-lines event log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(required = true)]
    sources: Vec<PathBuf>,
    #[arg(long)]
    top: Option<String>,
    /// Print the state manifest instead of the program.
    #[arg(long)]
    manifest: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated benchmark names, `all`, or empty.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Run a scenario instead of the suite.
    #[arg(long, value_enum)]
    scenario: Option<bench::Scenario>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scenario measurement window in seconds.
    #[arg(long, default_value_t = 10.0)]
    window: f64,
    /// CSV destination (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for the hypervisors' event logs.
    #[arg(long)]
    log_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let r = match cli.cmd {
        Command::Run(a) => run(a),
        Command::Repl(a) => repl(a),
        Command::Hypervisor(a) => daemon(a),
        Command::Compile(a) => compile(a),
        Command::Bench(a) => bench(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fpgavirt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(a: RunArgs) -> Result<()> {
    let sources = Sources::read(&a.sources)?;
    let compiled = sources.compile(a.top.as_deref())?;
    let mut stim = match &a.script {
        Some(p) => setup::read_script(p)?,
        None => Stimulus::default(),
    };
    match a.ticks {
        Some(Ticks::Auto) => stim.ticks = None,
        Some(Ticks::N(n)) => stim.ticks = Some(n),
        None => {}
    }
    let host = setup::host(&compiled, &a.data)?;
    let mut rt = setup::runtime(compiled, &sources.text, &a.engine, host, stim, a.clock.as_deref())?;
    if let Some(p) = &a.profile {
        rt = rt.with_profiler(Profiler::create(p, a.profile_interval)?);
    }
    rt.load()?;
    if let Some(p) = &a.restore {
        let ck = Checkpoint::read(p)?;
        rt.restore(&ck)?;
        eprintln!("restored {} at tick {}", p.display(), ck.tick);
    }
    let summary = rt.run(a.max_ticks);
    let mut out = io::stdout().lock();
    for t in &rt.host.trace {
        match &t.effect {
            _ if a.trace => writeln!(out, "{t}")?,
            TaskEffect::Display(s) => writeln!(out, "{s}")?,
            _ => {}
        }
    }
    out.flush()?;
    let summary = summary?;
    if let Some(p) = &a.save {
        let req = Interrupt::SaveTo(p.clone());
        rt.interrupts.push(req.clone());
        rt.boundary()?;
        while rt.interrupts.contains(&req) && !rt.terminated() {
            rt.step()?;
        }
        rt.boundary()?;
    }
    for e in &rt.log {
        eprintln!("{e}");
    }
    if let Some(f) = rt.log.iter().find(|e| e.contains(" failed: ")) {
        return Err(CliError::User(f.clone()));
    }
    if !summary.finished && rt.compiled().program.uses_task(fpgavirt_core::frontend::ast::TaskKind::Finish) && a.ticks != Some(Ticks::N(summary.ticks)) {
        eprintln!("stopped after {} ticks without $finish", summary.ticks);
    }
    Ok(())
}

fn repl(a: ReplArgs) -> Result<()> {
    let stdin = io::stdin();
    let interactive = stdin.is_terminal();
    let mut r = repl::Repl::new(io::stdout(), a.engine, a.data, a.clock);
    let mut preload = String::new();
    if !a.sources.is_empty() {
        preload.push_str("load");
        for s in &a.sources {
            preload.push_str(&format!(" {}", s.display()));
        }
        if let Some(t) = &a.top {
            preload.push_str(&format!(" top={t}"));
        }
        preload.push('\n');
    }
    let mut err = io::stderr();
    let input = io::Read::chain(preload.as_bytes(), stdin.lock());
    r.run(BufReader::new(input), &mut err, interactive)?;
    Ok(())
}

fn daemon(a: DaemonArgs) -> Result<()> {
    if a.tiers.is_empty() || a.tiers.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(CliError::user("tier factors must lie in (0, 1]"));
    }
    let cfg = Config {
        device: DeviceModel {
            compile_latency: Duration::from_millis(a.compile_latency_ms),
            cycle_rate: (a.cycle_rate > 0.0).then_some(a.cycle_rate),
            ..DeviceModel::new(a.capacity, &a.tiers)
        },
        handshake_timeout: Duration::from_millis(a.timeout_ms),
        peer: a.peer,
        log_path: a.log,
    };
    let h = Hypervisor::start((a.bind.as_str(), a.port), cfg)?;
    // Scripts read this line to find a port chosen with --port 0.
    println!("listening on {}", h.addr());
    io::stdout().flush()?;
    h.join();
    Ok(())
}

fn compile(a: CompileArgs) -> Result<()> {
    let compiled = Sources::read(&a.sources)?.compile(a.top.as_deref())?;
    let text = if a.manifest {
        compiled.manifest.to_text()
    } else {
        compiled.text.clone()
    };
    print!("{text}");
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| CliError::user(format!("{}: {e}", p.display())))?),
        None => Box::new(io::stdout()),
    };
    let checks = match a.scenario {
        Some(s) => {
            if a.window.is_nan() || a.window <= 0.0 {
                return Err(CliError::user("window must be positive"));
            }
            if let Some(d) = &a.log_dir {
                std::fs::create_dir_all(d)?;
            }
            let p = bench::Params {
                seed: a.seed,
                window: Duration::from_secs_f64(a.window),
                log_dir: a.log_dir.clone(),
            };
            let (rows, checks) = bench::run_scenario(s, &p)?;
            bench::write_rows(&rows, &mut out)?;
            checks
        }
        None => bench::suite(&bench::suite_names(&a.suite)?, a.seed, &mut out)?,
    };
    out.flush()?;
    let failed: Vec<&bench::Check> = checks.iter().filter(|c| !c.ok).collect();
    for c in &checks {
        eprintln!(
            "{} {}: measured {} expected {}",
            if c.ok { "ok  " } else { "FAIL" },
            c.name,
            c.measured,
            c.expected
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::user(format!("{} of {} checks failed", failed.len(), checks.len())))
    }
}
