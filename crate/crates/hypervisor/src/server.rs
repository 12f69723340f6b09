//! The hypervisor service. One reader and one writer thread per
//! connection feed a single service thread that owns all engine state, so
//! ABI requests are served one at a time in arrival order; a compile
//! worker builds device images alongside.
//!
//! A registered tenant runs on a software engine until the next rebuild
//! puts it on the device. A rebuild swaps the device image only after
//! every tenant in it has saved its state (SaveBegin, SaveSafe); the
//! tenants then restore into the new engines (SaveDone).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use fpgavirt_core::engine::{Engine, Outcome, StateMachineEngine};
use fpgavirt_core::frontend::ast::TaskKind;
use fpgavirt_core::transform::{compile_source, Compiled};
use fpgavirt_core::Error;

use crate::client::Client;
use crate::device::DeviceModel;
use crate::image::{self, CompileCache, Image};
use crate::log::{EventKind, EventLog};
use crate::proto::{code, read_frame, write_message, Frame, Message};
use crate::sched::IoScheduler;

#[derive(Debug, Clone)]
pub struct Config {
    pub device: DeviceModel,
    /// How long a tenant may take to report safe before it is removed.
    pub handshake_timeout: Duration,
    /// Hypervisor that takes registrations this device cannot place.
    pub peer: Option<String>,
    pub log_path: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            device: DeviceModel::default(),
            handshake_timeout: Duration::from_secs(10),
            peer: None,
            log_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Status {
    pub tier: usize,
    pub factor: f64,
    /// Tenants on the device image.
    pub image: Vec<u32>,
    /// Registered and not flagged for removal, local or delegated.
    pub live: Vec<u32>,
    pub rebuilding: bool,
    pub swaps: u64,
    pub cached_images: usize,
}

type ConnId = u64;
type Out = (Option<Instant>, Message);

enum Work {
    Connected(ConnId, Sender<Out>, TcpStream),
    Request(ConnId, Message),
    Malformed(ConnId, String),
    Closed(ConnId),
    Built(u64, Arc<Image>),
    /// A handshake notice from the peer about a delegated tenant.
    Notice(u32, Message),
    Status(Sender<Status>),
    Shutdown,
}

pub struct Hypervisor {
    addr: SocketAddr,
    log: EventLog,
    work: Sender<Work>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl Hypervisor {
    pub fn start(bind: impl ToSocketAddrs, cfg: Config) -> io::Result<Hypervisor> {
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?;
        let log = EventLog::new(cfg.log_path.as_deref())?;
        log.push(EventKind::Listen {
            addr: addr.to_string(),
        });
        let stop = Arc::new(AtomicBool::new(false));
        let (work_tx, work_rx) = mpsc::channel();
        let (job_tx, job_rx) = mpsc::channel::<(u64, Arc<Image>)>();

        let latency = cfg.device.compile_latency;
        let wt = work_tx.clone();
        let compiler = thread::spawn(move || {
            for (session, img) in job_rx {
                thread::sleep(latency);
                if wt.send(Work::Built(session, img)).is_err() {
                    break;
                }
            }
        });

        let service = Service::new(cfg, log.clone(), addr, job_tx, work_tx.clone());
        let svc = thread::spawn(move || service.run(work_rx));

        let wt = work_tx.clone();
        let st = Arc::clone(&stop);
        let acceptor = thread::spawn(move || {
            let mut next: ConnId = 0;
            for s in listener.incoming() {
                if st.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(s) = s else { continue };
                next += 1;
                if spawn_connection(next, s, wt.clone()).is_err() {
                    continue;
                }
            }
        });

        Ok(Hypervisor {
            addr,
            log,
            work: work_tx,
            stop,
            threads: vec![svc, acceptor, compiler],
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn events(&self) -> Vec<crate::log::Event> {
        self.log.snapshot()
    }

    pub fn status(&self) -> Status {
        let (tx, rx) = mpsc::channel();
        self.work.send(Work::Status(tx)).expect("service running");
        rx.recv().expect("service running")
    }

    /// Polls the status until `f` holds or `timeout` passes.
    pub fn wait_for(&self, timeout: Duration, f: impl Fn(&Status) -> bool) -> Option<Status> {
        let end = Instant::now() + timeout;
        loop {
            let s = self.status();
            if f(&s) {
                return Some(s);
            }
            if Instant::now() > end {
                return None;
            }
            thread::sleep(Duration::from_millis(5));
        }
    }

    /// Blocks until the service stops (it never does on its own).
    pub fn join(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    fn stop_threads(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = self.work.send(Work::Shutdown);
        // Wake the acceptor.
        let _ = TcpStream::connect(self.addr);
        let (svc, rest) = (self.threads.remove(0), std::mem::take(&mut self.threads));
        let _ = svc.join();
        for t in rest {
            let _ = t.join();
        }
    }
}

impl Drop for Hypervisor {
    fn drop(&mut self) {
        if !self.threads.is_empty() {
            self.stop_threads();
        }
    }
}

fn spawn_connection(id: ConnId, s: TcpStream, work: Sender<Work>) -> io::Result<()> {
    s.set_nodelay(true)?;
    let mut rd = BufReader::new(s.try_clone()?);
    let wr_stream = s.try_clone()?;
    let (tx, rx) = mpsc::channel::<Out>();
    thread::spawn(move || {
        let mut w = BufWriter::new(wr_stream);
        for (at, m) in rx {
            if let Some(at) = at {
                let now = Instant::now();
                if at > now {
                    thread::sleep(at - now);
                }
            }
            if write_message(&mut w, &m).is_err() {
                break;
            }
        }
    });
    work.send(Work::Connected(id, tx, s))
        .map_err(|_| io::Error::other("service stopped"))?;
    thread::spawn(move || {
        loop {
            let w = match read_frame(&mut rd) {
                Ok(Some(Frame::Message(m))) => Work::Request(id, m),
                Ok(Some(Frame::Malformed(e))) => Work::Malformed(id, e),
                Ok(None) | Err(_) => break,
            };
            if work.send(w).is_err() {
                return;
            }
        }
        let _ = work.send(Work::Closed(id));
    });
    Ok(())
}

enum Backend {
    Local {
        engine: StateMachineEngine,
        in_image: bool,
    },
    Peer {
        client: Client,
        remote: u32,
    },
}

struct Tenant {
    conn: ConnId,
    compiled: Arc<Compiled>,
    removal: bool,
    backend: Backend,
    /// Cycles run on engines this tenant has since left.
    cycle_base: u64,
    /// Modeled device time, in seconds since start, at which the tenant's
    /// last operation completes.
    busy_until: f64,
    /// An I/O trap waiting for its grant, with its release time.
    deferred: Option<(Option<Instant>, Message)>,
    holds_grant: bool,
}

impl Tenant {
    fn cycles(&self) -> u64 {
        match &self.backend {
            Backend::Local { engine, .. } => self.cycle_base + engine.device_cycles(),
            Backend::Peer { .. } => 0,
        }
    }

    fn is_local(&self) -> bool {
        matches!(self.backend, Backend::Local { .. })
    }
}

enum Slot {
    Live(Box<Tenant>),
    Removed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    CompilingUntilDestructive,
    AwaitingSafe,
    Reprogramming,
    AwaitingRestore,
}

struct Session {
    id: u64,
    phase: Phase,
    tier: usize,
    image: Option<Arc<Image>>,
    awaiting: BTreeSet<u32>,
    safe: BTreeSet<u32>,
    restoring: BTreeSet<u32>,
    since: Instant,
}

struct Conn {
    tx: Sender<Out>,
    stream: TcpStream,
}

struct Service {
    cfg: Config,
    log: EventLog,
    start: Instant,
    addr: SocketAddr,
    jobs: Sender<(u64, Arc<Image>)>,
    work: Sender<Work>,
    conns: HashMap<ConnId, Conn>,
    registry: BTreeMap<u32, Slot>,
    next_eid: u32,
    session: Option<Session>,
    next_session: u64,
    dirty: bool,
    image: Arc<Image>,
    tier: usize,
    swaps: u64,
    cache: CompileCache,
    sched: IoScheduler,
}

fn engine_error(e: Error) -> Message {
    match e {
        Error::UnknownVariable(n) => Message::error(code::UNKNOWN_VARIABLE, n),
        Error::Protocol(t) => Message::error(code::PROTOCOL, t),
        other => Message::error(code::ENGINE, other.to_string()),
    }
}

fn hex(d: &[u8]) -> String {
    d.iter().map(|b| format!("{b:02x}")).collect()
}

fn is_io(kind: Option<TaskKind>) -> bool {
    matches!(
        kind,
        Some(TaskKind::Fread32 | TaskKind::Feof | TaskKind::Fopen)
    )
}

impl Service {
    fn new(
        cfg: Config,
        log: EventLog,
        addr: SocketAddr,
        jobs: Sender<(u64, Arc<Image>)>,
        work: Sender<Work>,
    ) -> Service {
        let empty = Arc::new(image::build(&[]));
        let mut cache = CompileCache::default();
        cache.insert(Arc::clone(&empty));
        Service {
            cfg,
            log,
            start: Instant::now(),
            addr,
            jobs,
            work,
            conns: HashMap::new(),
            registry: BTreeMap::new(),
            next_eid: 1,
            session: None,
            next_session: 1,
            dirty: false,
            image: empty,
            tier: 0,
            swaps: 0,
            cache,
            sched: IoScheduler::new(),
        }
    }

    fn run(mut self, rx: Receiver<Work>) {
        loop {
            let w = match rx.recv_timeout(Duration::from_millis(20)) {
                Ok(w) => w,
                Err(RecvTimeoutError::Timeout) => {
                    self.advance();
                    continue;
                }
                Err(RecvTimeoutError::Disconnected) => break,
            };
            match w {
                Work::Shutdown => break,
                Work::Connected(id, tx, stream) => {
                    self.conns.insert(id, Conn { tx, stream });
                }
                Work::Request(id, m) => self.handle(id, m),
                Work::Malformed(id, e) => self.reply(id, None, Message::error(code::MALFORMED, e)),
                Work::Closed(id) => self.closed(id),
                Work::Built(session, img) => self.built(session, img),
                Work::Notice(eid, m) => self.notice(eid, m),
                Work::Status(tx) => {
                    let _ = tx.send(self.status());
                }
            }
            self.advance();
        }
        for c in self.conns.values() {
            let _ = c.stream.shutdown(Shutdown::Both);
        }
    }

    fn status(&self) -> Status {
        Status {
            tier: self.tier,
            factor: self.cfg.device.tiers[self.tier].factor,
            image: self.image.eids.clone(),
            live: self
                .registry
                .iter()
                .filter_map(|(e, s)| match s {
                    Slot::Live(t) if !t.removal => Some(*e),
                    _ => None,
                })
                .collect(),
            rebuilding: self.session.is_some() || self.dirty,
            swaps: self.swaps,
            cached_images: self.cache.len(),
        }
    }

    fn reply(&self, conn: ConnId, at: Option<Instant>, m: Message) {
        if let Some(c) = self.conns.get(&conn) {
            let _ = c.tx.send((at, m));
        }
    }

    fn live(&self, eid: u32) -> Option<&Tenant> {
        match self.registry.get(&eid) {
            Some(Slot::Live(t)) if !t.removal => Some(t),
            _ => None,
        }
    }

    /// The tenant `eid`, if `conn` owns it; otherwise the error to send.
    /// Engines owned by other connections look exactly like unknown ones.
    fn owned(&mut self, conn: ConnId, eid: u32) -> Result<&mut Tenant, Message> {
        match self.registry.get_mut(&eid) {
            Some(Slot::Live(t)) if t.conn == conn => {
                if t.removal {
                    Err(Message::error(code::STALE_ENGINE, format!("stale engine {eid}")))
                } else {
                    Ok(t)
                }
            }
            Some(Slot::Removed) => Err(Message::error(code::STALE_ENGINE, format!("stale engine {eid}"))),
            _ => Err(Message::error(code::UNKNOWN_ENGINE, format!("unknown engine {eid}"))),
        }
    }

    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn handle(&mut self, conn: ConnId, m: Message) {
        match m {
            Message::Register { source } => {
                let r = self.register(conn, &source);
                self.reply(conn, None, r);
            }
            Message::SaveSafe { eid } => self.save_safe(conn, eid),
            Message::Release { eid } => {
                let r = match self.owned(conn, eid) {
                    Ok(_) => {
                        self.flag_removal(eid, "released");
                        Message::ReleaseAck { eid }
                    }
                    Err(e) => e,
                };
                self.reply(conn, None, r);
            }
            Message::Get { eid, .. }
            | Message::Set { eid, .. }
            | Message::Evaluate { eid }
            | Message::Update { eid }
            | Message::Continue { eid, .. } => self.abi(conn, eid, m),
            other => self.reply(
                conn,
                None,
                Message::error(
                    code::PROTOCOL,
                    format!("unexpected message 0x{:02x}", other.opcode()),
                ),
            ),
        }
    }

    fn register(&mut self, conn: ConnId, source: &str) -> Message {
        let compiled = match compile_source(source, None) {
            Ok(c) => c,
            Err(d) => return Message::error(code::COMPILE, d.to_string()),
        };
        let cost = compiled.cost();
        let load: u64 = self
            .registry
            .values()
            .filter_map(|s| match s {
                Slot::Live(t) if !t.removal && t.is_local() => Some(t.compiled.cost()),
                _ => None,
            })
            .sum();
        if self.cfg.device.place(load + cost).is_none() {
            return self.delegate(conn, source, compiled);
        }
        let eid = self.next_eid;
        self.next_eid += 1;
        let engine = StateMachineEngine::new(Arc::clone(&compiled));
        self.registry.insert(
            eid,
            Slot::Live(Box::new(Tenant {
                conn,
                compiled,
                removal: false,
                backend: Backend::Local {
                    engine,
                    in_image: false,
                },
                cycle_base: 0,
                busy_until: 0.0,
                deferred: None,
                holds_grant: false,
            })),
        );
        self.log.push(EventKind::Register { eid, cost });
        self.dirty = true;
        Message::RegisterAck { eid }
    }

    fn is_self(&self, peer: &str) -> bool {
        let Ok(addrs) = peer.to_socket_addrs() else {
            return false;
        };
        addrs.into_iter().any(|a| {
            a.port() == self.addr.port()
                && (a.ip() == self.addr.ip() || a.ip().is_loopback() || self.addr.ip().is_unspecified())
        })
    }

    fn delegate(&mut self, conn: ConnId, source: &str, compiled: Arc<Compiled>) -> Message {
        let full = || Message::error(code::DEVICE_FULL, "device full");
        let Some(peer) = self.cfg.peer.clone() else {
            return full();
        };
        if self.is_self(&peer) {
            return full();
        }
        let connected = Client::connect(peer.as_str()).and_then(|mut c| c.register(source).map(|r| (c, r)));
        let Ok((mut client, remote)) = connected else {
            return full();
        };
        let eid = self.next_eid;
        self.next_eid += 1;
        let notices = client.take_notices();
        let work = self.work.clone();
        thread::spawn(move || {
            for n in notices {
                if work.send(Work::Notice(eid, n)).is_err() {
                    break;
                }
            }
        });
        self.registry.insert(
            eid,
            Slot::Live(Box::new(Tenant {
                conn,
                compiled,
                removal: false,
                backend: Backend::Peer { client, remote },
                cycle_base: 0,
                busy_until: 0.0,
                deferred: None,
                holds_grant: false,
            })),
        );
        self.log.push(EventKind::Delegate {
            eid,
            peer,
            remote_eid: remote,
        });
        Message::RegisterAck { eid }
    }

    fn abi(&mut self, conn: ConnId, eid: u32, m: Message) {
        let in_restore = matches!(&self.session, Some(s) if s.restoring.contains(&eid));
        let evaluating = matches!(m, Message::Evaluate { .. });
        let cycle_time = self.cfg.device.cycle_time(self.tier);
        let now = self.now();
        let start = self.start;
        let t = match self.owned(conn, eid) {
            Ok(t) => t,
            Err(e) => return self.reply(conn, None, e),
        };
        if let Backend::Peer { client, remote } = &mut t.backend {
            let r = match client.request(&m.with_eid(*remote)) {
                Ok(r) => r.with_eid(eid),
                Err(e) => engine_error(e),
            };
            return self.reply(conn, None, r);
        }
        if t.deferred.is_some() && !matches!(m, Message::Get { .. }) {
            return self.reply(
                conn,
                None,
                Message::error(code::PROTOCOL, "an I/O trap is waiting for its grant"),
            );
        }
        let before = t.cycles();
        let Backend::Local { engine, .. } = &mut t.backend else {
            unreachable!()
        };
        let mut io_trap = false;
        let mut released_grant = false;
        let r = match m {
            Message::Get { name, .. } => engine.get(&name).map(|value| Message::GetResp { value }),
            Message::Set { name, value, .. } => engine.set(&name, value).map(|_| Message::SetAck),
            Message::Evaluate { .. } => engine.evaluate().map(|o| {
                let cycles = t.cycle_base + engine.device_cycles();
                match o {
                    Outcome::Done => Message::Done { eid, cycles },
                    Outcome::Idle => Message::Idle { eid, cycles },
                    Outcome::Trap(tr) => {
                        io_trap = is_io(t.compiled.task_kind(tr.code));
                        Message::TaskTrap {
                            eid,
                            code: tr.code,
                            args: tr.args,
                            cycles,
                        }
                    }
                }
            }),
            Message::Update { .. } => engine.update().map(|retrigger| Message::UpdateAck {
                eid,
                retrigger,
                cycles: t.cycle_base + engine.device_cycles(),
            }),
            Message::Continue { retvals, .. } => engine.cont(&retvals).map(|_| {
                released_grant = std::mem::take(&mut t.holds_grant);
                Message::ContinueAck { eid }
            }),
            _ => unreachable!(),
        };
        let spent = t.cycles() - before;
        let at = match cycle_time {
            Some(ct) if spent > 0 => {
                t.busy_until = t.busy_until.max(now) + spent as f64 * ct;
                Some(start + Duration::from_secs_f64(t.busy_until))
            }
            _ => None,
        };
        let r = r.unwrap_or_else(engine_error);
        if io_trap {
            t.deferred = Some((at, r));
            self.sched.request(eid);
        } else {
            self.reply(conn, at, r);
        }
        if released_grant {
            self.sched.complete(eid);
        }
        // The first evaluate after SaveDone ends the tenant's restore.
        if in_restore && evaluating {
            if let Some(s) = &mut self.session {
                s.restoring.remove(&eid);
            }
        }
        self.pump_io();
    }

    fn pump_io(&mut self) {
        while let Some(eid) = self.sched.grant() {
            match self.registry.get_mut(&eid) {
                Some(Slot::Live(t)) if !t.removal && t.deferred.is_some() => {
                    let (at, m) = t.deferred.take().unwrap();
                    t.holds_grant = true;
                    let conn = t.conn;
                    self.log.push(EventKind::Grant { eid });
                    self.reply(conn, at, m);
                    return;
                }
                _ => {
                    self.sched.complete(eid);
                }
            }
        }
    }

    fn save_safe(&mut self, conn: ConnId, eid: u32) {
        let Ok(t) = self.owned(conn, eid) else { return };
        if let Backend::Peer { client, remote } = &mut t.backend {
            let _ = client.send(&Message::SaveSafe { eid: *remote });
            return;
        }
        if let Some(s) = &mut self.session {
            if s.phase == Phase::AwaitingSafe && s.awaiting.remove(&eid) {
                s.safe.insert(eid);
                self.log.push(EventKind::SaveSafe { session: s.id, eid });
            }
        }
    }

    fn notice(&mut self, eid: u32, m: Message) {
        if let Some(t) = self.live(eid) {
            let conn = t.conn;
            self.reply(conn, None, m.with_eid(eid));
        }
    }

    fn closed(&mut self, conn: ConnId) {
        let owned: Vec<u32> = self
            .registry
            .iter()
            .filter_map(|(e, s)| match s {
                Slot::Live(t) if t.conn == conn && !t.removal => Some(*e),
                _ => None,
            })
            .collect();
        for eid in owned {
            self.flag_removal(eid, "disconnected");
        }
        self.conns.remove(&conn);
    }

    /// Marks `eid` for removal at the next rebuild and schedules one.
    /// Delegated tenants are released at once.
    fn flag_removal(&mut self, eid: u32, reason: &str) {
        let Some(Slot::Live(t)) = self.registry.get_mut(&eid) else {
            return;
        };
        if t.removal {
            return;
        }
        t.removal = true;
        t.deferred = None;
        t.holds_grant = false;
        self.log.push(EventKind::RemovalFlagged {
            eid,
            reason: reason.to_string(),
        });
        self.sched.cancel(eid);
        if let Some(s) = &mut self.session {
            s.awaiting.remove(&eid);
            s.safe.remove(&eid);
            s.restoring.remove(&eid);
        }
        if let Backend::Peer { client, remote } = &mut t.backend {
            let _ = client.send(&Message::Release { eid: *remote });
            self.registry.insert(eid, Slot::Removed);
            self.log.push(EventKind::Removed { eid });
        } else {
            self.dirty = true;
        }
        self.pump_io();
    }

    fn built(&mut self, session: u64, img: Arc<Image>) {
        self.cache.insert(Arc::clone(&img));
        self.log.push(EventKind::CompileDone {
            session,
            digest: hex(&img.digest),
        });
        if let Some(s) = &mut self.session {
            if s.id == session && s.phase == Phase::CompilingUntilDestructive {
                s.image = Some(img);
                self.begin_safe();
            }
        }
    }

    /// Compilation reached the destructive step: ask every live tenant
    /// on the new image to save.
    fn begin_safe(&mut self) {
        let img = self.session.as_ref().unwrap().image.clone().unwrap();
        let asked: Vec<u32> = img
            .eids
            .iter()
            .copied()
            .filter(|e| self.live(*e).is_some())
            .collect();
        let s = self.session.as_mut().unwrap();
        s.phase = Phase::AwaitingSafe;
        s.since = Instant::now();
        s.awaiting = asked.iter().copied().collect();
        let id = s.id;
        for eid in asked {
            let conn = self.live(eid).unwrap().conn;
            self.log.push(EventKind::SaveBegin { session: id, eid });
            self.reply(conn, None, Message::SaveBegin { eid });
        }
    }

    fn start_session(&mut self) {
        self.dirty = false;
        let members: Vec<(u32, Arc<Compiled>)> = self
            .registry
            .iter()
            .filter_map(|(e, s)| match s {
                Slot::Live(t) if !t.removal && t.is_local() => Some((*e, Arc::clone(&t.compiled))),
                _ => None,
            })
            .collect();
        let img = image::build(&members);
        let tier = self
            .cfg
            .device
            .place(img.cost)
            .unwrap_or(self.cfg.device.tiers.len() - 1);
        let id = self.next_session;
        self.next_session += 1;
        self.log.push(EventKind::SessionStart {
            session: id,
            members: img.eids.clone(),
            tier,
        });
        let digest = hex(&img.digest);
        let cached = self.cache.get(&img.digest);
        self.session = Some(Session {
            id,
            phase: Phase::CompilingUntilDestructive,
            tier,
            image: None,
            awaiting: BTreeSet::new(),
            safe: BTreeSet::new(),
            restoring: BTreeSet::new(),
            since: Instant::now(),
        });
        match cached {
            Some(hit) => {
                self.log.push(EventKind::CacheHit { session: id, digest });
                self.session.as_mut().unwrap().image = Some(hit);
                self.begin_safe();
            }
            None => {
                self.log.push(EventKind::CompileStart { session: id, digest });
                let _ = self.jobs.send((id, Arc::new(img)));
            }
        }
    }

    /// Every tenant on the new image has saved (or was dropped): replace
    /// the device image, then tell the savers to restore.
    fn swap(&mut self) {
        let s = self.session.as_mut().unwrap();
        s.phase = Phase::Reprogramming;
        let (id, tier) = (s.id, s.tier);
        let img = s.image.clone().unwrap();
        let factor = self.cfg.device.tiers[tier].factor;
        self.log.push(EventKind::Swap {
            session: id,
            digest: hex(&img.digest),
            eids: img.eids.clone(),
            tier,
            factor,
        });
        if tier != self.tier {
            self.log.push(EventKind::Tier {
                from: self.tier,
                to: tier,
                factor,
            });
            self.tier = tier;
        }
        self.image = Arc::clone(&img);
        self.swaps += 1;
        let mut removed = Vec::new();
        for (eid, slot) in self.registry.iter_mut() {
            let Slot::Live(t) = slot else { continue };
            if t.removal {
                removed.push(*eid);
                continue;
            }
            if img.eids.contains(eid) {
                if let Backend::Local { engine, in_image } = &mut t.backend {
                    t.cycle_base += engine.device_cycles();
                    *engine = StateMachineEngine::new(Arc::clone(&t.compiled));
                    *in_image = true;
                }
            }
        }
        for eid in removed {
            self.registry.insert(eid, Slot::Removed);
            self.log.push(EventKind::Removed { eid });
        }
        let safe: Vec<u32> = self.session.as_ref().unwrap().safe.iter().copied().collect();
        for &eid in &safe {
            if let Some(t) = self.live(eid) {
                let conn = t.conn;
                self.log.push(EventKind::SaveDone { session: id, eid });
                self.reply(conn, None, Message::SaveDone { eid });
            }
        }
        let s = self.session.as_mut().unwrap();
        s.restoring = safe.into_iter().collect();
        s.phase = Phase::AwaitingRestore;
        s.since = Instant::now();
    }

    /// Drives the handshake as far as it can go now.
    fn advance(&mut self) {
        let timeout = self.cfg.handshake_timeout;
        loop {
            let Some(s) = &mut self.session else {
                if self.dirty {
                    self.start_session();
                    continue;
                }
                return;
            };
            match s.phase {
                Phase::CompilingUntilDestructive | Phase::Reprogramming => return,
                Phase::AwaitingSafe => {
                    if !s.awaiting.is_empty() && s.since.elapsed() > timeout {
                        let (id, late) = (s.id, std::mem::take(&mut s.awaiting));
                        for eid in late {
                            self.log.push(EventKind::HandshakeTimeout { session: id, eid });
                            self.flag_removal(eid, "handshake timeout");
                        }
                        continue;
                    }
                    if !s.awaiting.is_empty() {
                        return;
                    }
                    self.swap();
                }
                Phase::AwaitingRestore => {
                    if !s.restoring.is_empty() && s.since.elapsed() <= timeout {
                        return;
                    }
                    let id = s.id;
                    self.session = None;
                    self.log.push(EventKind::SessionDone { session: id });
                }
            }
        }
    }
}
