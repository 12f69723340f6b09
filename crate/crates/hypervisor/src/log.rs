//! Structured event log, one JSON object per line, and the handshake
//! linter that checks it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Listen { addr: String },
    Register { eid: u32, cost: u64 },
    Delegate { eid: u32, peer: String, remote_eid: u32 },
    RemovalFlagged { eid: u32, reason: String },
    Removed { eid: u32 },
    SessionStart { session: u64, members: Vec<u32>, tier: usize },
    CompileStart { session: u64, digest: String },
    CacheHit { session: u64, digest: String },
    CompileDone { session: u64, digest: String },
    SaveBegin { session: u64, eid: u32 },
    SaveSafe { session: u64, eid: u32 },
    HandshakeTimeout { session: u64, eid: u32 },
    Swap { session: u64, digest: String, eids: Vec<u32>, tier: usize, factor: f64 },
    SaveDone { session: u64, eid: u32 },
    SessionDone { session: u64 },
    Tier { from: usize, to: usize, factor: f64 },
    Grant { eid: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Seconds since the hypervisor started.
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

struct Inner {
    events: Vec<Event>,
    file: Option<BufWriter<File>>,
}

/// Shared, append-only. Clones write to the same log.
#[derive(Clone)]
pub struct EventLog {
    start: Instant,
    inner: Arc<Mutex<Inner>>,
}

impl EventLog {
    pub fn new(path: Option<&Path>) -> std::io::Result<EventLog> {
        let file = match path {
            Some(p) => Some(BufWriter::new(File::create(p)?)),
            None => None,
        };
        Ok(EventLog {
            start: Instant::now(),
            inner: Arc::new(Mutex::new(Inner {
                events: Vec::new(),
                file,
            })),
        })
    }

    pub fn push(&self, kind: EventKind) {
        let mut g = self.inner.lock().unwrap();
        let e = Event {
            seq: g.events.len() as u64,
            t: self.start.elapsed().as_secs_f64(),
            kind,
        };
        if let Some(f) = &mut g.file {
            // The log is diagnostic; a failed write must not stop service.
            let _ = serde_json::to_writer(&mut *f, &e)
                .map_err(std::io::Error::from)
                .and_then(|_| writeln!(f))
                .and_then(|_| f.flush());
        }
        g.events.push(e);
    }

    pub fn snapshot(&self) -> Vec<Event> {
        self.inner.lock().unwrap().events.clone()
    }
}

pub fn parse_lines(text: &str) -> Result<Vec<Event>, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

pub fn read_log(path: &Path) -> Result<Vec<Event>, String> {
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut text = String::new();
    for l in std::io::BufReader::new(f).lines() {
        text.push_str(&l.map_err(|e| e.to_string())?);
        text.push('\n');
    }
    parse_lines(&text)
}

#[derive(Default)]
struct Session {
    begun: BTreeSet<u32>,
    safe: BTreeSet<u32>,
    dropped: BTreeSet<u32>,
    swapped: bool,
    done: BTreeSet<u32>,
    finished: bool,
}

/// Checks every handshake session in the log: SaveSafe only after its
/// SaveBegin and before the swap; one swap, preceded by SaveSafe from
/// every tenant asked (or its removal); SaveDone only after the swap, to
/// every tenant that reported safe and is still live. Sessions still open
/// at the end of the log are checked only up to where they got.
pub fn lint(events: &[Event]) -> Result<usize, Vec<String>> {
    let mut sessions: BTreeMap<u64, Session> = BTreeMap::new();
    let mut errs = Vec::new();
    let mut open: Option<u64> = None;
    for e in events {
        let at = e.seq;
        match &e.kind {
            EventKind::SessionStart { session, .. } => {
                if let Some(o) = open {
                    if !sessions[&o].finished {
                        errs.push(format!("#{at}: session {session} starts while {o} is open"));
                    }
                }
                if sessions.insert(*session, Session::default()).is_some() {
                    errs.push(format!("#{at}: session {session} started twice"));
                }
                open = Some(*session);
            }
            EventKind::SaveBegin { session, eid } => match sessions.get_mut(session) {
                Some(s) if !s.swapped => {
                    s.begun.insert(*eid);
                }
                _ => errs.push(format!("#{at}: save_begin {eid} outside session {session}")),
            },
            EventKind::SaveSafe { session, eid } => match sessions.get_mut(session) {
                Some(s) if s.swapped => {
                    errs.push(format!("#{at}: save_safe from {eid} after the swap of {session}"))
                }
                Some(s) if !s.begun.contains(eid) => {
                    errs.push(format!("#{at}: save_safe from {eid} without save_begin"))
                }
                Some(s) => {
                    s.safe.insert(*eid);
                }
                None => errs.push(format!("#{at}: save_safe for unknown session {session}")),
            },
            EventKind::HandshakeTimeout { session, eid } => {
                if let Some(s) = sessions.get_mut(session) {
                    s.dropped.insert(*eid);
                }
            }
            EventKind::RemovalFlagged { eid, .. } => {
                if let Some(s) = open.and_then(|o| sessions.get_mut(&o)) {
                    if !s.finished {
                        s.dropped.insert(*eid);
                    }
                }
            }
            EventKind::Swap { session, .. } => match sessions.get_mut(session) {
                Some(s) if s.swapped => errs.push(format!("#{at}: second swap in session {session}")),
                Some(s) => {
                    for eid in &s.begun {
                        if !s.safe.contains(eid) && !s.dropped.contains(eid) {
                            errs.push(format!("#{at}: swap of {session} before save_safe from {eid}"));
                        }
                    }
                    s.swapped = true;
                }
                None => errs.push(format!("#{at}: swap for unknown session {session}")),
            },
            EventKind::SaveDone { session, eid } => match sessions.get_mut(session) {
                Some(s) if !s.swapped => {
                    errs.push(format!("#{at}: save_done to {eid} before the swap of {session}"))
                }
                Some(s) if !s.safe.contains(eid) => {
                    errs.push(format!("#{at}: save_done to {eid}, which never reported safe"))
                }
                Some(s) => {
                    s.done.insert(*eid);
                }
                None => errs.push(format!("#{at}: save_done for unknown session {session}")),
            },
            EventKind::SessionDone { session } => match sessions.get_mut(session) {
                Some(s) => {
                    if !s.swapped {
                        errs.push(format!("#{at}: session {session} done without a swap"));
                    }
                    for eid in &s.safe {
                        if !s.done.contains(eid) && !s.dropped.contains(eid) {
                            errs.push(format!("#{at}: session {session} never sent save_done to {eid}"));
                        }
                    }
                    s.finished = true;
                }
                None => errs.push(format!("#{at}: unknown session {session} done")),
            },
            _ => {}
        }
    }
    if errs.is_empty() {
        Ok(sessions.values().filter(|s| s.swapped).count())
    } else {
        Err(errs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use EventKind::*;

    fn log(kinds: Vec<EventKind>) -> Vec<Event> {
        kinds
            .into_iter()
            .enumerate()
            .map(|(i, kind)| Event {
                seq: i as u64,
                t: i as f64,
                kind,
            })
            .collect()
    }

    fn swap(session: u64) -> EventKind {
        Swap {
            session,
            digest: "d".into(),
            eids: vec![1, 2],
            tier: 0,
            factor: 1.0,
        }
    }

    fn two_tenant(order: Vec<EventKind>) -> Vec<Event> {
        let mut k = vec![SessionStart {
            session: 1,
            members: vec![1, 2],
            tier: 0,
        }];
        k.extend(order);
        log(k)
    }

    #[test]
    fn well_ordered_handshake_passes() {
        let l = two_tenant(vec![
            SaveBegin { session: 1, eid: 1 },
            SaveBegin { session: 1, eid: 2 },
            SaveSafe { session: 1, eid: 2 },
            SaveSafe { session: 1, eid: 1 },
            swap(1),
            SaveDone { session: 1, eid: 1 },
            SaveDone { session: 1, eid: 2 },
            SessionDone { session: 1 },
        ]);
        assert_eq!(lint(&l), Ok(1));
    }

    #[test]
    fn early_swap_and_early_done_fail() {
        let l = two_tenant(vec![
            SaveBegin { session: 1, eid: 1 },
            SaveBegin { session: 1, eid: 2 },
            SaveSafe { session: 1, eid: 1 },
            swap(1),
        ]);
        assert!(lint(&l).unwrap_err()[0].contains("before save_safe from 2"));
        let l = two_tenant(vec![
            SaveBegin { session: 1, eid: 1 },
            SaveSafe { session: 1, eid: 1 },
            SaveDone { session: 1, eid: 1 },
            swap(1),
        ]);
        assert!(lint(&l).is_err());
        let l = two_tenant(vec![
            SaveBegin { session: 1, eid: 1 },
            SaveSafe { session: 1, eid: 1 },
            swap(1),
            SessionDone { session: 1 },
        ]);
        assert!(lint(&l).unwrap_err()[0].contains("never sent save_done"));
    }

    #[test]
    fn timed_out_tenants_do_not_block_the_swap() {
        let l = two_tenant(vec![
            SaveBegin { session: 1, eid: 1 },
            SaveBegin { session: 1, eid: 2 },
            SaveSafe { session: 1, eid: 1 },
            HandshakeTimeout { session: 1, eid: 2 },
            swap(1),
            SaveDone { session: 1, eid: 1 },
            SessionDone { session: 1 },
        ]);
        assert_eq!(lint(&l), Ok(1));
    }

    #[test]
    fn json_lines_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("events.jsonl");
        let log = EventLog::new(Some(&p)).unwrap();
        log.push(Register { eid: 1, cost: 35 });
        log.push(swap(4));
        let back = read_log(&p).unwrap();
        assert_eq!(back, log.snapshot());
        let line = std::fs::read_to_string(&p).unwrap();
        assert!(line.starts_with("{\"seq\":0,"));
        assert!(line.contains("\"event\":\"register\""));
    }
}
