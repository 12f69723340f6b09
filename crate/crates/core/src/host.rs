//! Software side of system tasks: file handles, `$display` formatting and
//! the ordered effect trace.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::frontend::ast::{SysFunc, TaskKind};
use crate::store::{Arg, Sys};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FileOpKind {
    Open,
    Read,
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TaskEffect {
    Display(String),
    /// `payload` is the opened path, the word read (or `eof`), or the
    /// `$feof` result.
    FileOp(FileOpKind, u64, String),
    Finish,
    SaveRequested(String),
    RestartRequested(String),
    YieldAsserted,
}

impl fmt::Display for TaskEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskEffect::Display(s) => write!(f, "display {s:?}"),
            TaskEffect::FileOp(k, fd, p) => {
                let k = match k {
                    FileOpKind::Open => "open",
                    FileOpKind::Read => "read",
                    FileOpKind::Eof => "eof",
                };
                write!(f, "file {k} fd={fd} {p}")
            }
            TaskEffect::Finish => f.write_str("finish"),
            TaskEffect::SaveRequested(p) => write!(f, "save {p:?}"),
            TaskEffect::RestartRequested(p) => write!(f, "restart {p:?}"),
            TaskEffect::YieldAsserted => f.write_str("yield"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TraceEntry {
    pub tick: u64,
    pub effect: TaskEffect,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tick={} {}", self.tick, self.effect)
    }
}

/// Length-prefixed dump of trace lines: `u32` big-endian length, then the
/// UTF-8 text of `TraceEntry`'s display form.
pub fn encode_trace(trace: &[TraceEntry]) -> Vec<u8> {
    let mut out = Vec::new();
    for t in trace {
        let s = t.to_string();
        out.extend_from_slice(&(s.len() as u32).to_be_bytes());
        out.extend_from_slice(s.as_bytes());
    }
    out
}

pub fn decode_trace(mut bytes: &[u8]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let bad = || Error::Other("truncated trace dump".into());
        let len = u32::from_be_bytes(bytes.get(..4).ok_or_else(bad)?.try_into().unwrap()) as usize;
        let body = bytes.get(4..4 + len).ok_or_else(bad)?;
        out.push(String::from_utf8_lossy(body).into_owned());
        bytes = &bytes[4 + len..];
    }
    Ok(out)
}

/// A deferred runtime action requested by a task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HostRequest {
    Save(String),
    Restart(String),
}

#[derive(Debug, Clone)]
pub struct OpenFile {
    /// Name as written in the program; resolved through the bindings.
    pub name: String,
    pub offset: u64,
    pub eof: bool,
    data: Arc<Vec<u8>>,
}

impl OpenFile {
    pub fn size(&self) -> u64 {
        self.data.len() as u64
    }
}

/// Descriptors are dense from 1.
#[derive(Debug, Clone, Default)]
pub struct FileHandleTable {
    files: Vec<OpenFile>,
}

impl FileHandleTable {
    pub fn iter(&self) -> impl Iterator<Item = (u64, &OpenFile)> {
        self.files.iter().enumerate().map(|(i, f)| (i as u64 + 1, f))
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    fn get_mut(&mut self, fd: u64) -> Result<&mut OpenFile> {
        fd.checked_sub(1)
            .and_then(|i| self.files.get_mut(i as usize))
            .ok_or(Error::UnknownFd(fd))
    }

    pub fn get(&self, fd: u64) -> Option<&OpenFile> {
        fd.checked_sub(1).and_then(|i| self.files.get(i as usize))
    }
}

#[derive(Debug, Clone, Default)]
pub struct TaskHost {
    bindings: HashMap<String, PathBuf>,
    cache: HashMap<PathBuf, Arc<Vec<u8>>>,
    pub files: FileHandleTable,
    /// Tick stamped on effects as they are produced.
    pub tick: u64,
    pub trace: Vec<TraceEntry>,
    pub finished: bool,
    /// Set when `$yield` ran during the current tick.
    pub yielded: bool,
    pub requests: Vec<HostRequest>,
}

impl TaskHost {
    pub fn new() -> Self {
        Self::default()
    }

    /// Makes `$fopen("name")` open `path`.
    pub fn bind(&mut self, name: impl Into<String>, path: impl Into<PathBuf>) {
        self.bindings.insert(name.into(), path.into());
    }

    /// Makes `$fopen("name")` open an in-memory file.
    pub fn preload(&mut self, name: impl Into<String>, data: Vec<u8>) {
        let name = name.into();
        let key = PathBuf::from(format!("<memory>/{name}"));
        self.cache.insert(key.clone(), Arc::new(data));
        self.bindings.insert(name, key);
    }

    pub fn bindings(&self) -> impl Iterator<Item = (&String, &PathBuf)> {
        self.bindings.iter()
    }

    fn resolve(&self, name: &str) -> PathBuf {
        self.bindings
            .get(name)
            .cloned()
            .unwrap_or_else(|| PathBuf::from(name))
    }

    fn load(&mut self, name: &str) -> Result<Arc<Vec<u8>>> {
        let path = self.resolve(name);
        if let Some(d) = self.cache.get(&path) {
            return Ok(d.clone());
        }
        let d = Arc::new(std::fs::read(&path).map_err(|e| Error::io(path.display().to_string(), &e))?);
        self.cache.insert(path, d.clone());
        Ok(d)
    }

    fn emit(&mut self, effect: TaskEffect) {
        self.trace.push(TraceEntry {
            tick: self.tick,
            effect,
        });
    }

    pub fn open(&mut self, name: &str) -> Result<u64> {
        let data = self.load(name)?;
        self.files.files.push(OpenFile {
            name: name.to_string(),
            offset: 0,
            eof: false,
            data,
        });
        let fd = self.files.files.len() as u64;
        self.emit(TaskEffect::FileOp(FileOpKind::Open, fd, name.to_string()));
        Ok(fd)
    }

    /// Reopens a descriptor at a saved offset; used by checkpoint restore.
    /// Descriptors must be restored in order.
    pub fn reopen(&mut self, fd: u64, name: &str, offset: u64) -> Result<()> {
        if fd != self.files.files.len() as u64 + 1 {
            return Err(Error::Checkpoint(format!("file table is not dense at fd {fd}")));
        }
        let data = self.load(name)?;
        if offset > data.len() as u64 {
            return Err(Error::Checkpoint(format!(
                "offset {offset} past the end of '{name}'"
            )));
        }
        self.files.files.push(OpenFile {
            name: name.to_string(),
            offset,
            eof: false,
            data,
        });
        Ok(())
    }

    pub fn clear_files(&mut self) {
        self.files.files.clear();
    }

    /// Reads one little-endian 32-bit word. At end of file (including a
    /// trailing partial word) the eof flag is set and `None` returned.
    pub fn read32(&mut self, fd: u64) -> Result<Option<u32>> {
        let f = self.files.get_mut(fd)?;
        let at = f.offset as usize;
        let r = match f.data.get(at..at + 4) {
            Some(b) => {
                f.offset += 4;
                Some(u32::from_le_bytes(b.try_into().unwrap()))
            }
            None => {
                f.offset = f.size();
                f.eof = true;
                None
            }
        };
        let payload = r.map_or_else(|| "eof".to_string(), |w| w.to_string());
        self.emit(TaskEffect::FileOp(FileOpKind::Read, fd, payload));
        Ok(r)
    }

    pub fn feof(&mut self, fd: u64) -> Result<bool> {
        let e = self.files.get_mut(fd)?.eof;
        self.emit(TaskEffect::FileOp(FileOpKind::Eof, fd, (e as u8).to_string()));
        Ok(e)
    }

    /// Takes the effects produced since the last call.
    pub fn drain_trace(&mut self) -> Vec<TraceEntry> {
        std::mem::take(&mut self.trace)
    }

    pub fn run_task(&mut self, kind: TaskKind, args: &[Arg]) -> Result<Option<Value>> {
        let fd = |i: usize| -> Result<u64> {
            args.get(i)
                .and_then(Arg::value)
                .map(|v| v.bits())
                .ok_or_else(|| Error::Other(format!("{} expects a descriptor", kind.name())))
        };
        let path = |i: usize| -> Result<String> {
            match args.get(i) {
                Some(Arg::Str(s)) => Ok(s.clone()),
                _ => Err(Error::Other(format!("{} expects a string path", kind.name()))),
            }
        };
        Ok(match kind {
            TaskKind::Display => {
                let text = format_display(args);
                self.emit(TaskEffect::Display(text));
                None
            }
            TaskKind::Fread32 => self.read32(fd(0)?)?.map(|w| Value::new(32, w as u64)),
            TaskKind::Feof => Some(Value::new(32, self.feof(fd(0)?)? as u64)),
            TaskKind::Fopen => Some(Value::new(32, self.open(&path(0)?)?)),
            TaskKind::Finish => {
                self.finished = true;
                self.emit(TaskEffect::Finish);
                None
            }
            TaskKind::Save => {
                let p = path(0)?;
                self.requests.push(HostRequest::Save(p.clone()));
                self.emit(TaskEffect::SaveRequested(p));
                None
            }
            TaskKind::Restart => {
                let p = path(0)?;
                self.requests.push(HostRequest::Restart(p.clone()));
                self.emit(TaskEffect::RestartRequested(p));
                None
            }
            TaskKind::Yield => {
                self.yielded = true;
                self.emit(TaskEffect::YieldAsserted);
                None
            }
        })
    }
}

impl Sys for TaskHost {
    fn call(&mut self, f: SysFunc, args: &[Arg]) -> Result<Value> {
        let kind = match f {
            SysFunc::Feof => TaskKind::Feof,
            SysFunc::Fopen => TaskKind::Fopen,
        };
        Ok(self.run_task(kind, args)?.unwrap_or(Value::zero(32)))
    }

    fn task(&mut self, kind: TaskKind, args: &[Arg]) -> Result<Option<Value>> {
        self.run_task(kind, args)
    }
}

/// `$display` formatting: `%d`, `%h`/`%x`, `%b`, `%%`; field widths are
/// accepted and ignored, output is unpadded. Without a format string the
/// values are printed in decimal separated by spaces.
pub fn format_display(args: &[Arg]) -> String {
    let mut out = String::new();
    let (fmt, mut rest) = match args.first() {
        Some(Arg::Str(s)) => (s.as_str(), &args[1..]),
        _ => ("", args),
    };
    let mut next = || {
        let (a, r) = rest.split_first()?;
        rest = r;
        a.value()
    };
    let mut chars = fmt.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        while chars.peek().is_some_and(|c| c.is_ascii_digit()) {
            chars.next();
        }
        match chars.next() {
            Some('%') => out.push('%'),
            Some(spec @ ('d' | 'D' | 'h' | 'H' | 'x' | 'X' | 'b' | 'B')) => match next() {
                Some(v) => match spec.to_ascii_lowercase() {
                    'd' => out.push_str(&v.bits().to_string()),
                    'b' => out.push_str(&format!("{:b}", v.bits())),
                    _ => out.push_str(&format!("{:x}", v.bits())),
                },
                None => out.push_str("<missing>"),
            },
            Some(o) => {
                out.push('%');
                out.push(o);
            }
            None => out.push('%'),
        }
    }
    let tail: Vec<String> = std::iter::from_fn(next).map(|v| v.bits().to_string()).collect();
    if !tail.is_empty() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&tail.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn display_formats() {
        let a = [
            Arg::Str("res = %d, %h %b %5d%%".into()),
            Arg::Val(Value::new(32, 42)),
            Arg::Val(Value::new(8, 255)),
            Arg::Val(Value::new(3, 5)),
            Arg::Val(Value::new(4, 7)),
        ];
        assert_eq!(format_display(&a), "res = 42, ff 101 7%");
        assert_eq!(format_display(&[Arg::Val(Value::new(4, 3))]), "3");
    }

    #[test]
    fn read32_little_endian_then_eof_leaves_target() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&[7, 0, 0, 0, 1, 2]).unwrap();
        let mut h = TaskHost::new();
        h.bind("data", f.path());
        let fd = h.open("data").unwrap();
        assert_eq!(fd, 1);
        assert!(!h.feof(fd).unwrap());
        assert_eq!(h.read32(fd).unwrap(), Some(7));
        assert!(!h.feof(fd).unwrap());
        assert_eq!(h.read32(fd).unwrap(), None);
        assert!(h.feof(fd).unwrap());
        assert_eq!(h.files.get(fd).unwrap().offset, 6);
        assert!(matches!(h.read32(9), Err(Error::UnknownFd(9))));
    }

    #[test]
    fn trace_dump_round_trips() {
        let t = vec![
            TraceEntry {
                tick: 3,
                effect: TaskEffect::Display("a\nb".into()),
            },
            TraceEntry {
                tick: 4,
                effect: TaskEffect::Finish,
            },
        ];
        let lines = decode_trace(&encode_trace(&t)).unwrap();
        assert_eq!(lines, vec!["tick=3 display \"a\\nb\"", "tick=4 finish"]);
    }
}
