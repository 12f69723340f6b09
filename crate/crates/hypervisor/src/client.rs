//! Tenant side of the protocol: a connection that separates responses from
//! hypervisor-initiated notices, and an [`Engine`] backed by it.

use std::io::BufReader;
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use fpgavirt_core::engine::{Engine, Outcome, Trap};
use fpgavirt_core::runtime::Connector;
use fpgavirt_core::transform::Compiled;
use fpgavirt_core::{Error, Result, Value};

use crate::proto::{code, read_frame, write_message, Frame, Message};

/// How long a tenant waits for any single response.
pub const RESPONSE_TIMEOUT: Duration = Duration::from_secs(60);

fn io_err(e: std::io::Error) -> Error {
    Error::io("hypervisor connection", &e)
}

pub struct Client {
    stream: TcpStream,
    responses: Receiver<Message>,
    notices: Receiver<Message>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Client> {
        let stream = TcpStream::connect(addr).map_err(io_err)?;
        stream.set_nodelay(true).map_err(io_err)?;
        let mut rd = BufReader::new(stream.try_clone().map_err(io_err)?);
        let (rtx, responses) = mpsc::channel();
        let (ntx, notices) = mpsc::channel();
        thread::spawn(move || {
            while let Ok(Some(f)) = read_frame(&mut rd) {
                let m = match f {
                    Frame::Message(m) => m,
                    Frame::Malformed(e) => Message::error(code::MALFORMED, e),
                };
                let to = match m {
                    Message::SaveBegin { .. } | Message::SaveDone { .. } => &ntx,
                    _ => &rtx,
                };
                if to.send(m).is_err() {
                    break;
                }
            }
        });
        Ok(Client {
            stream,
            responses,
            notices,
        })
    }

    pub fn send(&mut self, m: &Message) -> Result<()> {
        write_message(&mut self.stream, m).map_err(io_err)
    }

    pub fn recv(&mut self) -> Result<Message> {
        self.responses.recv_timeout(RESPONSE_TIMEOUT).map_err(|e| match e {
            RecvTimeoutError::Timeout => Error::Protocol("hypervisor response timed out".into()),
            RecvTimeoutError::Disconnected => Error::Protocol("hypervisor closed the connection".into()),
        })
    }

    pub fn request(&mut self, m: &Message) -> Result<Message> {
        self.send(m)?;
        self.recv()
    }

    pub fn poll_notice(&mut self) -> Option<Message> {
        self.notices.try_recv().ok()
    }

    pub fn wait_notice(&mut self, timeout: Duration) -> Option<Message> {
        self.notices.recv_timeout(timeout).ok()
    }

    /// The notice stream, for callers that forward notices elsewhere.
    pub fn take_notices(&mut self) -> Receiver<Message> {
        let (_, empty) = mpsc::channel();
        std::mem::replace(&mut self.notices, empty)
    }

    pub fn register(&mut self, source: &str) -> Result<u32> {
        match self.request(&Message::Register {
            source: source.to_string(),
        })? {
            Message::RegisterAck { eid } => Ok(eid),
            other => Err(unexpected(other, "register")),
        }
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

fn unexpected(m: Message, what: &str) -> Error {
    match m {
        Message::Error { code: code::UNKNOWN_VARIABLE, text } => Error::UnknownVariable(text),
        Message::Error { text, .. } => Error::Protocol(text),
        other => Error::Protocol(format!("unexpected reply to {what}: {other:?}")),
    }
}

/// An engine living on a hypervisor. State-safe pause requests arrive as
/// SaveBegin notices and are honored at the runtime's next permitted
/// boundary.
pub struct RemoteEngine {
    client: Client,
    eid: u32,
    cycles: u64,
    pause_pending: bool,
}

impl RemoteEngine {
    pub fn connect(addr: impl ToSocketAddrs, source: &str) -> Result<RemoteEngine> {
        let mut client = Client::connect(addr)?;
        let eid = client.register(source)?;
        Ok(RemoteEngine {
            client,
            eid,
            cycles: 0,
            pause_pending: false,
        })
    }

    pub fn eid(&self) -> u32 {
        self.eid
    }

    fn drain_notices(&mut self) {
        while let Some(n) = self.client.poll_notice() {
            if n == (Message::SaveBegin { eid: self.eid }) {
                self.pause_pending = true;
            }
        }
    }
}

impl Engine for RemoteEngine {
    fn get(&mut self, name: &str) -> Result<Value> {
        match self.client.request(&Message::Get {
            eid: self.eid,
            name: name.to_string(),
        })? {
            Message::GetResp { value } => Ok(value),
            other => Err(unexpected(other, "get")),
        }
    }

    fn set(&mut self, name: &str, value: Value) -> Result<()> {
        match self.client.request(&Message::Set {
            eid: self.eid,
            name: name.to_string(),
            value,
        })? {
            Message::SetAck => Ok(()),
            other => Err(unexpected(other, "set")),
        }
    }

    fn evaluate(&mut self) -> Result<Outcome> {
        match self.client.request(&Message::Evaluate { eid: self.eid })? {
            Message::Done { cycles, .. } => {
                self.cycles = cycles;
                Ok(Outcome::Done)
            }
            Message::Idle { cycles, .. } => {
                self.cycles = cycles;
                Ok(Outcome::Idle)
            }
            Message::TaskTrap {
                code, args, cycles, ..
            } => {
                self.cycles = cycles;
                Ok(Outcome::Trap(Trap { code, args }))
            }
            other => Err(unexpected(other, "evaluate")),
        }
    }

    fn cont(&mut self, retvals: &[Value]) -> Result<()> {
        match self.client.request(&Message::Continue {
            eid: self.eid,
            retvals: retvals.to_vec(),
        })? {
            Message::ContinueAck { .. } => Ok(()),
            other => Err(unexpected(other, "continue")),
        }
    }

    fn update(&mut self) -> Result<bool> {
        match self.client.request(&Message::Update { eid: self.eid })? {
            Message::UpdateAck {
                retrigger, cycles, ..
            } => {
                self.cycles = cycles;
                Ok(retrigger)
            }
            other => Err(unexpected(other, "update")),
        }
    }

    fn device_cycles(&self) -> u64 {
        self.cycles
    }

    fn pause_requested(&mut self) -> Result<bool> {
        self.drain_notices();
        Ok(self.pause_pending)
    }

    fn pause(&mut self) -> Result<()> {
        self.client.send(&Message::SaveSafe { eid: self.eid })?;
        loop {
            match self.client.wait_notice(RESPONSE_TIMEOUT) {
                Some(Message::SaveDone { eid }) if eid == self.eid => break,
                Some(_) => continue,
                None => return Err(Error::Protocol("no SaveDone from the hypervisor".into())),
            }
        }
        self.pause_pending = false;
        Ok(())
    }
}

impl Drop for RemoteEngine {
    fn drop(&mut self) {
        let _ = self.client.send(&Message::Release { eid: self.eid });
    }
}

/// Opens engines on hypervisors by registering the program's source text.
pub struct RemoteConnector {
    source: String,
}

impl RemoteConnector {
    pub fn new(source: impl Into<String>) -> Self {
        RemoteConnector {
            source: source.into(),
        }
    }
}

impl Connector for RemoteConnector {
    fn connect(&mut self, endpoint: &str, compiled: &Arc<Compiled>) -> Result<Box<dyn Engine>> {
        // Compilation is deterministic, so equal text means an equal
        // manifest on the far side; check it before moving any state.
        let ours = fpgavirt_core::transform::compile_source(&self.source, None)?;
        if ours.manifest.program_hash != compiled.manifest.program_hash {
            return Err(Error::HashMismatch);
        }
        Ok(Box::new(RemoteEngine::connect(endpoint, &self.source)?))
    }
}
