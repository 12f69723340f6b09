//! Wire protocol: every frame is a 4-byte big-endian payload length, a
//! 1-byte opcode, then the payload. Integers are big-endian; strings are a
//! u32 length and UTF-8 bytes; values are a width byte and 8 value bytes.
//!
//! | op   | message     | payload                                   |
//! |------|-------------|-------------------------------------------|
//! | 0x01 | Get         | eid, name                                 |
//! | 0x02 | GetResp     | value                                     |
//! | 0x03 | Set         | eid, name, value                          |
//! | 0x04 | SetAck      |                                           |
//! | 0x05 | Evaluate    | eid                                       |
//! | 0x06 | Update      | eid                                       |
//! | 0x07 | TaskTrap    | eid, task code u32, args, cycles u64      |
//! | 0x08 | Continue    | eid, values                               |
//! | 0x09 | Done        | eid, cycles u64                           |
//! | 0x0A | Register    | source                                    |
//! | 0x0B | RegisterAck | eid                                       |
//! | 0x0C | SaveBegin   | eid                                       |
//! | 0x0D | SaveSafe    | eid                                       |
//! | 0x0E | SaveDone    | eid                                       |
//! | 0x0F | Error       | code u16, text                            |
//! | 0x10 | Idle        | eid, cycles u64                           |
//! | 0x11 | UpdateAck   | eid, retrigger u8, cycles u64             |
//! | 0x12 | ContinueAck | eid                                       |
//! | 0x13 | Release     | eid                                       |
//! | 0x14 | ReleaseAck  | eid                                       |
//!
//! An arg is a tag byte (0 string, 1 value) and its body; arg and value
//! lists carry a u32 count. `cycles` is the engine's running device-cycle
//! total.

use std::io::{self, Read, Write};

use fpgavirt_core::store::Arg;
use fpgavirt_core::Value;

/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME: u32 = 16 << 20;

pub mod code {
    pub const UNKNOWN_ENGINE: u16 = 1;
    pub const STALE_ENGINE: u16 = 2;
    pub const COMPILE: u16 = 3;
    pub const PROTOCOL: u16 = 4;
    pub const UNKNOWN_VARIABLE: u16 = 5;
    pub const DEVICE_FULL: u16 = 6;
    pub const ENGINE: u16 = 7;
    pub const MALFORMED: u16 = 8;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Get { eid: u32, name: String },
    GetResp { value: Value },
    Set { eid: u32, name: String, value: Value },
    SetAck,
    Evaluate { eid: u32 },
    Update { eid: u32 },
    TaskTrap { eid: u32, code: u32, args: Vec<Arg>, cycles: u64 },
    Continue { eid: u32, retvals: Vec<Value> },
    Done { eid: u32, cycles: u64 },
    Register { source: String },
    RegisterAck { eid: u32 },
    SaveBegin { eid: u32 },
    SaveSafe { eid: u32 },
    SaveDone { eid: u32 },
    Error { code: u16, text: String },
    Idle { eid: u32, cycles: u64 },
    UpdateAck { eid: u32, retrigger: bool, cycles: u64 },
    ContinueAck { eid: u32 },
    Release { eid: u32 },
    ReleaseAck { eid: u32 },
}

impl Message {
    pub fn error(code: u16, text: impl Into<String>) -> Message {
        Message::Error {
            code,
            text: text.into(),
        }
    }

    pub fn opcode(&self) -> u8 {
        use Message::*;
        match self {
            Get { .. } => 0x01,
            GetResp { .. } => 0x02,
            Set { .. } => 0x03,
            SetAck => 0x04,
            Evaluate { .. } => 0x05,
            Update { .. } => 0x06,
            TaskTrap { .. } => 0x07,
            Continue { .. } => 0x08,
            Done { .. } => 0x09,
            Register { .. } => 0x0A,
            RegisterAck { .. } => 0x0B,
            SaveBegin { .. } => 0x0C,
            SaveSafe { .. } => 0x0D,
            SaveDone { .. } => 0x0E,
            Error { .. } => 0x0F,
            Idle { .. } => 0x10,
            UpdateAck { .. } => 0x11,
            ContinueAck { .. } => 0x12,
            Release { .. } => 0x13,
            ReleaseAck { .. } => 0x14,
        }
    }

    /// The engine a message addresses or answers for, if any.
    pub fn eid(&self) -> Option<u32> {
        use Message::*;
        match self {
            Get { eid, .. }
            | Set { eid, .. }
            | Evaluate { eid }
            | Update { eid }
            | TaskTrap { eid, .. }
            | Continue { eid, .. }
            | Done { eid, .. }
            | RegisterAck { eid }
            | SaveBegin { eid }
            | SaveSafe { eid }
            | SaveDone { eid }
            | Idle { eid, .. }
            | UpdateAck { eid, .. }
            | ContinueAck { eid }
            | Release { eid }
            | ReleaseAck { eid } => Some(*eid),
            GetResp { .. } | SetAck | Register { .. } | Error { .. } => None,
        }
    }

    /// Same message addressed to another engine id.
    pub fn with_eid(mut self, new: u32) -> Message {
        use Message::*;
        match &mut self {
            Get { eid, .. }
            | Set { eid, .. }
            | Evaluate { eid }
            | Update { eid }
            | TaskTrap { eid, .. }
            | Continue { eid, .. }
            | Done { eid, .. }
            | RegisterAck { eid }
            | SaveBegin { eid }
            | SaveSafe { eid }
            | SaveDone { eid }
            | Idle { eid, .. }
            | UpdateAck { eid, .. }
            | ContinueAck { eid }
            | Release { eid }
            | ReleaseAck { eid } => *eid = new,
            GetResp { .. } | SetAck | Register { .. } | Error { .. } => {}
        }
        self
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut p = Vec::new();
        use Message::*;
        match self {
            Get { eid, name } => {
                put_u32(&mut p, *eid);
                put_str(&mut p, name);
            }
            GetResp { value } => put_value(&mut p, value),
            Set { eid, name, value } => {
                put_u32(&mut p, *eid);
                put_str(&mut p, name);
                put_value(&mut p, value);
            }
            SetAck => {}
            TaskTrap {
                eid,
                code,
                args,
                cycles,
            } => {
                put_u32(&mut p, *eid);
                put_u32(&mut p, *code);
                put_u32(&mut p, args.len() as u32);
                for a in args {
                    match a {
                        Arg::Str(s) => {
                            p.push(0);
                            put_str(&mut p, s);
                        }
                        Arg::Val(v) => {
                            p.push(1);
                            put_value(&mut p, v);
                        }
                    }
                }
                p.extend(cycles.to_be_bytes());
            }
            Continue { eid, retvals } => {
                put_u32(&mut p, *eid);
                put_u32(&mut p, retvals.len() as u32);
                for v in retvals {
                    put_value(&mut p, v);
                }
            }
            Done { eid, cycles } | Idle { eid, cycles } => {
                put_u32(&mut p, *eid);
                p.extend(cycles.to_be_bytes());
            }
            Register { source } => put_str(&mut p, source),
            Error { code, text } => {
                p.extend(code.to_be_bytes());
                put_str(&mut p, text);
            }
            UpdateAck {
                eid,
                retrigger,
                cycles,
            } => {
                put_u32(&mut p, *eid);
                p.push(*retrigger as u8);
                p.extend(cycles.to_be_bytes());
            }
            Evaluate { eid }
            | Update { eid }
            | RegisterAck { eid }
            | SaveBegin { eid }
            | SaveSafe { eid }
            | SaveDone { eid }
            | ContinueAck { eid }
            | Release { eid }
            | ReleaseAck { eid } => put_u32(&mut p, *eid),
        }
        let mut f = Vec::with_capacity(p.len() + 5);
        f.extend((p.len() as u32).to_be_bytes());
        f.push(self.opcode());
        f.extend(p);
        f
    }

    /// Decodes one payload; trailing bytes are an error.
    pub fn decode(op: u8, payload: &[u8]) -> Result<Message, String> {
        let mut r = Cursor { b: payload };
        use Message::*;
        let m = match op {
            0x01 => Get {
                eid: r.u32()?,
                name: r.str()?,
            },
            0x02 => GetResp { value: r.value()? },
            0x03 => Set {
                eid: r.u32()?,
                name: r.str()?,
                value: r.value()?,
            },
            0x04 => SetAck,
            0x05 => Evaluate { eid: r.u32()? },
            0x06 => Update { eid: r.u32()? },
            0x07 => {
                let eid = r.u32()?;
                let code = r.u32()?;
                let n = r.count()?;
                let mut args = Vec::with_capacity(n);
                for _ in 0..n {
                    args.push(match r.u8()? {
                        0 => Arg::Str(r.str()?),
                        1 => Arg::Val(r.value()?),
                        t => return Err(format!("bad arg tag {t}")),
                    });
                }
                TaskTrap {
                    eid,
                    code,
                    args,
                    cycles: r.u64()?,
                }
            }
            0x08 => {
                let eid = r.u32()?;
                let n = r.count()?;
                let retvals = (0..n).map(|_| r.value()).collect::<Result<_, _>>()?;
                Continue { eid, retvals }
            }
            0x09 => Done {
                eid: r.u32()?,
                cycles: r.u64()?,
            },
            0x0A => Register { source: r.str()? },
            0x0B => RegisterAck { eid: r.u32()? },
            0x0C => SaveBegin { eid: r.u32()? },
            0x0D => SaveSafe { eid: r.u32()? },
            0x0E => SaveDone { eid: r.u32()? },
            0x0F => Error {
                code: r.u16()?,
                text: r.str()?,
            },
            0x10 => Idle {
                eid: r.u32()?,
                cycles: r.u64()?,
            },
            0x11 => UpdateAck {
                eid: r.u32()?,
                retrigger: match r.u8()? {
                    0 => false,
                    1 => true,
                    b => return Err(format!("bad flag {b}")),
                },
                cycles: r.u64()?,
            },
            0x12 => ContinueAck { eid: r.u32()? },
            0x13 => Release { eid: r.u32()? },
            0x14 => ReleaseAck { eid: r.u32()? },
            _ => return Err(format!("unknown opcode 0x{op:02x}")),
        };
        if !r.b.is_empty() {
            return Err(format!("{} trailing bytes", r.b.len()));
        }
        Ok(m)
    }
}

fn put_u32(p: &mut Vec<u8>, v: u32) {
    p.extend(v.to_be_bytes());
}

fn put_str(p: &mut Vec<u8>, s: &str) {
    put_u32(p, s.len() as u32);
    p.extend(s.as_bytes());
}

fn put_value(p: &mut Vec<u8>, v: &Value) {
    p.push(v.width() as u8);
    p.extend(v.bits().to_be_bytes());
}

struct Cursor<'a> {
    b: &'a [u8],
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], String> {
        if self.b.len() < n {
            return Err("truncated payload".into());
        }
        let (h, t) = self.b.split_at(n);
        self.b = t;
        Ok(h)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, String> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A list length, bounded by what the remaining bytes could hold.
    fn count(&mut self) -> Result<usize, String> {
        let n = self.u32()? as usize;
        if n > self.b.len() {
            return Err("list length exceeds payload".into());
        }
        Ok(n)
    }

    fn str(&mut self) -> Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "string is not UTF-8".to_string())
    }

    fn value(&mut self) -> Result<Value, String> {
        let w = self.u8()? as u32;
        let bits = self.u64()?;
        if w == 0 || w > fpgavirt_core::value::MAX_WIDTH {
            return Err(format!("bad value width {w}"));
        }
        Ok(Value::new(w, bits))
    }
}

/// A frame read off the wire. `Ok(None)` is a clean end of stream.
pub enum Frame {
    Message(Message),
    /// Well-framed but undecodable; the stream stays usable.
    Malformed(String),
}

pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Frame>> {
    let mut head = [0u8; 5];
    match r.read_exact(&mut head) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(head[..4].try_into().unwrap());
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Some(match Message::decode(head[4], &payload) {
        Ok(m) => Frame::Message(m),
        Err(e) => Frame::Malformed(e),
    }))
}

pub fn write_message(w: &mut impl Write, m: &Message) -> io::Result<()> {
    w.write_all(&m.encode())?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn value() -> impl Strategy<Value = Value> {
        (1u32..=64, any::<u64>()).prop_map(|(w, b)| Value::new(w, b))
    }

    fn message() -> impl Strategy<Value = Message> {
        let name = "[a-z_\\[\\]0-9.]{0,12}";
        let arg = prop_oneof![name.prop_map(Arg::Str), value().prop_map(Arg::Val)];
        prop_oneof![
            (any::<u32>(), name).prop_map(|(eid, name)| Message::Get { eid, name }),
            value().prop_map(|value| Message::GetResp { value }),
            (any::<u32>(), name, value()).prop_map(|(eid, name, value)| Message::Set { eid, name, value }),
            Just(Message::SetAck),
            any::<u32>().prop_map(|eid| Message::Evaluate { eid }),
            (any::<u32>(), any::<u32>(), prop::collection::vec(arg, 0..4), any::<u64>()).prop_map(
                |(eid, code, args, cycles)| Message::TaskTrap {
                    eid,
                    code,
                    args,
                    cycles
                }
            ),
            (any::<u32>(), prop::collection::vec(value(), 0..3))
                .prop_map(|(eid, retvals)| Message::Continue { eid, retvals }),
            ".{0,40}".prop_map(|source| Message::Register { source }),
            (any::<u16>(), ".{0,20}").prop_map(|(code, text)| Message::Error { code, text }),
            (any::<u32>(), any::<bool>(), any::<u64>()).prop_map(|(eid, retrigger, cycles)| {
                Message::UpdateAck {
                    eid,
                    retrigger,
                    cycles,
                }
            }),
            any::<u32>().prop_map(|eid| Message::SaveDone { eid }),
            any::<u32>().prop_map(|eid| Message::ReleaseAck { eid }),
        ]
    }

    proptest! {
        #[test]
        fn frames_round_trip(m in message()) {
            let bytes = m.encode();
            prop_assert_eq!(u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize, bytes.len() - 5);
            match read_frame(&mut bytes.as_slice()).unwrap() {
                Some(Frame::Message(back)) => prop_assert_eq!(back, m),
                _ => prop_assert!(false, "did not decode"),
            }
        }

        #[test]
        fn garbage_never_panics(op in any::<u8>(), payload in prop::collection::vec(any::<u8>(), 0..64)) {
            let _ = Message::decode(op, &payload);
        }
    }

    #[test]
    fn layout_is_big_endian() {
        let f = Message::Evaluate { eid: 0x0102_0304 }.encode();
        assert_eq!(f, [0, 0, 0, 4, 0x05, 1, 2, 3, 4]);
        let f = Message::GetResp {
            value: Value::new(16, 0xbeef),
        }
        .encode();
        assert_eq!(f, [0, 0, 0, 9, 0x02, 16, 0, 0, 0, 0, 0, 0, 0xbe, 0xef]);
    }

    #[test]
    fn malformed_payloads_are_reported() {
        assert!(Message::decode(0x05, &[0, 0]).is_err());
        assert!(Message::decode(0x05, &[0, 0, 0, 1, 9]).is_err());
        assert!(Message::decode(0x77, &[]).is_err());
        assert!(Message::decode(0x02, &[0, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
        let mut truncated: &[u8] = &[0, 0, 0, 9, 0x02, 1];
        assert!(read_frame(&mut truncated).is_err());
        assert!(read_frame(&mut (&[] as &[u8])).unwrap().is_none());
    }
}
