//! Checkpoint files.
//!
//! ```text
//! magic      8 bytes  "SYNCKPT1"
//! hash      32 bytes  digest of the compiled program text
//! tick       u64
//! count      u32, then per entry:
//!   name_len u32, name bytes, width u32, ceil(width/8) value bytes (LE)
//! files      u32, then per descriptor:
//!   fd u32, path_len u32, path bytes, offset u64
//! ```
//!
//! Integers are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::value::Value;

pub const MAGIC: &[u8; 8] = b"SYNCKPT1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileRecord {
    pub fd: u32,
    pub path: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checkpoint {
    pub program_hash: [u8; 32],
    pub tick: u64,
    pub entries: Vec<(String, Value)>,
    pub files: Vec<FileRecord>,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.program_hash);
        out.extend_from_slice(&self.tick.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (n, v) in &self.entries {
            out.extend_from_slice(&(n.len() as u32).to_le_bytes());
            out.extend_from_slice(n.as_bytes());
            out.extend_from_slice(&v.width().to_le_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.files.len() as u32).to_le_bytes());
        for f in &self.files {
            out.extend_from_slice(&f.fd.to_le_bytes());
            out.extend_from_slice(&(f.path.len() as u32).to_le_bytes());
            out.extend_from_slice(f.path.as_bytes());
            out.extend_from_slice(&f.offset.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let program_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
        let tick = r.u64()?;
        let n = r.u32()?;
        let mut entries = Vec::new();
        for _ in 0..n {
            let name = r.string()?;
            let width = r.u32()?;
            if width == 0 || width > crate::value::MAX_WIDTH {
                return Err(Error::Checkpoint(format!("entry '{name}' has width {width}")));
            }
            let v = Value::from_le_bytes(width, r.take(width.div_ceil(8) as usize)?);
            entries.push((name, v));
        }
        let n = r.u32()?;
        let mut files = Vec::new();
        for _ in 0..n {
            let fd = r.u32()?;
            let path = r.string()?;
            let offset = r.u64()?;
            files.push(FileRecord { fd, path, offset });
        }
        if r.at != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint {
            program_hash,
            tick,
            entries,
            files,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path.display().to_string(), &e))
    }

    pub fn read(path: &Path) -> Result<Checkpoint> {
        let b = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), &e))?;
        Checkpoint::decode(&b)
    }

    pub fn bits(&self) -> u64 {
        self.entries.iter().map(|(_, v)| v.width() as u64).sum()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            program_hash: [7; 32],
            tick: 12,
            entries: vec![("a".into(), Value::new(3, 5)), ("m[1]".into(), Value::new(33, 1 << 32))],
            files: vec![FileRecord {
                fd: 1,
                path: "data".into(),
                offset: 8,
            }],
        }
    }

    #[test]
    fn layout() {
        let b = sample().encode();
        assert_eq!(&b[..8], b"SYNCKPT1");
        assert_eq!(&b[40..48], &12u64.to_le_bytes());
        // a: len, name, width, one value byte
        assert_eq!(&b[52..62], &[1, 0, 0, 0, b'a', 3, 0, 0, 0, 5]);
        assert_eq!(b.len(), 48 + 4 + 10 + (4 + 4 + 4 + 5) + 4 + (4 + 4 + 4 + 8));
    }

    #[test]
    fn truncation_is_an_error() {
        let b = sample().encode();
        for n in [0, 7, 40, b.len() - 1] {
            assert!(matches!(Checkpoint::decode(&b[..n]), Err(Error::Checkpoint(_))));
        }
    }

    proptest! {
        #[test]
        fn round_trip(tick: u64, vals in proptest::collection::vec((1u32..=64, any::<u64>()), 0..8),
                      offs in proptest::collection::vec(any::<u64>(), 0..3)) {
            let ck = Checkpoint {
                program_hash: [1; 32],
                tick,
                entries: vals.iter().enumerate().map(|(i, (w, v))| (format!("r{i}"), Value::new(*w, *v))).collect(),
                files: offs.iter().enumerate().map(|(i, o)| FileRecord { fd: i as u32 + 1, path: format!("f{i}"), offset: *o }).collect(),
            };
            let b = ck.encode();
            let back = Checkpoint::decode(&b).unwrap();
            prop_assert_eq!(&back, &ck);
            prop_assert_eq!(back.encode(), b);
        }
    }
}
