use std::fmt::Write;

use sha2::{Digest, Sha256};

use crate::frontend::ast::TaskKind;
use crate::program::{Program, VarKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Scalar name, or `mem[i]` for a memory element.
    pub name: String,
    pub width: u32,
    pub volatile: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateManifest {
    pub entries: Vec<ManifestEntry>,
    pub program_hash: [u8; 32],
}

pub fn digest(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

impl StateManifest {
    pub fn non_volatile(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| !e.volatile)
    }

    pub fn bits(&self, volatile: Option<bool>) -> u64 {
        self.entries
            .iter()
            .filter(|e| volatile.is_none_or(|v| e.volatile == v))
            .map(|e| e.width as u64)
            .sum()
    }

    /// One `name width volatile|non_volatile` record per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let v = if e.volatile { "volatile" } else { "non_volatile" };
            let _ = writeln!(s, "{} {} {v}", e.name, e.width);
        }
        s
    }
}

/// Every register of the lowered program. When the program uses `$yield`,
/// user registers are volatile unless annotated `non_volatile`; registers
/// named in `bookkeeping` never are.
pub fn classify_volatile(p: &Program, bookkeeping: &[String], text: &str) -> StateManifest {
    let yields = p.uses_task(TaskKind::Yield);
    let mut entries = Vec::new();
    for (n, d) in &p.decls {
        if d.kind != VarKind::Reg {
            continue;
        }
        let volatile = yields && !d.non_volatile && !bookkeeping.contains(n);
        match d.depth {
            Some(depth) => {
                for i in 0..depth {
                    entries.push(ManifestEntry {
                        name: format!("{n}[{i}]"),
                        width: d.width,
                        volatile,
                    });
                }
            }
            None => entries.push(ManifestEntry {
                name: n.clone(),
                width: d.width,
                volatile,
            }),
        }
    }
    StateManifest {
        entries,
        program_hash: digest(text),
    }
}
