//! Coalescing: every live tenant's compiled program becomes a module
//! `m_<eid>`, instantiated once by a `router` module whose ports are the
//! tenants' inputs prefixed by eid. The text is generated in eid order so
//! the same tenant set always yields the same digest.

use std::collections::HashMap;
use std::fmt::Write;
use std::sync::Arc;

use fpgavirt_core::transform::manifest::digest;
use fpgavirt_core::transform::Compiled;

pub type Digest = [u8; 32];

#[derive(Debug)]
pub struct Image {
    pub digest: Digest,
    pub text: String,
    /// Members in eid order.
    pub eids: Vec<u32>,
    pub cost: u64,
}

pub fn module_name(eid: u32) -> String {
    format!("m_{eid}")
}

pub fn coalesce(members: &[(u32, Arc<Compiled>)]) -> String {
    let mut members: Vec<&(u32, Arc<Compiled>)> = members.iter().collect();
    members.sort_by_key(|m| m.0);
    let mut s = String::new();
    for (eid, c) in &members {
        s.push_str(&c.program.to_text(&module_name(*eid)));
        s.push('\n');
    }
    let mut ports = Vec::new();
    for (eid, c) in &members {
        for i in &c.program.inputs {
            let w = c.program.decls[i].width;
            let range = if w > 1 {
                format!("[{}:0] ", w - 1)
            } else {
                String::new()
            };
            ports.push(format!("  input wire {range}e{eid}_{i}"));
        }
    }
    let _ = writeln!(s, "module router(\n{}\n);", ports.join(",\n"));
    for (eid, c) in &members {
        let conns: Vec<String> = c
            .program
            .inputs
            .iter()
            .map(|i| format!(".{i}(e{eid}_{i})"))
            .collect();
        let m = module_name(*eid);
        let _ = writeln!(s, "  {m} {m}({});", conns.join(", "));
    }
    s.push_str("endmodule\n");
    s
}

pub fn build(members: &[(u32, Arc<Compiled>)]) -> Image {
    let text = coalesce(members);
    let mut eids: Vec<u32> = members.iter().map(|m| m.0).collect();
    eids.sort_unstable();
    Image {
        digest: digest(&text),
        eids,
        cost: members.iter().map(|m| m.1.cost()).sum(),
        text,
    }
}

/// Built images by digest of their coalesced text.
#[derive(Default)]
pub struct CompileCache {
    images: HashMap<Digest, Arc<Image>>,
}

impl CompileCache {
    pub fn get(&self, d: &Digest) -> Option<Arc<Image>> {
        self.images.get(d).cloned()
    }

    pub fn insert(&mut self, image: Arc<Image>) {
        self.images.insert(image.digest, image);
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}
