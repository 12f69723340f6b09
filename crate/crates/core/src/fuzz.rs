//! Grammar-directed random programs for differential testing.
//!
//! Shape limits: at most 40 statements (continuous assigns included), 6 registers (a memory or the file
//! descriptor counts as one), 64 ticks. Procedural blocks guarded by a
//! register only write higher-numbered registers, so chains of blocks
//! triggered by blocking writes always terminate; continuous assigns only
//! read registers, inputs and earlier wires, so they never oscillate.

use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::stimulus::{Action, Stimulus};

pub const MAX_STMTS: usize = 40;
pub const MAX_REGS: usize = 6;
pub const MAX_TICKS: u64 = 64;

#[derive(Debug, Clone)]
pub struct FuzzCase {
    pub seed: u64,
    pub source: String,
    pub stimulus: Stimulus,
    /// In-memory files, by the name passed to `$fopen`.
    pub files: Vec<(String, Vec<u8>)>,
}

#[derive(Clone)]
struct Var {
    name: String,
    width: u32,
}

struct Gen {
    rng: ChaCha8Rng,
    regs: Vec<Var>,
    mem: Option<Var>,
    wires: Vec<Var>,
    inputs: Vec<Var>,
    files: bool,
    stmts: usize,
    finish_used: bool,
    /// System functions are not allowed in assignment targets or wires.
    calls: bool,
}

impl Gen {
    fn leaf(&mut self, readable_wires: usize) -> String {
        let r = &mut self.rng;
        match r.gen_range(0..10) {
            0 | 1 => {
                if r.gen_bool(0.5) {
                    r.gen_range(0..20u64).to_string()
                } else {
                    let w = r.gen_range(1..=8u32);
                    format!("{w}'d{}", r.gen_range(0..1u64 << w))
                }
            }
            2 if readable_wires > 0 => self.wires[r.gen_range(0..readable_wires)].name.clone(),
            3 => self.inputs.choose(r).unwrap().name.clone(),
            4 if self.mem.is_some() => {
                let idx = self.expr(0, readable_wires);
                format!("mem[{idx}]")
            }
            5 => {
                let v = self.regs.choose(r).unwrap().clone();
                if v.width > 1 {
                    let m = r.gen_range(0..v.width);
                    let l = r.gen_range(0..=m);
                    format!("{}[{m}:{l}]", v.name)
                } else {
                    let i = r.gen_range(0..3);
                    format!("{}[{i}]", v.name)
                }
            }
            6 if self.files && self.calls => "$feof(fd)".into(),
            _ => self.regs.choose(r).unwrap().name.clone(),
        }
    }

    fn expr(&mut self, depth: u32, wires: usize) -> String {
        if depth == 0 || self.rng.gen_bool(0.35) {
            return self.leaf(wires);
        }
        let d = depth - 1;
        match self.rng.gen_range(0..10) {
            0 => {
                let op = *["~", "!", "-", "&", "|", "^"].choose(&mut self.rng).unwrap();
                format!("{op}({})", self.expr(d, wires))
            }
            1 => format!(
                "({} ? {} : {})",
                self.expr(d, wires),
                self.expr(d, wires),
                self.expr(d, wires)
            ),
            2 => format!("{{{}, {}}}", self.leaf(wires), self.leaf(wires)),
            _ => {
                let op = *[
                    "+", "-", "*", "&", "|", "^", "==", "!=", "<", "<=", ">", ">=", "<<", ">>",
                    "&&", "||",
                ]
                .choose(&mut self.rng)
                .unwrap();
                format!("({} {op} {})", self.expr(d, wires), self.expr(d, wires))
            }
        }
    }

    fn target(&mut self, writable: &[usize]) -> String {
        if self.mem.is_some() && self.rng.gen_bool(0.15) {
            let i = self.rng.gen_range(0..4);
            return format!("mem[{i}]");
        }
        let v = self.regs[*writable.choose(&mut self.rng).unwrap()].clone();
        match self.rng.gen_range(0..6) {
            0 if v.width > 1 => {
                let m = self.rng.gen_range(0..v.width);
                let l = self.rng.gen_range(0..=m);
                format!("{}[{m}:{l}]", v.name)
            }
            1 => {
                self.calls = false;
                let i = self.expr(1, self.wires.len());
                self.calls = true;
                format!("{}[{i}]", v.name)
            }
            _ => v.name,
        }
    }

    fn stmt(&mut self, depth: u32, writable: &[usize], out: &mut String, indent: usize) {
        self.stmts += 1;
        let pad = " ".repeat(indent);
        let budget_left = MAX_STMTS.saturating_sub(self.stmts);
        let nw = self.wires.len();
        let pick = if writable.is_empty() {
            // Nothing assignable: only tasks.
            9
        } else {
            self.rng.gen_range(0..14)
        };
        match pick {
            0..=2 if depth > 0 && budget_left >= 2 => {
                let c = self.expr(2, nw);
                let _ = writeln!(out, "{pad}if ({c}) begin");
                self.block(depth - 1, writable, out, indent + 2, 2);
                if self.rng.gen_bool(0.5) && self.stmts < MAX_STMTS {
                    let _ = writeln!(out, "{pad}end else begin");
                    self.block(depth - 1, writable, out, indent + 2, 2);
                }
                let _ = writeln!(out, "{pad}end");
            }
            3 if depth > 0 && budget_left >= 3 => {
                let s = self.expr(1, nw);
                let _ = writeln!(out, "{pad}case ({s})");
                let arms = self.rng.gen_range(1..=3);
                let mut labels: Vec<u64> = (0..8).collect();
                labels.shuffle(&mut self.rng);
                for k in 0..arms {
                    if self.stmts >= MAX_STMTS {
                        break;
                    }
                    let _ = writeln!(out, "{pad}  {}: begin", labels[k]);
                    self.block(depth - 1, writable, out, indent + 4, 1);
                    let _ = writeln!(out, "{pad}  end");
                }
                if self.rng.gen_bool(0.4) && self.stmts < MAX_STMTS {
                    let _ = writeln!(out, "{pad}  default: begin");
                    self.block(depth - 1, writable, out, indent + 4, 1);
                    let _ = writeln!(out, "{pad}  end");
                }
                let _ = writeln!(out, "{pad}endcase");
            }
            4..=6 => {
                let t = self.target(writable);
                let e = self.expr(3, nw);
                let _ = writeln!(out, "{pad}{t} <= {e};");
            }
            7 if self.files => {
                let t = self.target(writable);
                let _ = writeln!(out, "{pad}$fread32(fd, {t});");
            }
            8 if !self.finish_used && budget_left >= 1 && self.rng.gen_bool(0.3) => {
                self.finish_used = true;
                self.stmts += 1;
                let c = self.expr(2, nw);
                let _ = writeln!(out, "{pad}if ({c}) $finish;");
            }
            9 | 10 => {
                let a = self.expr(2, nw);
                let b = self.expr(1, nw);
                let _ = writeln!(out, "{pad}$display(\"a=%d b=%h\", {a}, {b});");
            }
            _ => {
                let t = self.target(writable);
                let e = self.expr(3, nw);
                let _ = writeln!(out, "{pad}{t} = {e};");
            }
        }
    }

    fn block(&mut self, depth: u32, writable: &[usize], out: &mut String, indent: usize, max: usize) {
        let n = self.rng.gen_range(1..=max);
        for _ in 0..n {
            if self.stmts >= MAX_STMTS {
                break;
            }
            self.stmt(depth, writable, out, indent);
        }
    }
}

pub fn generate(seed: u64) -> FuzzCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let files = rng.gen_bool(0.4);
    let has_mem = rng.gen_bool(0.3);
    let n_regs = rng.gen_range(2..=MAX_REGS - files as usize - has_mem as usize);
    let regs: Vec<Var> = (0..n_regs)
        .map(|i| Var {
            name: format!("r{i}"),
            width: if rng.gen_bool(0.35) { 1 } else { rng.gen_range(2..=12) },
        })
        .collect();
    let mut inputs = vec![Var {
        name: "clock".into(),
        width: 1,
    }];
    let extra_input = rng.gen_bool(0.5);
    if extra_input {
        inputs.push(Var {
            name: "din".into(),
            width: rng.gen_range(1..=8),
        });
    }
    let mut g = Gen {
        rng,
        regs,
        mem: has_mem.then(|| Var {
            name: "mem".into(),
            width: 8,
        }),
        wires: vec![],
        inputs,
        files,
        stmts: 0,
        finish_used: false,
        calls: false,
    };

    let mut src = String::new();
    let ports: Vec<String> = g
        .inputs
        .iter()
        .map(|v| match v.width {
            1 => format!("input wire {}", v.name),
            w => format!("input wire [{}:0] {}", w - 1, v.name),
        })
        .collect();
    let _ = writeln!(src, "module fuzz({});", ports.join(", "));
    for v in g.regs.clone() {
        let init = g.rng.gen_range(0..1u64 << v.width);
        match v.width {
            1 => {
                let _ = writeln!(src, "  reg {} = {init};", v.name);
            }
            w => {
                let _ = writeln!(src, "  reg [{}:0] {} = {init};", w - 1, v.name);
            }
        }
    }
    if g.mem.is_some() {
        let _ = writeln!(src, "  reg [7:0] mem [0:3];");
    }
    if files {
        let _ = writeln!(src, "  reg [31:0] fd = $fopen(\"in.dat\");");
    }
    let n_wires = g.rng.gen_range(0..=3);
    for k in 0..n_wires {
        let w = g.rng.gen_range(1..=12u32);
        let e = g.expr(2, k);
        let _ = writeln!(src, "  wire [{}:0] w{k};", w - 1);
        let _ = writeln!(src, "  assign w{k} = {e};");
        g.wires.push(Var {
            name: format!("w{k}"),
            width: w,
        });
    }
    // Continuous assigns count against the statement budget.
    g.stmts += n_wires;

    g.calls = true;
    let n_blocks = g.rng.gen_range(1..=4);
    for _ in 0..n_blocks {
        if g.stmts >= MAX_STMTS {
            break;
        }
        // Level -1 is the clock or the extra input.
        let mut level: i32 = -1;
        let mut guards = Vec::new();
        let n_guards = if g.rng.gen_bool(0.8) { 1 } else { 2 };
        for _ in 0..n_guards {
            let roll = g.rng.gen_range(0..10);
            let (edge, var, lvl) = match roll {
                0..=4 => ("posedge ", "clock".to_string(), -1),
                5 => ("negedge ", "clock".to_string(), -1),
                6 if extra_input => ("", "din".to_string(), -1),
                _ => {
                    // Leave at least one register above it writable.
                    let i = g.rng.gen_range(0..g.regs.len() - 1);
                    let e = *["posedge ", "negedge ", ""].choose(&mut g.rng).unwrap();
                    (e, g.regs[i].name.clone(), i as i32)
                }
            };
            let gs = format!("{edge}{var}");
            if !guards.contains(&gs) {
                guards.push(gs);
            }
            level = level.max(lvl);
        }
        let writable: Vec<usize> = (0..g.regs.len()).filter(|&j| j as i32 > level).collect();
        let mut body = String::new();
        g.block(2, &writable, &mut body, 4, 6);
        let _ = writeln!(src, "  always @({}) begin", guards.join(" or "));
        src.push_str(&body);
        let _ = writeln!(src, "  end");
    }
    let _ = writeln!(src, "endmodule");

    let ticks = g.rng.gen_range(1..=MAX_TICKS);
    let mut stimulus = Stimulus::with_ticks(ticks);
    if extra_input {
        let w = g.inputs[1].width;
        for _ in 0..g.rng.gen_range(0..8) {
            let t = g.rng.gen_range(0..ticks);
            let v = g.rng.gen_range(0..1u64 << w);
            stimulus.push(t, Action::Set("din".into(), v));
        }
    }
    let mut data = Vec::new();
    if files {
        let n = g.rng.gen_range(0..48);
        data = (0..n).map(|_| g.rng.gen()).collect();
    }
    FuzzCase {
        seed,
        source: src,
        stimulus,
        files: if files {
            vec![("in.dat".into(), data)]
        } else {
            vec![]
        },
    }
}
