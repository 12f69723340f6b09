//! Variable storage and the expression/statement evaluator shared by the
//! reference interpreter and the state-machine engine.
//!
//! Every operand of an expression is evaluated, left to right, with no
//! short-circuiting. System-function calls therefore happen in a fixed
//! post-order that the call-hoisting pass reproduces.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::frontend::ast::{Expr, LValue, Stmt, SysFunc, TaskKind};
use crate::ops;
use crate::program::{Init, Program};
use crate::value::{mask, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
struct Slot {
    width: u32,
    /// One word per element; scalars have exactly one.
    data: Vec<u64>,
    memory: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Store {
    vars: IndexMap<String, Slot>,
}

/// A resolved assignment destination; indices are evaluated once, when
/// the assignment executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Whole(usize),
    Bit(usize, u64),
    Elem(usize, u64),
    Slice(usize, u32, u32),
}

/// Argument passed to a system task or function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arg {
    Str(String),
    Val(Value),
}

impl Arg {
    pub fn value(&self) -> Option<Value> {
        match self {
            Arg::Val(v) => Some(*v),
            Arg::Str(_) => None,
        }
    }
}

/// Services system functions and tasks during evaluation.
pub trait Sys {
    fn call(&mut self, f: SysFunc, args: &[Arg]) -> Result<Value>;
    /// Returns the value for a task's output argument; `None` leaves it
    /// unchanged.
    fn task(&mut self, kind: TaskKind, args: &[Arg]) -> Result<Option<Value>>;
}

/// For contexts where only synthesizable code may run.
pub struct NoSys;

impl Sys for NoSys {
    fn call(&mut self, f: SysFunc, _: &[Arg]) -> Result<Value> {
        Err(Error::Other(format!("{} in synthesizable context", f.name())))
    }

    fn task(&mut self, kind: TaskKind, _: &[Arg]) -> Result<Option<Value>> {
        Err(Error::Other(format!("{} in synthesizable context", kind.name())))
    }
}

impl Store {
    /// Storage for every declaration, holding constant initial values.
    /// `$fopen` initializers start at zero; the loader fills them in.
    pub fn new(p: &Program) -> Store {
        let vars = p
            .decls
            .iter()
            .map(|(n, d)| {
                let init = match d.init {
                    Init::Value(v) => v & mask(d.width),
                    Init::Fopen(_) => 0,
                };
                let slot = Slot {
                    width: d.width,
                    data: vec![init; d.depth.unwrap_or(1) as usize],
                    memory: d.depth.is_some(),
                };
                (n.clone(), slot)
            })
            .collect();
        Store { vars }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.get_index_of(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    pub fn width(&self, name: &str) -> Option<u32> {
        self.vars.get(name).map(|s| s.width)
    }

    pub fn depth(&self, name: &str) -> Option<u32> {
        self.vars
            .get(name)
            .and_then(|s| s.memory.then_some(s.data.len() as u32))
    }

    /// Value of a scalar, or of element 0 of a memory.
    pub fn get(&self, name: &str) -> Option<Value> {
        self.vars.get(name).map(|s| Value::new(s.width, s.data[0]))
    }

    pub fn get_at(&self, i: usize) -> Value {
        let (_, s) = self.vars.get_index(i).expect("slot index");
        Value::new(s.width, s.data[0])
    }

    pub fn get_elem_at(&self, i: usize, idx: u64) -> Value {
        let (_, s) = self.vars.get_index(i).expect("slot index");
        Value::new(s.width, s.data.get(idx as usize).copied().unwrap_or(0))
    }

    pub fn get_elem(&self, name: &str, idx: u64) -> Option<Value> {
        let s = self.vars.get(name)?;
        let w = s.data.get(idx as usize).copied().unwrap_or(0);
        Some(Value::new(s.width, w))
    }

    /// Writes a scalar, truncating or zero-extending to its width.
    pub fn set(&mut self, name: &str, v: Value) -> Result<()> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
        self.write(Target::Whole(i), v);
        Ok(())
    }

    pub fn set_elem(&mut self, name: &str, idx: u64, v: Value) -> Result<()> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
        self.write(Target::Elem(i, idx), v);
        Ok(())
    }

    /// Reads `name`, or `mem[i]` for a memory element.
    pub fn get_named(&self, name: &str) -> Result<Value> {
        match self.split_elem(name) {
            Some((base, idx)) => Ok(self.get_elem(base, idx).expect("memory")),
            None => self
                .get(name)
                .filter(|_| self.depth(name).is_none())
                .ok_or_else(|| Error::UnknownVariable(name.to_string())),
        }
    }

    /// Writes `name` or `mem[i]`; returns the previous value.
    pub fn set_named(&mut self, name: &str, v: Value) -> Result<Value> {
        let old = self.get_named(name)?;
        match self.split_elem(name) {
            Some((base, idx)) => {
                let base = base.to_string();
                self.set_elem(&base, idx, v)?
            }
            None => self.set(name, v)?,
        }
        Ok(old)
    }

    /// `mem[i]` with `mem` a memory and `i` in range.
    fn split_elem<'a>(&self, name: &'a str) -> Option<(&'a str, u64)> {
        let (base, rest) = name.strip_suffix(']')?.rsplit_once('[')?;
        let idx: u64 = rest.parse().ok()?;
        let depth = self.depth(base)?;
        (idx < depth as u64).then_some((base, idx))
    }

    /// Scalar values of every non-memory variable, in declaration order.
    pub fn scalars(&self) -> impl Iterator<Item = (&str, Value)> {
        self.vars
            .iter()
            .filter(|(_, s)| !s.memory)
            .map(|(n, s)| (n.as_str(), Value::new(s.width, s.data[0])))
    }

    /// Flattened view used for state comparison: scalars as-is and memory
    /// elements as `name[i]`.
    pub fn snapshot(&self) -> Vec<(String, Value)> {
        let mut out = Vec::new();
        for (n, s) in &self.vars {
            if s.memory {
                for (i, w) in s.data.iter().enumerate() {
                    out.push((format!("{n}[{i}]"), Value::new(s.width, *w)));
                }
            } else {
                out.push((n.clone(), Value::new(s.width, s.data[0])));
            }
        }
        out
    }

    pub fn write(&mut self, t: Target, v: Value) {
        match t {
            Target::Whole(i) => {
                let s = &mut self.vars[i];
                s.data[0] = v.bits() & mask(s.width);
            }
            Target::Elem(i, idx) => {
                let s = &mut self.vars[i];
                let m = mask(s.width);
                if let Some(w) = s.data.get_mut(idx as usize) {
                    *w = v.bits() & m;
                }
            }
            Target::Bit(i, b) => {
                let s = &mut self.vars[i];
                if b < s.width as u64 {
                    s.data[0] = (s.data[0] & !(1 << b)) | ((v.bits() & 1) << b);
                }
            }
            Target::Slice(i, m, l) => {
                let s = &mut self.vars[i];
                let fm = mask(m - l + 1) << l;
                s.data[0] = (s.data[0] & !fm) | ((v.bits() << l) & fm);
            }
        }
    }

    fn slot(&self, name: &str) -> Result<(usize, &Slot)> {
        self.vars
            .get_full(name)
            .map(|(i, _, s)| (i, s))
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn eval(&self, e: &Expr, sys: &mut dyn Sys) -> Result<Value> {
        Ok(match e {
            Expr::Num { width, value } => Value::new(width.unwrap_or(32), *value),
            Expr::Str(s) => return Err(Error::Other(format!("string \"{s}\" used as a value"))),
            Expr::Ident(n) => {
                let (_, s) = self.slot(n)?;
                Value::new(s.width, s.data[0])
            }
            Expr::Index(n, i) => {
                let idx = self.eval(i, sys)?.bits();
                let (_, s) = self.slot(n)?;
                if s.memory {
                    Value::new(s.width, s.data.get(idx as usize).copied().unwrap_or(0))
                } else if idx < s.width as u64 {
                    Value::bit(s.data[0] >> idx & 1 == 1)
                } else {
                    Value::bit(false)
                }
            }
            Expr::Slice(n, m, l) => {
                let (_, s) = self.slot(n)?;
                Value::new(m - l + 1, s.data[0] >> l)
            }
            Expr::Unary(op, a) => ops::unary(*op, self.eval(a, sys)?),
            Expr::Binary(op, a, b) => {
                let a = self.eval(a, sys)?;
                let b = self.eval(b, sys)?;
                ops::binary(*op, a, b)
            }
            Expr::Ternary(c, a, b) => {
                let c = self.eval(c, sys)?;
                let a = self.eval(a, sys)?;
                let b = self.eval(b, sys)?;
                let w = a.width().max(b.width());
                if c.is_true() {
                    a.resize(w)
                } else {
                    b.resize(w)
                }
            }
            Expr::Concat(parts) => {
                let mut vs = Vec::with_capacity(parts.len());
                for p in parts {
                    vs.push(self.eval(p, sys)?);
                }
                ops::concat(vs).ok_or_else(|| Error::Other("concatenation wider than 64 bits".into()))?
            }
            Expr::Call(f, args) => {
                let args = self.eval_args(args, sys)?;
                sys.call(*f, &args)?
            }
        })
    }

    pub fn eval_args(&self, args: &[Expr], sys: &mut dyn Sys) -> Result<Vec<Arg>> {
        args.iter()
            .map(|a| match a {
                Expr::Str(s) => Ok(Arg::Str(s.clone())),
                e => self.eval(e, sys).map(Arg::Val),
            })
            .collect()
    }

    pub fn resolve(&self, l: &LValue, sys: &mut dyn Sys) -> Result<Target> {
        Ok(match l {
            LValue::Var(n) => Target::Whole(self.slot(n)?.0),
            LValue::Index(n, i) => {
                let idx = self.eval(i, sys)?.bits();
                let (k, s) = self.slot(n)?;
                if s.memory {
                    Target::Elem(k, idx)
                } else {
                    Target::Bit(k, idx)
                }
            }
            LValue::Slice(n, m, l) => Target::Slice(self.slot(n)?.0, *m, *l),
        })
    }

    /// Executes a statement. Blocking writes land immediately; non-blocking
    /// writes are appended to `nba` with their destination already resolved.
    pub fn exec(
        &mut self,
        s: &Stmt,
        nba: &mut Vec<(Target, Value)>,
        sys: &mut dyn Sys,
    ) -> Result<()> {
        match s {
            Stmt::Blocking(l, e) => {
                let v = self.eval(e, sys)?;
                let t = self.resolve(l, sys)?;
                self.write(t, v);
            }
            Stmt::NonBlocking(l, e) => {
                let v = self.eval(e, sys)?;
                let t = self.resolve(l, sys)?;
                nba.push((t, v));
            }
            Stmt::If(c, t, e) => {
                if self.eval(c, sys)?.is_true() {
                    self.exec(t, nba, sys)?;
                } else if let Some(e) = e {
                    self.exec(e, nba, sys)?;
                }
            }
            Stmt::Case(subject, items, default) => {
                let v = self.eval(subject, sys)?;
                let mut chosen = None;
                for (k, item) in items.iter().enumerate() {
                    for l in &item.labels {
                        let lv = self.eval(l, sys)?;
                        if chosen.is_none() && lv.bits() == v.bits() {
                            chosen = Some(k);
                        }
                    }
                }
                match chosen {
                    Some(k) => self.exec(&items[k].body, nba, sys)?,
                    None => {
                        if let Some(d) = default {
                            self.exec(d, nba, sys)?;
                        }
                    }
                }
            }
            Stmt::Begin(ss) | Stmt::Fork(ss) => {
                for s in ss {
                    self.exec(s, nba, sys)?;
                }
            }
            Stmt::Task(kind, args) => {
                let (ins, out) = split_task_args(*kind, args);
                let vals = self.eval_args(ins, sys)?;
                let r = sys.task(*kind, &vals)?;
                if let (Some(out), Some(v)) = (out, r) {
                    let t = self.resolve(&out, sys)?;
                    self.write(t, v);
                }
            }
        }
        Ok(())
    }
}

/// Splits a task's arguments into inputs and its output destination.
pub fn split_task_args(kind: TaskKind, args: &[Expr]) -> (&[Expr], Option<LValue>) {
    if kind.has_output() {
        if let Some((last, ins)) = args.split_last() {
            return (ins, crate::frontend::ast::expr_to_lvalue(last));
        }
    }
    (args, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{elaborate, parse};

    fn store(src: &str) -> Store {
        Store::new(&elaborate(&parse(src).unwrap(), "t").unwrap())
    }

    #[test]
    fn part_and_bit_writes_preserve_other_bits() {
        let mut s = store("module t(); reg [7:0] r = 8'hf0; endmodule");
        let i = s.index_of("r").unwrap();
        s.write(Target::Bit(i, 0), Value::bit(true));
        s.write(Target::Slice(i, 7, 6), Value::new(2, 0));
        assert_eq!(s.get("r").unwrap().bits(), 0x31);
    }

    #[test]
    fn memory_out_of_range_reads_zero_and_ignores_writes() {
        let mut s = store("module t(); reg [3:0] m [0:1]; endmodule");
        s.set_elem("m", 5, Value::new(4, 9)).unwrap();
        assert_eq!(s.get_elem("m", 5).unwrap().bits(), 0);
        s.set_elem("m", 1, Value::new(4, 9)).unwrap();
        assert_eq!(s.snapshot()[1], ("m[1]".to_string(), Value::new(4, 9)));
    }

    #[test]
    fn nonblocking_resolves_index_when_scheduled() {
        let mut s = store("module t(); reg [3:0] m [0:3]; reg [1:0] i = 1; endmodule");
        let mut nba = vec![];
        let st = parse("module x(); always @(posedge c) begin m[i] <= 4'd7; i = 2; end endmodule")
            .unwrap();
        let crate::frontend::ast::Item::Always { body, .. } = &st.modules[0].items[0] else {
            panic!()
        };
        s.exec(body, &mut nba, &mut NoSys).unwrap();
        for (t, v) in nba {
            s.write(t, v);
        }
        assert_eq!(s.get_elem("m", 1).unwrap().bits(), 7);
        assert_eq!(s.get_elem("m", 2).unwrap().bits(), 0);
    }
}
