//! Moves system-function calls out of expressions.
//!
//! `if ($feof(fd))` becomes `$feof(fd, __sf_0); if (__sf_0)`. Calls are
//! hoisted in evaluation order (operands left to right, arguments before
//! the call), so the sequence of host interactions is unchanged.

use crate::frontend::ast::{CaseItem, Expr, Stmt, SysFunc, TaskKind};
use crate::program::{Program, VarDecl};
use crate::store::split_task_args;

pub const TEMP_PREFIX: &str = "__sf_";

pub struct Hoister<'a> {
    program: &'a Program,
    next: usize,
    pub temps: Vec<String>,
}

impl<'a> Hoister<'a> {
    pub fn new(program: &'a Program) -> Self {
        Hoister {
            program,
            next: 0,
            temps: Vec::new(),
        }
    }

    fn fresh(&mut self) -> String {
        loop {
            let n = format!("{TEMP_PREFIX}{}", self.next);
            self.next += 1;
            if !self.program.decls.contains_key(&n) {
                self.temps.push(n.clone());
                return n;
            }
        }
    }

    fn expr(&mut self, e: &Expr, pre: &mut Vec<Stmt>) -> Expr {
        match e {
            Expr::Num { .. } | Expr::Str(_) | Expr::Ident(_) | Expr::Slice(..) => e.clone(),
            Expr::Index(n, i) => Expr::Index(n.clone(), Box::new(self.expr(i, pre))),
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(self.expr(a, pre))),
            Expr::Binary(op, a, b) => {
                let a = self.expr(a, pre);
                let b = self.expr(b, pre);
                Expr::binary(*op, a, b)
            }
            Expr::Ternary(c, a, b) => {
                let c = self.expr(c, pre);
                let a = self.expr(a, pre);
                let b = self.expr(b, pre);
                Expr::Ternary(Box::new(c), Box::new(a), Box::new(b))
            }
            Expr::Concat(ps) => Expr::Concat(ps.iter().map(|p| self.expr(p, pre)).collect()),
            Expr::Call(f, args) => {
                let mut args: Vec<Expr> = args.iter().map(|a| self.expr(a, pre)).collect();
                let t = self.fresh();
                args.push(Expr::Ident(t.clone()));
                let kind = match f {
                    SysFunc::Feof => TaskKind::Feof,
                    SysFunc::Fopen => TaskKind::Fopen,
                };
                pre.push(Stmt::Task(kind, args));
                Expr::Ident(t)
            }
        }
    }

    pub fn stmt(&mut self, s: &Stmt) -> Stmt {
        let mut pre = Vec::new();
        let out = match s {
            Stmt::Blocking(l, e) => Stmt::Blocking(l.clone(), self.expr(e, &mut pre)),
            Stmt::NonBlocking(l, e) => Stmt::NonBlocking(l.clone(), self.expr(e, &mut pre)),
            Stmt::If(c, t, e) => {
                let c = self.expr(c, &mut pre);
                Stmt::If(
                    c,
                    Box::new(self.stmt(t)),
                    e.as_ref().map(|e| Box::new(self.stmt(e))),
                )
            }
            Stmt::Case(subject, items, d) => {
                let subject = self.expr(subject, &mut pre);
                let labels: Vec<Vec<Expr>> = items
                    .iter()
                    .map(|i| i.labels.iter().map(|l| self.expr(l, &mut pre)).collect())
                    .collect();
                let items = items
                    .iter()
                    .zip(labels)
                    .map(|(i, labels)| CaseItem {
                        labels,
                        body: self.stmt(&i.body),
                    })
                    .collect();
                Stmt::Case(subject, items, d.as_ref().map(|d| Box::new(self.stmt(d))))
            }
            Stmt::Begin(ss) => Stmt::Begin(ss.iter().map(|s| self.stmt(s)).collect()),
            Stmt::Fork(ss) => Stmt::Fork(ss.iter().map(|s| self.stmt(s)).collect()),
            Stmt::Task(kind, args) => {
                let (ins, out) = split_task_args(*kind, args);
                let mut new: Vec<Expr> = ins.iter().map(|a| self.expr(a, &mut pre)).collect();
                if let Some(out) = out {
                    new.push(out.to_expr());
                }
                Stmt::Task(*kind, new)
            }
        };
        if pre.is_empty() {
            out
        } else {
            pre.push(out);
            Stmt::Begin(pre)
        }
    }
}

/// Rewrites every block body and declares the temporaries (32 bits).
pub fn hoist_calls(p: &Program) -> (Program, Vec<String>) {
    let mut h = Hoister::new(p);
    let blocks: Vec<_> = p
        .blocks
        .iter()
        .map(|b| crate::program::ProcBlock {
            guards: b.guards.clone(),
            body: h.stmt(&b.body),
        })
        .collect();
    let temps = h.temps;
    let mut out = p.clone();
    out.blocks = blocks;
    for t in &temps {
        out.decls.insert(t.clone(), VarDecl::reg(32));
    }
    (out, temps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{elaborate, parse};

    #[test]
    fn nested_calls_hoist_in_evaluation_order() {
        let su = parse(
            "module t(input wire c); reg [31:0] fd; reg [31:0] x;
             always @(posedge c) x = $feof(fd) + $feof($fopen(\"f\")); endmodule",
        )
        .unwrap();
        let p = elaborate(&su, "t").unwrap();
        let (h, temps) = hoist_calls(&p);
        assert_eq!(temps, vec!["__sf_0", "__sf_1", "__sf_2"]);
        let Stmt::Begin(ss) = &h.blocks[0].body else {
            panic!()
        };
        let kinds: Vec<_> = ss
            .iter()
            .filter_map(|s| match s {
                Stmt::Task(k, a) => Some((*k, a.last().cloned().unwrap())),
                _ => None,
            })
            .collect();
        assert_eq!(
            kinds,
            vec![
                (TaskKind::Feof, Expr::ident("__sf_0")),
                (TaskKind::Fopen, Expr::ident("__sf_1")),
                (TaskKind::Feof, Expr::ident("__sf_2")),
            ]
        );
        assert!(h.blocks[0].body.is_synthesizable() == false);
        assert!(!format!("{:?}", h.blocks[0].body).contains("Call"));
        h.check().unwrap();
    }
}
