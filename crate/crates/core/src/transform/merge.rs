//! Merging procedural blocks into one core and lowering event guards to
//! edge-detect wires.

use indexmap::IndexMap;

use crate::frontend::ast::{BinaryOp, Edge, EventGuard, Expr, LValue, Stmt, UnaryOp};
use crate::frontend::Diagnostic;
use crate::program::{ContAssign, Init, ProcBlock, Program, VarDecl};

pub const STATE_REG: &str = "__state";
pub const TASK_REG: &str = "__task";
pub const CLOCK: &str = "__clk";
pub const CONT: &str = "__cont";
pub const DONE: &str = "__done";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Core {
    /// Union of every block's guards, first occurrence order.
    pub guard_events: Vec<EventGuard>,
    pub body: Stmt,
    pub guard_wires: IndexMap<EventGuard, String>,
    /// Guarded variable to its previous-value register.
    pub prev_regs: IndexMap<String, String>,
}

impl Core {
    pub fn is_empty(&self) -> bool {
        self.guard_events.is_empty()
    }
}

pub fn mangle(var: &str) -> String {
    var.replace('.', "$")
}

pub fn guard_wire_name(g: &EventGuard) -> String {
    let p = match g.edge {
        Edge::Pos => "__pos_",
        Edge::Neg => "__neg_",
        Edge::Any => "__any_",
    };
    format!("{p}{}", mangle(&g.var))
}

pub fn prev_reg_name(var: &str) -> String {
    format!("__p{}", mangle(var))
}

/// `g1 || g2 || ...` over guard wire names.
pub fn any_of(wires: &[String]) -> Expr {
    let mut it = wires.iter();
    let first = Expr::ident(it.next().expect("at least one guard").clone());
    it.fold(first, |acc, w| {
        Expr::binary(BinaryOp::LogicOr, acc, Expr::ident(w.clone()))
    })
}

/// One core guarded by the union of all guards; block `i` becomes
/// `if (G(e_i)) begin body_i end`, in block order. A lone block needs no
/// test: the core only starts when the union, i.e. its own guard, fires.
pub fn merge_procedural(p: &Program) -> (Program, Core) {
    let mut guard_events: Vec<EventGuard> = Vec::new();
    let mut guard_wires = IndexMap::new();
    let mut prev_regs = IndexMap::new();
    let mut conjuncts = Vec::new();
    for b in &p.blocks {
        let mut names = Vec::new();
        for g in &b.guards {
            if !guard_events.contains(g) {
                guard_events.push(g.clone());
                guard_wires.insert(g.clone(), guard_wire_name(g));
                prev_regs
                    .entry(g.var.clone())
                    .or_insert_with(|| prev_reg_name(&g.var));
            }
            let w = guard_wire_name(g);
            if !names.contains(&w) {
                names.push(w);
            }
        }
        let body = match &b.body {
            Stmt::Begin(_) => b.body.clone(),
            s => Stmt::Begin(vec![s.clone()]),
        };
        conjuncts.push(Stmt::If(any_of(&names), Box::new(body), None));
    }
    if let [Stmt::If(_, body, None)] = conjuncts.as_slice() {
        conjuncts = vec![(**body).clone()];
    }
    let mut out = p.clone();
    out.blocks = if conjuncts.is_empty() {
        vec![]
    } else {
        vec![ProcBlock {
            guards: guard_events.clone(),
            body: Stmt::Begin(conjuncts.clone()),
        }]
    };
    let core = Core {
        guard_events,
        body: Stmt::Begin(conjuncts),
        guard_wires,
        prev_regs,
    };
    (out, core)
}

/// Declares prev registers, guard wires and the control registers, and
/// retargets the core at `posedge __clk`.
pub fn lower_guards(p: &Program, core: &Core) -> Result<Program, Diagnostic> {
    let mut out = p.clone();
    let declare = |out: &mut Program, name: &str, d: VarDecl| {
        if out.decls.contains_key(name) {
            return Err(Diagnostic::global(format!(
                "identifier '{name}' collides with a generated name"
            )));
        }
        out.decls.insert(name.to_string(), d);
        Ok(())
    };
    for (var, reg) in &core.prev_regs {
        let d = &p.decls[var];
        let init = match d.init {
            Init::Value(v) => v,
            Init::Fopen(_) => 0,
        };
        declare(&mut out, reg, VarDecl::reg(d.width).with_init(init))?;
    }
    for (g, wire) in &core.guard_wires {
        let d = &p.decls[&g.var];
        let bit = |n: &str| {
            if d.width > 1 {
                Expr::Index(n.to_string(), Box::new(Expr::uint(0)))
            } else {
                Expr::ident(n)
            }
        };
        let prev = &core.prev_regs[&g.var];
        let rhs = match g.edge {
            Edge::Pos => Expr::binary(
                BinaryOp::And,
                Expr::unary(UnaryOp::LogicNot, bit(prev)),
                bit(&g.var),
            ),
            Edge::Neg => Expr::binary(
                BinaryOp::And,
                bit(prev),
                Expr::unary(UnaryOp::LogicNot, bit(&g.var)),
            ),
            Edge::Any => Expr::binary(BinaryOp::Ne, Expr::ident(prev.clone()), Expr::ident(g.var.clone())),
        };
        declare(&mut out, wire, VarDecl::wire(1))?;
        out.assigns.push(ContAssign {
            lhs: LValue::Var(wire.clone()),
            rhs,
        });
    }
    declare(&mut out, STATE_REG, VarDecl::reg(32))?;
    declare(&mut out, TASK_REG, VarDecl::reg(32))?;
    declare(&mut out, CLOCK, VarDecl::reg(1))?;
    declare(&mut out, CONT, VarDecl::reg(1))?;
    declare(&mut out, DONE, VarDecl::reg(1))?;
    for b in &mut out.blocks {
        b.guards = vec![EventGuard::new(Edge::Pos, CLOCK)];
        b.body = core.body.clone();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{elaborate, find_top, parse, printer};

    fn prog(src: &str) -> Program {
        let su = parse(src).unwrap();
        elaborate(&su, &find_top(&su).unwrap()).unwrap()
    }

    #[test]
    fn posedge_and_negedge_blocks_merge() {
        let p = prog(
            "module t(input wire clock); reg a; reg b;
             always @(posedge clock) a <= 1; always @(negedge clock) b <= 1; endmodule",
        );
        let (m, core) = merge_procedural(&p);
        assert_eq!(m.blocks.len(), 1);
        assert_eq!(printer::guard_list(&m.blocks[0].guards), "posedge clock or negedge clock");
        let Stmt::Begin(cs) = &core.body else { panic!() };
        assert_eq!(cs.len(), 2);
        assert!(matches!(&cs[1], Stmt::If(Expr::Ident(w), ..) if w == "__neg_clock"));
        assert_eq!(core.prev_regs.len(), 1);
    }

    #[test]
    fn duplicate_guards_share_one_wire() {
        let p = prog(
            "module t(input wire c); reg a; reg b;
             always @(posedge c) a <= 1; always @(posedge c) b <= 1; endmodule",
        );
        let (_, core) = merge_procedural(&p);
        assert_eq!(core.guard_events.len(), 1);
        let low = lower_guards(&p, &core).unwrap();
        let text = low.to_text("t");
        assert!(text.contains("assign __pos_c = (!(__pc) & c);"), "{text}");
        assert!(!text.contains("__any_"));
    }

    #[test]
    fn hierarchical_names_mangle_and_collisions_reject() {
        let p = prog(
            "module s(input wire k); reg r; always @(k) r = k; endmodule
             module t(input wire c); s sm(.k(c)); endmodule",
        );
        let (_, core) = merge_procedural(&p);
        assert_eq!(core.guard_wires.values().next().unwrap(), "__any_sm$k");
        let low = lower_guards(&p, &core).unwrap();
        assert!(low.to_text("t").contains("assign __any_sm$k = (__psm$k != \\sm.k );"));
        let p = prog("module t(input wire c); reg __pc; always @(posedge c) __pc = 1; endmodule");
        let (_, core) = merge_procedural(&p);
        assert!(lower_guards(&p, &core).unwrap_err().message.contains("collides"));
    }
}
