//! Rendering the state machine as a single clocked block, and recovering
//! the machine from that text.
//!
//! ```text
//! always @(posedge __clk)
//!   if (__cont) __task = 0;
//!   else if (__task == 0)
//!     case (__state)
//!       0: if (<any guard wire>) begin __done = 0; __state = 1; end
//!       1: begin <stmts> <terminator> end
//!       ...
//!     endcase
//! ```

use crate::frontend::ast::{BinaryOp, CaseItem, Edge, EventGuard, Expr, LValue, Stmt, UnaryOp};
use crate::frontend::const_value;
use crate::program::{ProcBlock, Program};

use super::fsm::{CoreStateMachine, State, Terminator};
use super::merge::{any_of, Core, CLOCK, CONT, DONE, STATE_REG, TASK_REG};

/// Guard wires and previous-value registers of a lowered program.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoreMeta {
    pub guards: Vec<(EventGuard, String)>,
    /// (guarded variable, previous-value register)
    pub prev_regs: Vec<(String, String)>,
}

impl CoreMeta {
    pub fn from_core(core: &Core) -> CoreMeta {
        CoreMeta {
            guards: core
                .guard_wires
                .iter()
                .map(|(g, w)| (g.clone(), w.clone()))
                .collect(),
            prev_regs: core
                .prev_regs
                .iter()
                .map(|(v, r)| (v.clone(), r.clone()))
                .collect(),
        }
    }
}

fn set_reg(name: &str, width: u32, v: u64) -> Stmt {
    Stmt::Blocking(LValue::Var(name.into()), Expr::num(width, v))
}

fn goto(id: u32) -> Stmt {
    set_reg(STATE_REG, 32, id as u64)
}

fn state_body(s: &State) -> Stmt {
    let mut body = s.stmts.clone();
    match &s.term {
        Terminator::Task {
            code,
            kind,
            args,
            next,
        } => {
            body.push(set_reg(TASK_REG, 32, *code as u64));
            body.push(Stmt::Task(*kind, args.clone()));
            body.push(goto(*next));
        }
        Terminator::Branch {
            cond,
            then_id,
            else_id,
        } => body.push(Stmt::If(
            cond.clone(),
            Box::new(goto(*then_id)),
            Some(Box::new(goto(*else_id))),
        )),
        Terminator::CaseBranch {
            subject,
            arms,
            default,
        } => body.push(Stmt::Case(
            subject.clone(),
            arms.iter()
                .map(|(labels, id)| CaseItem {
                    labels: labels.clone(),
                    body: goto(*id),
                })
                .collect(),
            Some(Box::new(goto(*default))),
        )),
        Terminator::Fallthrough(n) => body.push(goto(*n)),
        Terminator::Done => {
            body.push(set_reg(DONE, 1, 1));
            body.push(goto(0));
        }
    }
    Stmt::Begin(body)
}

/// Replaces the core block of a guard-lowered program by the state
/// machine's clocked implementation.
pub fn emit_core(p: &Program, sm: &CoreStateMachine, meta: &CoreMeta) -> Program {
    let mut out = p.clone();
    if meta.guards.is_empty() {
        out.blocks.clear();
        return out;
    }
    let wires: Vec<String> = meta.guards.iter().map(|(_, w)| w.clone()).collect();
    let mut items = vec![CaseItem {
        labels: vec![Expr::num(32, 0)],
        body: Stmt::If(
            any_of(&wires),
            Box::new(Stmt::Begin(vec![set_reg(DONE, 1, 0), goto(1)])),
            None,
        ),
    }];
    for s in &sm.states {
        items.push(CaseItem {
            labels: vec![Expr::num(32, s.id as u64)],
            body: state_body(s),
        });
    }
    let body = Stmt::If(
        Expr::ident(CONT),
        Box::new(set_reg(TASK_REG, 32, 0)),
        Some(Box::new(Stmt::If(
            Expr::binary(BinaryOp::Eq, Expr::ident(TASK_REG), Expr::num(32, 0)),
            Box::new(Stmt::Case(Expr::ident(STATE_REG), items, None)),
            None,
        ))),
    );
    out.blocks = vec![ProcBlock {
        guards: vec![EventGuard::new(Edge::Pos, CLOCK)],
        body,
    }];
    out
}

fn unwrap_begin(s: &Stmt) -> &Stmt {
    match s {
        Stmt::Begin(ss) if ss.len() == 1 => unwrap_begin(&ss[0]),
        s => s,
    }
}

fn stmts_of(s: &Stmt) -> Vec<Stmt> {
    super::flatten::stmt_list(s)
}

fn const_u32(e: &Expr) -> Option<u32> {
    const_value(e).map(|v| v.bits() as u32)
}

/// `__state = N` with constant N.
fn goto_target(s: &Stmt) -> Option<u32> {
    match unwrap_begin(s) {
        Stmt::Blocking(LValue::Var(n), e) if n == STATE_REG => const_u32(e),
        _ => None,
    }
}

fn is_set(s: &Stmt, reg: &str) -> Option<u32> {
    match s {
        Stmt::Blocking(LValue::Var(n), e) if n == reg => const_u32(e),
        _ => None,
    }
}

fn or_operands(e: &Expr, out: &mut Vec<String>) -> Result<(), String> {
    match e {
        Expr::Binary(BinaryOp::LogicOr, a, b) => {
            or_operands(a, out)?;
            or_operands(b, out)
        }
        Expr::Ident(n) => {
            out.push(n.clone());
            Ok(())
        }
        _ => Err("entry condition is not a disjunction of guard wires".into()),
    }
}

/// Bit 0 of `e` when it is `n` or `n[0]`.
fn bit_var(e: &Expr) -> Option<&str> {
    match e {
        Expr::Ident(n) => Some(n),
        Expr::Index(n, i) if const_u32(i) == Some(0) => Some(n),
        _ => None,
    }
}

fn guard_of_assign(rhs: &Expr) -> Option<(Edge, String, String)> {
    use BinaryOp::*;
    match rhs {
        Expr::Binary(And, a, b) => match (&**a, &**b) {
            (Expr::Unary(UnaryOp::LogicNot, p), x) => {
                Some((Edge::Pos, bit_var(x)?.to_string(), bit_var(p)?.to_string()))
            }
            (p, Expr::Unary(UnaryOp::LogicNot, x)) => {
                Some((Edge::Neg, bit_var(x)?.to_string(), bit_var(p)?.to_string()))
            }
            _ => None,
        },
        Expr::Binary(Ne, p, x) => match (&**p, &**x) {
            (Expr::Ident(p), Expr::Ident(x)) => Some((Edge::Any, x.clone(), p.clone())),
            _ => None,
        },
        _ => None,
    }
}

fn lift_state(id: u32, body: &Stmt) -> Result<State, String> {
    let mut stmts = stmts_of(body);
    let bad = || format!("state {id}: unrecognized terminator");
    let last = stmts.pop().ok_or_else(bad)?;
    let term = if let Some(next) = goto_target(&last) {
        let n = stmts.len();
        if next == 0 && n >= 1 && is_set(&stmts[n - 1], DONE) == Some(1) {
            stmts.pop();
            Terminator::Done
        } else if n >= 2 && matches!(stmts[n - 1], Stmt::Task(..)) && is_set(&stmts[n - 2], TASK_REG).is_some() {
            let Some(Stmt::Task(kind, args)) = stmts.pop() else {
                unreachable!()
            };
            let code = is_set(&stmts.pop().unwrap(), TASK_REG).unwrap();
            Terminator::Task {
                code,
                kind,
                args,
                next,
            }
        } else {
            Terminator::Fallthrough(next)
        }
    } else {
        match unwrap_begin(&last) {
            Stmt::If(cond, t, Some(e)) => Terminator::Branch {
                cond: cond.clone(),
                then_id: goto_target(t).ok_or_else(bad)?,
                else_id: goto_target(e).ok_or_else(bad)?,
            },
            Stmt::Case(subject, items, Some(d)) => Terminator::CaseBranch {
                subject: subject.clone(),
                arms: items
                    .iter()
                    .map(|i| Ok((i.labels.clone(), goto_target(&i.body).ok_or_else(bad)?)))
                    .collect::<Result<_, String>>()?,
                default: goto_target(d).ok_or_else(bad)?,
            },
            _ => return Err(bad()),
        }
    };
    Ok(State { id, stmts, term })
}

/// Recovers the state machine and guard metadata from a program produced
/// by `emit_core` (after printing and re-parsing).
pub fn lift_core(p: &Program) -> Result<(CoreStateMachine, CoreMeta), String> {
    let block = match p.blocks.as_slice() {
        [] => return Ok((CoreStateMachine::default(), CoreMeta::default())),
        [b] => b,
        _ => return Err("expected a single clocked block".into()),
    };
    let shape = "block does not have the clocked state-machine shape";
    let Stmt::If(c, _, Some(rest)) = unwrap_begin(&block.body) else {
        return Err(shape.into());
    };
    if *c != Expr::ident(CONT) {
        return Err(shape.into());
    }
    let Stmt::If(_, cases, None) = unwrap_begin(rest) else {
        return Err(shape.into());
    };
    let Stmt::Case(subject, items, None) = unwrap_begin(cases) else {
        return Err(shape.into());
    };
    if *subject != Expr::ident(STATE_REG) {
        return Err(shape.into());
    }
    let mut sm = CoreStateMachine::default();
    let mut wires = Vec::new();
    for (k, item) in items.iter().enumerate() {
        let label = item.labels.first().and_then(const_u32);
        if label != Some(k as u32) {
            return Err(format!("state arm {k} is out of order"));
        }
        if k == 0 {
            let Stmt::If(g, ..) = unwrap_begin(&item.body) else {
                return Err(shape.into());
            };
            or_operands(g, &mut wires)?;
        } else {
            sm.states.push(lift_state(k as u32, &item.body)?);
        }
    }
    let mut meta = CoreMeta::default();
    for w in wires {
        let a = p
            .assigns
            .iter()
            .find(|a| a.lhs == LValue::Var(w.clone()))
            .ok_or_else(|| format!("guard wire '{w}' has no assignment"))?;
        let (edge, var, prev) =
            guard_of_assign(&a.rhs).ok_or_else(|| format!("guard wire '{w}' is not an edge detector"))?;
        if !meta.prev_regs.iter().any(|(v, _)| *v == var) {
            meta.prev_regs.push((var.clone(), prev));
        }
        meta.guards.push((EventGuard::new(edge, var), w));
    }
    Ok((sm, meta))
}
