//! Splitting the core body into states at system tasks and at branches
//! whose arms contain tasks.

use crate::frontend::ast::{Expr, Stmt, TaskKind};

use super::flatten::stmt_list;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminator {
    /// Suspends with `__task = code`; resumes at `next`.
    Task {
        code: u32,
        kind: TaskKind,
        args: Vec<Expr>,
        next: u32,
    },
    Branch {
        cond: Expr,
        then_id: u32,
        else_id: u32,
    },
    CaseBranch {
        subject: Expr,
        arms: Vec<(Vec<Expr>, u32)>,
        default: u32,
    },
    Fallthrough(u32),
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub id: u32,
    /// Synthesizable statements, run in order before the terminator.
    pub stmts: Vec<Stmt>,
    pub term: Terminator,
}

/// States are numbered from 1; `__state == 0` means not running.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoreStateMachine {
    pub states: Vec<State>,
}

impl CoreStateMachine {
    pub fn state(&self, id: u32) -> &State {
        &self.states[id as usize - 1]
    }

    pub fn task_codes(&self) -> Vec<(u32, TaskKind)> {
        self.states
            .iter()
            .filter_map(|s| match &s.term {
                Terminator::Task { code, kind, .. } => Some((*code, *kind)),
                _ => None,
            })
            .collect()
    }

    pub fn task_state(&self, code: u32) -> Option<&State> {
        self.states
            .iter()
            .find(|s| matches!(s.term, Terminator::Task { code: c, .. } if c == code))
    }

    pub fn successors(&self, id: u32) -> Vec<u32> {
        match &self.state(id).term {
            Terminator::Task { next, .. } => vec![*next],
            Terminator::Branch { then_id, else_id, .. } => vec![*then_id, *else_id],
            Terminator::CaseBranch { arms, default, .. } => {
                let mut v: Vec<u32> = arms.iter().map(|a| a.1).collect();
                v.push(*default);
                v
            }
            Terminator::Fallthrough(n) => vec![*n],
            Terminator::Done => vec![],
        }
    }
}

/// Where the next statement goes.
#[derive(Clone, Copy)]
enum Cursor {
    /// A state still accepting statements.
    Open(u32),
    /// A phi state; it carries no statements.
    Phi(u32),
    /// A task state whose continuation is not yet allocated.
    AfterTask(u32),
}

struct Builder {
    states: Vec<State>,
    next_code: u32,
}

impl Builder {
    fn new_state(&mut self) -> u32 {
        let id = self.states.len() as u32 + 1;
        self.states.push(State {
            id,
            stmts: vec![],
            term: Terminator::Done,
        });
        id
    }

    fn st(&mut self, id: u32) -> &mut State {
        &mut self.states[id as usize - 1]
    }

    fn link(&mut self, c: Cursor, target: u32) {
        match c {
            Cursor::Open(id) | Cursor::Phi(id) => self.st(id).term = Terminator::Fallthrough(target),
            Cursor::AfterTask(id) => {
                if let Terminator::Task { next, .. } = &mut self.st(id).term {
                    *next = target;
                }
            }
        }
    }

    fn open(&mut self, c: Cursor) -> u32 {
        match c {
            Cursor::Open(id) => id,
            _ => {
                let s = self.new_state();
                self.link(c, s);
                s
            }
        }
    }

    fn seq(&mut self, stmts: &[Stmt], mut c: Cursor) -> Cursor {
        for s in stmts {
            c = self.stmt(s, c);
        }
        c
    }

    /// Builds an arm starting at a fresh state and returns its entry and
    /// final cursor. Empty arms return `None`.
    fn arm(&mut self, body: &Stmt) -> Option<(u32, Cursor)> {
        let list = stmt_list(body);
        if list.is_empty() {
            return None;
        }
        let entry = self.new_state();
        let end = self.seq(&list, Cursor::Open(entry));
        Some((entry, end))
    }

    fn stmt(&mut self, s: &Stmt, c: Cursor) -> Cursor {
        if s.is_synthesizable() {
            let id = self.open(c);
            match s {
                Stmt::Begin(ss) | Stmt::Fork(ss) => self.st(id).stmts.extend(ss.iter().cloned()),
                s => self.st(id).stmts.push(s.clone()),
            }
            return Cursor::Open(id);
        }
        match s {
            Stmt::Task(kind, args) => {
                let id = self.open(c);
                let code = self.next_code;
                self.next_code += 1;
                self.st(id).term = Terminator::Task {
                    code,
                    kind: *kind,
                    args: args.clone(),
                    next: 0,
                };
                Cursor::AfterTask(id)
            }
            Stmt::Begin(ss) | Stmt::Fork(ss) => self.seq(ss, c),
            Stmt::If(cond, t, e) => {
                let id = self.open(c);
                let then_arm = self.arm(t);
                let else_arm = e.as_ref().and_then(|e| self.arm(e));
                let phi = self.new_state();
                let target = |b: &mut Builder, arm: Option<(u32, Cursor)>| match arm {
                    Some((entry, end)) => {
                        b.link(end, phi);
                        entry
                    }
                    None => phi,
                };
                let then_id = target(self, then_arm);
                let else_id = target(self, else_arm);
                self.st(id).term = Terminator::Branch {
                    cond: cond.clone(),
                    then_id,
                    else_id,
                };
                Cursor::Phi(phi)
            }
            Stmt::Case(subject, items, d) => {
                let id = self.open(c);
                let arms: Vec<(Vec<Expr>, Option<(u32, Cursor)>)> = items
                    .iter()
                    .map(|i| (i.labels.clone(), self.arm(&i.body)))
                    .collect();
                let def = d.as_ref().and_then(|d| self.arm(d));
                let phi = self.new_state();
                let resolve = |b: &mut Builder, arm: Option<(u32, Cursor)>| match arm {
                    Some((entry, end)) => {
                        b.link(end, phi);
                        entry
                    }
                    None => phi,
                };
                let arms = arms
                    .into_iter()
                    .map(|(labels, a)| (labels, resolve(self, a)))
                    .collect();
                let default = resolve(self, def);
                self.st(id).term = Terminator::CaseBranch {
                    subject: subject.clone(),
                    arms,
                    default,
                };
                Cursor::Phi(phi)
            }
            Stmt::Blocking(..) | Stmt::NonBlocking(..) => unreachable!("hoisted calls"),
        }
    }
}

/// Greedy packing: synthesizable statements (including `if`/`case` whose
/// arms are fully synthesizable) accumulate in the current state; a task
/// ends it; a branch with a task in an arm ends it with a branch whose
/// arms rejoin at an empty phi state. The last state terminates `Done`.
pub fn build_state_machine(body: &Stmt) -> CoreStateMachine {
    let mut b = Builder {
        states: vec![],
        next_code: 1,
    };
    let entry = b.new_state();
    let end = b.seq(&stmt_list(body), Cursor::Open(entry));
    match end {
        Cursor::Open(id) | Cursor::Phi(id) => b.st(id).term = Terminator::Done,
        Cursor::AfterTask(_) => {
            let done = b.new_state();
            b.link(end, done);
        }
    }
    CoreStateMachine { states: b.states }
}
