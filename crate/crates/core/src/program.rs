//! The elaborated, flat program every later stage consumes.

use indexmap::IndexMap;

use crate::frontend::ast::{
    expr_to_lvalue, EventGuard, Expr, Item, LValue, ModuleDecl, NetKind, Port, Range, Stmt,
    TaskKind,
};
use crate::frontend::printer;
use crate::frontend::{const_value, Diagnostic};
use crate::ops;
use crate::value::MAX_WIDTH;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Reg,
    Wire,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Init {
    Value(u64),
    /// Register initialized from `$fopen(path)` when the program is loaded.
    Fopen(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarDecl {
    pub kind: VarKind,
    pub width: u32,
    /// Element count for `reg [W-1:0] m [0:D-1]`.
    pub depth: Option<u32>,
    pub init: Init,
    pub non_volatile: bool,
}

impl VarDecl {
    pub fn reg(width: u32) -> Self {
        VarDecl {
            kind: VarKind::Reg,
            width,
            depth: None,
            init: Init::Value(0),
            non_volatile: false,
        }
    }

    pub fn wire(width: u32) -> Self {
        VarDecl {
            kind: VarKind::Wire,
            ..VarDecl::reg(width)
        }
    }

    pub fn with_init(mut self, v: u64) -> Self {
        self.init = Init::Value(v);
        self
    }

    pub fn bits(&self) -> u64 {
        self.width as u64 * self.depth.unwrap_or(1) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContAssign {
    pub lhs: LValue,
    pub rhs: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProcBlock {
    pub guards: Vec<EventGuard>,
    pub body: Stmt,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub decls: IndexMap<String, VarDecl>,
    pub assigns: Vec<ContAssign>,
    pub blocks: Vec<ProcBlock>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Program {
    pub fn decl(&self, name: &str) -> Option<&VarDecl> {
        self.decls.get(name)
    }

    pub fn registers(&self) -> impl Iterator<Item = (&String, &VarDecl)> {
        self.decls.iter().filter(|(_, d)| d.kind == VarKind::Reg)
    }

    pub fn uses_task(&self, kind: TaskKind) -> bool {
        let mut found = false;
        for b in &self.blocks {
            b.body.for_each_task(&mut |k, _| found |= k == kind);
        }
        found
    }

    /// Self-determined width of an expression.
    pub fn expr_width(&self, e: &Expr) -> Result<u32, String> {
        Ok(match e {
            Expr::Num { width, .. } => width.unwrap_or(32),
            Expr::Str(_) => return Err("string literal used as a value".into()),
            Expr::Ident(n) => {
                let d = self.lookup(n)?;
                if d.depth.is_some() {
                    return Err(format!("memory '{n}' used without an index"));
                }
                d.width
            }
            Expr::Index(n, i) => {
                let d = self.lookup(n)?;
                self.expr_width(i)?;
                if d.depth.is_some() {
                    d.width
                } else {
                    1
                }
            }
            Expr::Slice(n, m, l) => {
                let d = self.lookup(n)?;
                if d.depth.is_some() {
                    return Err(format!("part-select of memory '{n}'"));
                }
                if *m >= d.width {
                    return Err(format!("part-select [{m}:{l}] out of range for '{n}'"));
                }
                m - l + 1
            }
            Expr::Unary(op, a) => ops::unary_width(*op, self.expr_width(a)?),
            Expr::Binary(op, a, b) => ops::binary_width(*op, self.expr_width(a)?, self.expr_width(b)?),
            Expr::Ternary(c, a, b) => {
                self.expr_width(c)?;
                self.expr_width(a)?.max(self.expr_width(b)?)
            }
            Expr::Concat(parts) => {
                let mut w = 0;
                for p in parts {
                    w += self.expr_width(p)?;
                }
                if w > MAX_WIDTH {
                    return Err(format!("concatenation wider than {MAX_WIDTH} bits"));
                }
                w
            }
            Expr::Call(_, args) => {
                for a in args {
                    if !matches!(a, Expr::Str(_)) {
                        self.expr_width(a)?;
                    }
                }
                32
            }
        })
    }

    fn lookup(&self, n: &str) -> Result<&VarDecl, String> {
        self.decls
            .get(n)
            .ok_or_else(|| format!("undeclared identifier '{n}'"))
    }

    pub fn lvalue_width(&self, l: &LValue) -> Result<u32, String> {
        match l {
            LValue::Var(n) => {
                let d = self.lookup(n)?;
                if d.depth.is_some() {
                    return Err(format!("memory '{n}' assigned without an index"));
                }
                Ok(d.width)
            }
            LValue::Index(..) | LValue::Slice(..) => self.expr_width(&l.to_expr()),
        }
    }

    /// Well-formedness: every name resolves, widths are positive and in
    /// range, lvalue kinds match their assignment form, guards name scalar
    /// variables, and `non_volatile` only annotates registers.
    pub fn check(&self) -> Result<(), Diagnostic> {
        let err = |m: String| Err(Diagnostic::global(m));
        for (n, d) in &self.decls {
            if d.width == 0 || d.width > MAX_WIDTH {
                return err(format!("'{n}' has unsupported width {}", d.width));
            }
            if d.depth == Some(0) {
                return err(format!("memory '{n}' has zero depth"));
            }
            if d.non_volatile && d.kind == VarKind::Wire {
                return err(format!("non_volatile annotation on wire '{n}'"));
            }
            if matches!(d.init, Init::Fopen(_)) && d.kind == VarKind::Wire {
                return err(format!("$fopen initializer on wire '{n}'"));
            }
        }
        for p in self.inputs.iter().chain(&self.outputs) {
            if !self.decls.contains_key(p) {
                return err(format!("port '{p}' is not declared"));
            }
        }
        for a in &self.assigns {
            let w = self.lvalue_width(&a.lhs).map_err(Diagnostic::global)?;
            if w == 0 {
                return err("zero-width assignment".into());
            }
            if self.decls[a.lhs.base()].kind != VarKind::Wire {
                return err(format!(
                    "continuous assignment to register '{}'",
                    a.lhs.base()
                ));
            }
            if a.rhs.contains_call() {
                return err("system function in a continuous assignment".into());
            }
            self.expr_width(&a.rhs).map_err(Diagnostic::global)?;
        }
        for b in &self.blocks {
            if b.guards.is_empty() {
                return err("procedural block with an empty guard list".into());
            }
            for g in &b.guards {
                let d = self
                    .decls
                    .get(&g.var)
                    .ok_or_else(|| Diagnostic::global(format!("undeclared guard '{}'", g.var)))?;
                if d.depth.is_some() {
                    return err(format!("memory '{}' used as an event guard", g.var));
                }
            }
            self.check_stmt(&b.body)?;
        }
        Ok(())
    }

    fn check_stmt(&self, s: &Stmt) -> Result<(), Diagnostic> {
        let g = Diagnostic::global;
        match s {
            Stmt::Blocking(l, e) | Stmt::NonBlocking(l, e) => {
                self.lvalue_width(l).map_err(g)?;
                if lvalue_has_call(l) {
                    return Err(g("system function in an assignment target".into()));
                }
                if self.decls[l.base()].kind != VarKind::Reg {
                    return Err(g(format!(
                        "procedural assignment to wire '{}'",
                        l.base()
                    )));
                }
                self.expr_width(e).map_err(g)?;
            }
            Stmt::If(c, t, e) => {
                self.expr_width(c).map_err(g)?;
                self.check_stmt(t)?;
                if let Some(e) = e {
                    self.check_stmt(e)?;
                }
            }
            Stmt::Case(subj, items, d) => {
                self.expr_width(subj).map_err(g)?;
                for i in items {
                    for l in &i.labels {
                        self.expr_width(l).map_err(g)?;
                    }
                    self.check_stmt(&i.body)?;
                }
                if let Some(d) = d {
                    self.check_stmt(d)?;
                }
            }
            Stmt::Begin(ss) | Stmt::Fork(ss) => {
                for s in ss {
                    self.check_stmt(s)?;
                }
            }
            Stmt::Task(kind, args) => {
                let skip_first_str = matches!(
                    kind,
                    TaskKind::Display | TaskKind::Fopen | TaskKind::Save | TaskKind::Restart
                );
                for (i, a) in args.iter().enumerate() {
                    if i == 0 && skip_first_str && matches!(a, Expr::Str(_)) {
                        continue;
                    }
                    self.expr_width(a).map_err(g)?;
                }
                if kind.has_output() {
                    let l = args.last().and_then(expr_to_lvalue).ok_or_else(|| {
                        g(format!("{} needs an output variable", kind.name()))
                    })?;
                    if self.decls[l.base()].kind != VarKind::Reg {
                        return Err(g(format!("{} output must be a register", kind.name())));
                    }
                    if lvalue_has_call(&l) {
                        return Err(g("system function in an assignment target".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of statements after elaboration; the device cost heuristic.
    pub fn statement_count(&self) -> usize {
        self.assigns.len() + self.blocks.iter().map(|b| b.body.leaf_count()).sum::<usize>()
    }

    /// Renders the program as a single flat module.
    pub fn to_module(&self, name: &str) -> ModuleDecl {
        let range = |w: u32| {
            (w > 1).then(|| Range {
                msb: Expr::uint((w - 1) as u64),
                lsb: Expr::uint(0),
            })
        };
        let mut ports = Vec::new();
        for (dir, list) in [
            (crate::frontend::ast::Direction::Input, &self.inputs),
            (crate::frontend::ast::Direction::Output, &self.outputs),
        ] {
            for p in list {
                let d = &self.decls[p];
                ports.push(Port {
                    dir,
                    kind: match d.kind {
                        VarKind::Reg => NetKind::Reg,
                        VarKind::Wire => NetKind::Wire,
                    },
                    range: range(d.width),
                    name: p.clone(),
                });
            }
        }
        let mut items = Vec::new();
        for (n, d) in &self.decls {
            if self.inputs.contains(n) || self.outputs.contains(n) {
                continue;
            }
            items.push(Item::Decl(crate::frontend::ast::Decl {
                kind: match d.kind {
                    VarKind::Reg => NetKind::Reg,
                    VarKind::Wire => NetKind::Wire,
                },
                range: range(d.width),
                name: n.clone(),
                array: d.depth.map(|depth| Range {
                    msb: Expr::uint(0),
                    lsb: Expr::uint((depth - 1) as u64),
                }),
                init: match &d.init {
                    Init::Value(0) => None,
                    Init::Value(v) => Some(Expr::num(d.width, *v)),
                    Init::Fopen(p) => Some(Expr::Call(
                        crate::frontend::ast::SysFunc::Fopen,
                        vec![Expr::Str(p.clone())],
                    )),
                },
                non_volatile: d.non_volatile,
            }));
        }
        for a in &self.assigns {
            items.push(Item::Assign {
                lhs: a.lhs.clone(),
                rhs: a.rhs.clone(),
            });
        }
        for b in &self.blocks {
            items.push(Item::Always {
                guards: b.guards.clone(),
                body: b.body.clone(),
            });
        }
        ModuleDecl {
            name: name.to_string(),
            ports,
            items,
        }
    }

    pub fn to_text(&self, name: &str) -> String {
        let mut s = String::new();
        printer::print_module(&mut s, &self.to_module(name));
        s
    }
}

fn lvalue_has_call(l: &LValue) -> bool {
    matches!(l, LValue::Index(_, i) if i.contains_call())
}

/// Evaluates a declaration initializer that must be constant.
pub(crate) fn const_init(e: &Expr, width: u32) -> Option<u64> {
    const_value(e).map(|v| v.resize(width).bits())
}
