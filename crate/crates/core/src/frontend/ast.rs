//! Syntax tree for the supported Verilog subset.
//!
//! The same expression and statement types are used before and after
//! elaboration; after elaboration identifiers hold dot-separated
//! hierarchical names.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub modules: Vec<ModuleDecl>,
}

impl SourceUnit {
    pub fn module(&self, name: &str) -> Option<&ModuleDecl> {
        self.modules.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleDecl {
    pub name: String,
    pub ports: Vec<Port>,
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Input,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetKind {
    Wire,
    Reg,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Range {
    pub msb: Expr,
    pub lsb: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Port {
    pub dir: Direction,
    pub kind: NetKind,
    pub range: Option<Range>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decl {
    pub kind: NetKind,
    pub range: Option<Range>,
    pub name: String,
    /// `[lo:hi]` unpacked dimension of a memory.
    pub array: Option<Range>,
    pub init: Option<Expr>,
    pub non_volatile: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Decl(Decl),
    LocalParam { name: String, value: Expr },
    Assign { lhs: LValue, rhs: Expr },
    Always { guards: Vec<EventGuard>, body: Stmt },
    Instance {
        module: String,
        name: String,
        conns: Connections,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Connections {
    Positional(Vec<Option<Expr>>),
    Named(Vec<(String, Option<Expr>)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Edge {
    Pos,
    Neg,
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventGuard {
    pub edge: Edge,
    pub var: String,
}

impl EventGuard {
    pub fn new(edge: Edge, var: impl Into<String>) -> Self {
        EventGuard {
            edge,
            var: var.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Not,
    LogicNot,
    Neg,
    ReduceAnd,
    ReduceOr,
    ReduceXor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Shl,
    Shr,
    LogicAnd,
    LogicOr,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        use BinaryOp::*;
        match self {
            Add => "+",
            Sub => "-",
            Mul => "*",
            And => "&",
            Or => "|",
            Xor => "^",
            Eq => "==",
            Ne => "!=",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            Shl => "<<",
            Shr => ">>",
            LogicAnd => "&&",
            LogicOr => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        use BinaryOp::*;
        match self {
            Mul => 10,
            Add | Sub => 9,
            Shl | Shr => 8,
            Lt | Le | Gt | Ge => 7,
            Eq | Ne => 6,
            And => 5,
            Xor => 4,
            Or => 3,
            LogicAnd => 2,
            LogicOr => 1,
        }
    }

    pub fn is_compare(self) -> bool {
        use BinaryOp::*;
        matches!(self, Eq | Ne | Lt | Le | Gt | Ge | LogicAnd | LogicOr)
    }
}

/// System functions usable inside expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SysFunc {
    Fopen,
    Feof,
}

impl SysFunc {
    pub fn name(self) -> &'static str {
        match self {
            SysFunc::Fopen => "$fopen",
            SysFunc::Feof => "$feof",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    /// Literal; `width` is `None` for unsized literals (treated as 32 bits).
    Num { width: Option<u32>, value: u64 },
    Str(String),
    Ident(String),
    /// Bit select of a vector or element select of a memory.
    Index(String, Box<Expr>),
    /// Constant part select `name[msb:lsb]`.
    Slice(String, u32, u32),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
    Concat(Vec<Expr>),
    Call(SysFunc, Vec<Expr>),
}

impl Expr {
    pub fn ident(name: impl Into<String>) -> Expr {
        Expr::Ident(name.into())
    }

    pub fn num(width: u32, value: u64) -> Expr {
        Expr::Num {
            width: Some(width),
            value,
        }
    }

    pub fn uint(value: u64) -> Expr {
        Expr::Num { width: None, value }
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        Expr::Unary(op, Box::new(a))
    }

    /// Calls `f` on every identifier that is read by this expression.
    pub fn for_each_ident(&self, f: &mut impl FnMut(&str)) {
        match self {
            Expr::Num { .. } | Expr::Str(_) => {}
            Expr::Ident(n) | Expr::Slice(n, ..) => f(n),
            Expr::Index(n, i) => {
                f(n);
                i.for_each_ident(f);
            }
            Expr::Unary(_, a) => a.for_each_ident(f),
            Expr::Binary(_, a, b) => {
                a.for_each_ident(f);
                b.for_each_ident(f);
            }
            Expr::Ternary(c, a, b) => {
                c.for_each_ident(f);
                a.for_each_ident(f);
                b.for_each_ident(f);
            }
            Expr::Concat(es) | Expr::Call(_, es) => es.iter().for_each(|e| e.for_each_ident(f)),
        }
    }

    pub fn contains_call(&self) -> bool {
        match self {
            Expr::Call(..) => true,
            Expr::Num { .. } | Expr::Str(_) | Expr::Ident(_) | Expr::Slice(..) => false,
            Expr::Index(_, i) => i.contains_call(),
            Expr::Unary(_, a) => a.contains_call(),
            Expr::Binary(_, a, b) => a.contains_call() || b.contains_call(),
            Expr::Ternary(c, a, b) => c.contains_call() || a.contains_call() || b.contains_call(),
            Expr::Concat(es) => es.iter().any(Expr::contains_call),
        }
    }

    /// Rewrites every identifier (including index/slice bases) through `f`.
    pub fn rename(&mut self, f: &mut impl FnMut(&str) -> String) {
        match self {
            Expr::Num { .. } | Expr::Str(_) => {}
            Expr::Ident(n) | Expr::Slice(n, ..) => *n = f(n),
            Expr::Index(n, i) => {
                *n = f(n);
                i.rename(f);
            }
            Expr::Unary(_, a) => a.rename(f),
            Expr::Binary(_, a, b) => {
                a.rename(f);
                b.rename(f);
            }
            Expr::Ternary(c, a, b) => {
                c.rename(f);
                a.rename(f);
                b.rename(f);
            }
            Expr::Concat(es) | Expr::Call(_, es) => es.iter_mut().for_each(|e| e.rename(f)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LValue {
    Var(String),
    Index(String, Expr),
    Slice(String, u32, u32),
}

impl LValue {
    pub fn base(&self) -> &str {
        match self {
            LValue::Var(n) | LValue::Index(n, _) | LValue::Slice(n, ..) => n,
        }
    }

    pub fn rename(&mut self, f: &mut impl FnMut(&str) -> String) {
        match self {
            LValue::Var(n) | LValue::Slice(n, ..) => *n = f(n),
            LValue::Index(n, i) => {
                *n = f(n);
                i.rename(f);
            }
        }
    }

    pub fn to_expr(&self) -> Expr {
        match self {
            LValue::Var(n) => Expr::Ident(n.clone()),
            LValue::Index(n, i) => Expr::Index(n.clone(), Box::new(i.clone())),
            LValue::Slice(n, m, l) => Expr::Slice(n.clone(), *m, *l),
        }
    }
}

/// Unsynthesizable system tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Display,
    /// `$fread32(fd, lvalue)`.
    Fread32,
    /// Statement form `$feof(fd, lvalue)`; produced by hoisting.
    Feof,
    /// Statement form `$fopen(path, lvalue)`; produced by hoisting.
    Fopen,
    Finish,
    Save,
    Restart,
    Yield,
}

impl TaskKind {
    pub const ALL: [TaskKind; 8] = [
        TaskKind::Display,
        TaskKind::Fread32,
        TaskKind::Feof,
        TaskKind::Fopen,
        TaskKind::Finish,
        TaskKind::Save,
        TaskKind::Restart,
        TaskKind::Yield,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Display => "$display",
            TaskKind::Fread32 => "$fread32",
            TaskKind::Feof => "$feof",
            TaskKind::Fopen => "$fopen",
            TaskKind::Finish => "$finish",
            TaskKind::Save => "$save",
            TaskKind::Restart => "$restart",
            TaskKind::Yield => "$yield",
        }
    }

    pub fn from_name(name: &str) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Tasks whose last argument is written back by the runtime.
    pub fn has_output(self) -> bool {
        matches!(self, TaskKind::Fread32 | TaskKind::Feof | TaskKind::Fopen)
    }

    /// Tasks that touch a file handle.
    pub fn is_io(self) -> bool {
        matches!(
            self,
            TaskKind::Fread32 | TaskKind::Feof | TaskKind::Fopen | TaskKind::Display
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CaseItem {
    pub labels: Vec<Expr>,
    pub body: Stmt,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Blocking(LValue, Expr),
    NonBlocking(LValue, Expr),
    If(Expr, Box<Stmt>, Option<Box<Stmt>>),
    Case(Expr, Vec<CaseItem>, Option<Box<Stmt>>),
    Begin(Vec<Stmt>),
    Fork(Vec<Stmt>),
    Task(TaskKind, Vec<Expr>),
}

impl Stmt {
    /// True when the statement (recursively) contains no system task and
    /// no system-function call.
    pub fn is_synthesizable(&self) -> bool {
        match self {
            Stmt::Blocking(l, e) | Stmt::NonBlocking(l, e) => {
                !e.contains_call() && !matches!(l, LValue::Index(_, i) if i.contains_call())
            }
            Stmt::If(c, t, e) => {
                !c.contains_call()
                    && t.is_synthesizable()
                    && e.as_ref().is_none_or(|e| e.is_synthesizable())
            }
            Stmt::Case(s, items, d) => {
                !s.contains_call()
                    && items.iter().all(|i| {
                        i.labels.iter().all(|l| !l.contains_call()) && i.body.is_synthesizable()
                    })
                    && d.as_ref().is_none_or(|d| d.is_synthesizable())
            }
            Stmt::Begin(ss) | Stmt::Fork(ss) => ss.iter().all(Stmt::is_synthesizable),
            Stmt::Task(..) => false,
        }
    }

    pub fn for_each_task(&self, f: &mut impl FnMut(TaskKind, &[Expr])) {
        match self {
            Stmt::Task(k, a) => f(*k, a),
            Stmt::Blocking(..) | Stmt::NonBlocking(..) => {}
            Stmt::If(_, t, e) => {
                t.for_each_task(f);
                if let Some(e) = e {
                    e.for_each_task(f);
                }
            }
            Stmt::Case(_, items, d) => {
                for i in items {
                    i.body.for_each_task(f);
                }
                if let Some(d) = d {
                    d.for_each_task(f);
                }
            }
            Stmt::Begin(ss) | Stmt::Fork(ss) => ss.iter().for_each(|s| s.for_each_task(f)),
        }
    }

    /// Every expression read by the statement, including conditions and
    /// lvalue indices.
    pub fn for_each_expr(&self, f: &mut impl FnMut(&Expr)) {
        let lv = |l: &LValue, f: &mut dyn FnMut(&Expr)| {
            if let LValue::Index(_, i) = l {
                f(i)
            }
        };
        match self {
            Stmt::Blocking(l, e) | Stmt::NonBlocking(l, e) => {
                lv(l, f);
                f(e);
            }
            Stmt::If(c, t, e) => {
                f(c);
                t.for_each_expr(f);
                if let Some(e) = e {
                    e.for_each_expr(f);
                }
            }
            Stmt::Case(s, items, d) => {
                f(s);
                for i in items {
                    i.labels.iter().for_each(&mut *f);
                    i.body.for_each_expr(f);
                }
                if let Some(d) = d {
                    d.for_each_expr(f);
                }
            }
            Stmt::Begin(ss) | Stmt::Fork(ss) => ss.iter().for_each(|s| s.for_each_expr(f)),
            Stmt::Task(_, args) => args.iter().for_each(f),
        }
    }

    /// Every lvalue assigned by the statement (task outputs included).
    pub fn for_each_lvalue(&self, f: &mut impl FnMut(&LValue)) {
        match self {
            Stmt::Blocking(l, _) | Stmt::NonBlocking(l, _) => f(l),
            Stmt::If(_, t, e) => {
                t.for_each_lvalue(f);
                if let Some(e) = e {
                    e.for_each_lvalue(f);
                }
            }
            Stmt::Case(_, items, d) => {
                for i in items {
                    i.body.for_each_lvalue(f);
                }
                if let Some(d) = d {
                    d.for_each_lvalue(f);
                }
            }
            Stmt::Begin(ss) | Stmt::Fork(ss) => ss.iter().for_each(|s| s.for_each_lvalue(f)),
            Stmt::Task(k, args) => {
                if k.has_output() {
                    if let Some(l) = args.last().and_then(expr_to_lvalue) {
                        f(&l)
                    }
                }
            }
        }
    }

    pub fn rename(&mut self, f: &mut impl FnMut(&str) -> String) {
        match self {
            Stmt::Blocking(l, e) | Stmt::NonBlocking(l, e) => {
                l.rename(f);
                e.rename(f);
            }
            Stmt::If(c, t, e) => {
                c.rename(f);
                t.rename(f);
                if let Some(e) = e {
                    e.rename(f);
                }
            }
            Stmt::Case(s, items, d) => {
                s.rename(f);
                for i in items {
                    i.labels.iter_mut().for_each(|l| l.rename(f));
                    i.body.rename(f);
                }
                if let Some(d) = d {
                    d.rename(f);
                }
            }
            Stmt::Begin(ss) | Stmt::Fork(ss) => ss.iter_mut().for_each(|s| s.rename(f)),
            Stmt::Task(_, args) => args.iter_mut().for_each(|a| a.rename(f)),
        }
    }

    /// Number of leaf statements (assignments and tasks).
    pub fn leaf_count(&self) -> usize {
        match self {
            Stmt::Blocking(..) | Stmt::NonBlocking(..) | Stmt::Task(..) => 1,
            Stmt::If(_, t, e) => 1 + t.leaf_count() + e.as_ref().map_or(0, |e| e.leaf_count()),
            Stmt::Case(_, items, d) => {
                1 + items.iter().map(|i| i.body.leaf_count()).sum::<usize>()
                    + d.as_ref().map_or(0, |d| d.leaf_count())
            }
            Stmt::Begin(ss) | Stmt::Fork(ss) => ss.iter().map(Stmt::leaf_count).sum(),
        }
    }
}

/// Interprets a task output argument as an lvalue.
pub fn expr_to_lvalue(e: &Expr) -> Option<LValue> {
    match e {
        Expr::Ident(n) => Some(LValue::Var(n.clone())),
        Expr::Index(n, i) => Some(LValue::Index(n.clone(), (**i).clone())),
        Expr::Slice(n, m, l) => Some(LValue::Slice(n.clone(), *m, *l)),
        _ => None,
    }
}
