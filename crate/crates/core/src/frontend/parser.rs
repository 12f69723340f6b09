use std::collections::HashMap;

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::{Diagnostic, Pos};
use crate::ops;
use crate::value::Value;

/// Parses a source text into a [`SourceUnit`].
pub fn parse(text: &str) -> Result<SourceUnit, Diagnostic> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        i: 0,
        params: HashMap::new(),
    };
    let mut modules = Vec::new();
    while !p.at_eof() {
        let pos = p.pos();
        let m = p.module()?;
        if modules.iter().any(|o: &ModuleDecl| o.name == m.name) {
            return Err(Diagnostic::error(
                pos,
                format!("duplicate module '{}'", m.name),
            ));
        }
        modules.push(m);
    }
    Ok(SourceUnit { modules })
}

const KEYWORDS: &[&str] = &[
    "module",
    "endmodule",
    "input",
    "output",
    "inout",
    "wire",
    "reg",
    "integer",
    "assign",
    "always",
    "initial",
    "begin",
    "end",
    "fork",
    "join",
    "if",
    "else",
    "case",
    "casex",
    "casez",
    "endcase",
    "default",
    "posedge",
    "negedge",
    "or",
    "localparam",
    "parameter",
    "generate",
    "function",
    "task",
    "for",
    "while",
    "repeat",
    "forever",
    "non_volatile",
];

struct Parser {
    toks: Vec<Token>,
    i: usize,
    params: HashMap<String, Value>,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn tok(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn tok_at(&self, k: usize) -> &Tok {
        let j = (self.i + k).min(self.toks.len() - 1);
        &self.toks[j].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn at_eof(&self) -> bool {
        matches!(self.tok(), Tok::Eof)
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.i].tok.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::System(s) => format!("'{s}'"),
            Tok::Number { value, .. } => format!("number {value}"),
            Tok::Str(_) => "string literal".into(),
            Tok::Punct(p) => format!("'{p}'"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn unexpected(&self, what: &str) -> Diagnostic {
        Diagnostic::error(
            self.pos(),
            format!("expected {what}, found {}", Self::describe(self.tok())),
        )
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.tok(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.tok(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{p}'")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{kw}'")))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.tok() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn unsupported(&self, what: &str) -> Diagnostic {
        Diagnostic::unsupported(self.pos(), what)
    }

    fn module(&mut self) -> PResult<ModuleDecl> {
        self.expect_kw("module")?;
        let name = self.ident()?;
        self.params.clear();
        if self.is_punct("#") {
            return Err(self.unsupported("module parameter lists"));
        }
        let mut ports = Vec::new();
        if self.eat_punct("(") {
            if !self.is_punct(")") {
                let mut last: Option<(Direction, NetKind, Option<Range>)> = None;
                loop {
                    let pos = self.pos();
                    let dir = if self.eat_kw("input") {
                        Some(Direction::Input)
                    } else if self.eat_kw("output") {
                        Some(Direction::Output)
                    } else if self.is_kw("inout") {
                        return Err(self.unsupported("inout ports"));
                    } else {
                        None
                    };
                    let (dir, kind, range) = match dir {
                        Some(dir) => {
                            let kind = if self.eat_kw("reg") {
                                NetKind::Reg
                            } else {
                                self.eat_kw("wire");
                                NetKind::Wire
                            };
                            let range = self.opt_range()?;
                            (dir, kind, range)
                        }
                        None => match &last {
                            Some(l) => l.clone(),
                            None => {
                                return Err(Diagnostic::unsupported(
                                    pos,
                                    "non-ANSI port declarations",
                                ))
                            }
                        },
                    };
                    if dir == Direction::Input && kind == NetKind::Reg {
                        return Err(Diagnostic::error(pos, "input ports cannot be declared reg"));
                    }
                    let pname = self.ident()?;
                    ports.push(Port {
                        dir,
                        kind,
                        range: range.clone(),
                        name: pname,
                    });
                    last = Some((dir, kind, range));
                    if !self.eat_punct(",") {
                        break;
                    }
                }
            }
            self.expect_punct(")")?;
        }
        self.expect_punct(";")?;
        let mut items = Vec::new();
        while !self.is_kw("endmodule") {
            if self.at_eof() {
                return Err(self.unexpected("'endmodule'"));
            }
            self.item(&mut items)?;
        }
        self.expect_kw("endmodule")?;
        Ok(ModuleDecl { name, ports, items })
    }

    fn opt_range(&mut self) -> PResult<Option<Range>> {
        if !self.is_punct("[") {
            return Ok(None);
        }
        self.advance();
        let msb = self.const_u32()?;
        self.expect_punct(":")?;
        let lsb = self.const_u32()?;
        self.expect_punct("]")?;
        Ok(Some(Range {
            msb: Expr::uint(msb as u64),
            lsb: Expr::uint(lsb as u64),
        }))
    }

    fn const_u32(&mut self) -> PResult<u32> {
        let pos = self.pos();
        let e = self.expr()?;
        const_value(&e)
            .map(|v| v.bits() as u32)
            .ok_or_else(|| Diagnostic::error(pos, "expected a constant expression"))
    }

    fn item(&mut self, items: &mut Vec<Item>) -> PResult<()> {
        let pos = self.pos();
        let mut non_volatile = false;
        if self.is_punct("(") && matches!(self.tok_at(1), Tok::Punct("*")) {
            self.advance();
            self.advance();
            let attr = self.ident_any()?;
            if attr != "non_volatile" {
                return Err(Diagnostic::unsupported(pos, &format!("attribute '{attr}'")));
            }
            self.expect_punct("*")?;
            self.expect_punct(")")?;
            non_volatile = true;
        }
        if self.eat_kw("non_volatile") {
            non_volatile = true;
        }
        let Tok::Ident(kw) = self.tok().clone() else {
            return Err(self.unexpected("module item"));
        };
        if non_volatile && kw != "reg" && kw != "integer" && kw != "wire" {
            return Err(Diagnostic::error(
                pos,
                "non_volatile annotation must precede a declaration",
            ));
        }
        match kw.as_str() {
            "reg" | "wire" | "integer" => {
                self.advance();
                let (kind, range) = if kw == "integer" {
                    (
                        NetKind::Reg,
                        Some(Range {
                            msb: Expr::uint(31),
                            lsb: Expr::uint(0),
                        }),
                    )
                } else {
                    let kind = if kw == "reg" {
                        NetKind::Reg
                    } else {
                        NetKind::Wire
                    };
                    (kind, self.opt_range()?)
                };
                loop {
                    let name = self.ident()?;
                    let array = if self.is_punct("[") {
                        let apos = self.pos();
                        let r = self.opt_range()?.unwrap();
                        if kind != NetKind::Reg {
                            return Err(Diagnostic::unsupported(apos, "wire arrays"));
                        }
                        if r.msb != Expr::uint(0) {
                            return Err(Diagnostic::unsupported(
                                apos,
                                "memory ranges not of the form [0:D-1]",
                            ));
                        }
                        Some(r)
                    } else {
                        None
                    };
                    let init = if self.eat_punct("=") {
                        if array.is_some() {
                            return Err(self.unsupported("memory initializers"));
                        }
                        Some(self.expr()?)
                    } else {
                        None
                    };
                    items.push(Item::Decl(Decl {
                        kind,
                        range: range.clone(),
                        name,
                        array,
                        init,
                        non_volatile,
                    }));
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(";")
            }
            "localparam" | "parameter" => {
                self.advance();
                let range = self.opt_range()?;
                loop {
                    let name = self.ident()?;
                    self.expect_punct("=")?;
                    let vpos = self.pos();
                    let e = self.expr()?;
                    let mut v = const_value(&e).ok_or_else(|| {
                        Diagnostic::error(vpos, "parameter value must be constant")
                    })?;
                    let mut value = e;
                    if let Some(r) = &range {
                        let w = range_width(r);
                        v = v.resize(w);
                        value = Expr::num(w, v.bits());
                    }
                    self.params.insert(name.clone(), v);
                    items.push(Item::LocalParam { name, value });
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(";")
            }
            "assign" => {
                self.advance();
                loop {
                    let lhs = self.lvalue()?;
                    self.expect_punct("=")?;
                    let rhs = self.expr()?;
                    items.push(Item::Assign { lhs, rhs });
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(";")
            }
            "always" => {
                self.advance();
                if !self.eat_punct("@") {
                    return Err(self.unsupported("always blocks without an event control"));
                }
                if self.is_punct("*") {
                    return Err(self.unsupported("implicit sensitivity lists (@*)"));
                }
                self.expect_punct("(")?;
                if self.is_punct("*") {
                    return Err(self.unsupported("implicit sensitivity lists (@*)"));
                }
                let mut guards = Vec::new();
                loop {
                    let edge = if self.eat_kw("posedge") {
                        Edge::Pos
                    } else if self.eat_kw("negedge") {
                        Edge::Neg
                    } else {
                        Edge::Any
                    };
                    let var = self.ident()?;
                    guards.push(EventGuard { edge, var });
                    if !(self.eat_kw("or") || self.eat_punct(",")) {
                        break;
                    }
                }
                self.expect_punct(")")?;
                let body = self.stmt()?;
                items.push(Item::Always { guards, body });
                Ok(())
            }
            "initial" => Err(self.unsupported("initial blocks")),
            "input" | "output" | "inout" => Err(self.unsupported("non-ANSI port declarations")),
            "generate" => Err(self.unsupported("generate blocks")),
            "function" | "task" => Err(self.unsupported("user functions and tasks")),
            _ if KEYWORDS.contains(&kw.as_str()) => Err(self.unexpected("module item")),
            _ => {
                let module = self.ident()?;
                if self.is_punct("#") {
                    return Err(self.unsupported("parameterized instantiation"));
                }
                let name = self.ident()?;
                self.expect_punct("(")?;
                let conns = if self.is_punct(".") {
                    let mut named = Vec::new();
                    loop {
                        self.expect_punct(".")?;
                        let port = self.ident()?;
                        self.expect_punct("(")?;
                        let e = if self.is_punct(")") {
                            None
                        } else {
                            Some(self.expr()?)
                        };
                        self.expect_punct(")")?;
                        named.push((port, e));
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                    Connections::Named(named)
                } else {
                    let mut pos_conns = Vec::new();
                    if !self.is_punct(")") {
                        loop {
                            if self.is_punct(",") || self.is_punct(")") {
                                pos_conns.push(None);
                            } else {
                                pos_conns.push(Some(self.expr()?));
                            }
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                    }
                    Connections::Positional(pos_conns)
                };
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                items.push(Item::Instance {
                    module,
                    name,
                    conns,
                });
                Ok(())
            }
        }
    }

    fn ident_any(&mut self) -> PResult<String> {
        match self.tok() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn lvalue(&mut self) -> PResult<LValue> {
        let pos = self.pos();
        let name = self.ident()?;
        if self.params.contains_key(&name) {
            return Err(Diagnostic::error(
                pos,
                format!("cannot assign to parameter '{name}'"),
            ));
        }
        if self.is_punct(".") {
            return Err(self.unsupported("hierarchical references"));
        }
        if !self.eat_punct("[") {
            return Ok(LValue::Var(name));
        }
        let idx = self.expr()?;
        if self.eat_punct(":") {
            let lpos = self.pos();
            let lsb = self.expr()?;
            self.expect_punct("]")?;
            let (Some(m), Some(l)) = (const_value(&idx), const_value(&lsb)) else {
                return Err(Diagnostic::error(lpos, "part-select bounds must be constant"));
            };
            let (m, l) = (m.bits() as u32, l.bits() as u32);
            if m < l {
                return Err(Diagnostic::error(lpos, "part-select msb below lsb"));
            }
            return Ok(LValue::Slice(name, m, l));
        }
        self.expect_punct("]")?;
        Ok(LValue::Index(name, idx))
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        match self.tok().clone() {
            Tok::Punct(";") => {
                self.advance();
                Ok(Stmt::Begin(vec![]))
            }
            Tok::Punct("#") => Err(self.unsupported("delay controls")),
            Tok::Punct("@") => Err(self.unsupported("event controls inside statements")),
            Tok::System(name) => {
                self.advance();
                let mut args = Vec::new();
                if self.eat_punct("(") {
                    if !self.is_punct(")") {
                        loop {
                            args.push(self.expr()?);
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                    }
                    self.expect_punct(")")?;
                }
                self.expect_punct(";")?;
                let Some(kind) = TaskKind::from_name(&name) else {
                    return Err(Diagnostic::unsupported(pos, &format!("system task {name}")));
                };
                check_task_args(kind, &args, pos)?;
                Ok(Stmt::Task(kind, args))
            }
            Tok::Ident(kw) => match kw.as_str() {
                "begin" => {
                    self.advance();
                    if self.eat_punct(":") {
                        self.ident()?;
                    }
                    let mut body = Vec::new();
                    while !self.is_kw("end") {
                        if self.at_eof() || self.is_kw("endmodule") {
                            return Err(self.unexpected("'end'"));
                        }
                        body.push(self.stmt()?);
                    }
                    self.advance();
                    Ok(Stmt::Begin(body))
                }
                "fork" => {
                    self.advance();
                    let mut body = Vec::new();
                    while !self.is_kw("join") {
                        if self.at_eof() || self.is_kw("endmodule") {
                            return Err(self.unexpected("'join'"));
                        }
                        body.push(self.stmt()?);
                    }
                    self.advance();
                    Ok(Stmt::Fork(body))
                }
                "if" => {
                    self.advance();
                    self.expect_punct("(")?;
                    let c = self.expr()?;
                    self.expect_punct(")")?;
                    let t = self.stmt()?;
                    let e = if self.eat_kw("else") {
                        Some(Box::new(self.stmt()?))
                    } else {
                        None
                    };
                    Ok(Stmt::If(c, Box::new(t), e))
                }
                "case" => {
                    self.advance();
                    self.expect_punct("(")?;
                    let subject = self.expr()?;
                    self.expect_punct(")")?;
                    let mut items = Vec::new();
                    let mut default = None;
                    while !self.is_kw("endcase") {
                        if self.at_eof() || self.is_kw("endmodule") {
                            return Err(self.unexpected("'endcase'"));
                        }
                        if self.eat_kw("default") {
                            self.eat_punct(":");
                            if default.is_some() {
                                return Err(Diagnostic::error(pos, "duplicate default arm"));
                            }
                            default = Some(Box::new(self.stmt()?));
                            continue;
                        }
                        let mut labels = Vec::new();
                        loop {
                            labels.push(self.expr()?);
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                        self.expect_punct(":")?;
                        let body = self.stmt()?;
                        items.push(CaseItem { labels, body });
                    }
                    self.advance();
                    Ok(Stmt::Case(subject, items, default))
                }
                "casex" | "casez" => Err(self.unsupported(&format!("{kw} statements"))),
                "for" | "while" | "repeat" | "forever" => {
                    Err(self.unsupported(&format!("{kw} loops")))
                }
                "assign" => Err(self.unsupported("procedural continuous assignment")),
                _ => {
                    let lhs = self.lvalue()?;
                    let nb = if self.eat_punct("<=") {
                        true
                    } else if self.eat_punct("=") {
                        false
                    } else {
                        return Err(self.unexpected("'=' or '<='"));
                    };
                    if self.is_punct("#") || self.is_punct("@") {
                        return Err(self.unsupported("intra-assignment timing controls"));
                    }
                    let rhs = self.expr()?;
                    self.expect_punct(";")?;
                    Ok(if nb {
                        Stmt::NonBlocking(lhs, rhs)
                    } else {
                        Stmt::Blocking(lhs, rhs)
                    })
                }
            },
            _ => Err(self.unexpected("statement")),
        }
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        let c = self.binary_expr(0)?;
        if self.eat_punct("?") {
            let a = self.expr()?;
            self.expect_punct(":")?;
            let b = self.expr()?;
            return Ok(Expr::Ternary(Box::new(c), Box::new(a), Box::new(b)));
        }
        Ok(c)
    }

    fn peek_binop(&self) -> Option<BinaryOp> {
        use BinaryOp::*;
        let Tok::Punct(p) = self.tok() else {
            return None;
        };
        Some(match *p {
            "+" => Add,
            "-" => Sub,
            "*" => Mul,
            "&" => And,
            "|" => Or,
            "^" => Xor,
            "==" => Eq,
            "!=" => Ne,
            "<" => Lt,
            "<=" => Le,
            ">" => Gt,
            ">=" => Ge,
            "<<" => Shl,
            ">>" => Shr,
            "&&" => LogicAnd,
            "||" => LogicOr,
            _ => return None,
        })
    }

    fn binary_expr(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary_expr()?;
        loop {
            if matches!(self.tok(), Tok::Punct("/" | "%")) {
                return Err(self.unsupported("division and modulus"));
            }
            let Some(op) = self.peek_binop() else { break };
            let prec = op.precedence();
            if prec <= min_prec {
                break;
            }
            self.advance();
            let rhs = self.binary_expr(prec)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        let op = match self.tok() {
            Tok::Punct("~") => Some(UnaryOp::Not),
            Tok::Punct("!") => Some(UnaryOp::LogicNot),
            Tok::Punct("-") => Some(UnaryOp::Neg),
            Tok::Punct("&") => Some(UnaryOp::ReduceAnd),
            Tok::Punct("|") => Some(UnaryOp::ReduceOr),
            Tok::Punct("^") => Some(UnaryOp::ReduceXor),
            Tok::Punct("+") => {
                self.advance();
                return self.unary_expr();
            }
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            let a = self.unary_expr()?;
            return Ok(Expr::unary(op, a));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        match self.tok().clone() {
            Tok::Number { width, value } => {
                self.advance();
                Ok(Expr::Num { width, value })
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::Str(s))
            }
            Tok::Punct("(") => {
                self.advance();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Punct("{") => {
                self.advance();
                let first = self.expr()?;
                if self.is_punct("{") {
                    let n = const_value(&first)
                        .ok_or_else(|| Diagnostic::error(pos, "replication count must be constant"))?
                        .bits();
                    self.advance();
                    let mut inner = Vec::new();
                    loop {
                        inner.push(self.expr()?);
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                    self.expect_punct("}")?;
                    self.expect_punct("}")?;
                    if n == 0 || n > 64 {
                        return Err(Diagnostic::error(pos, "bad replication count"));
                    }
                    let mut parts = Vec::new();
                    for _ in 0..n {
                        parts.extend(inner.iter().cloned());
                    }
                    return Ok(Expr::Concat(parts));
                }
                let mut parts = vec![first];
                while self.eat_punct(",") {
                    parts.push(self.expr()?);
                }
                self.expect_punct("}")?;
                Ok(Expr::Concat(parts))
            }
            Tok::System(name) => {
                self.advance();
                let f = match name.as_str() {
                    "$feof" => SysFunc::Feof,
                    "$fopen" => SysFunc::Fopen,
                    _ => {
                        return Err(Diagnostic::unsupported(
                            pos,
                            &format!("system function {name} in expressions"),
                        ))
                    }
                };
                self.expect_punct("(")?;
                let mut args = Vec::new();
                if !self.is_punct(")") {
                    loop {
                        args.push(self.expr()?);
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                }
                self.expect_punct(")")?;
                let ok = match f {
                    SysFunc::Feof => args.len() == 1,
                    SysFunc::Fopen => args.len() == 1 && matches!(args[0], Expr::Str(_)),
                };
                if !ok {
                    return Err(Diagnostic::error(pos, format!("bad arguments to {name}")));
                }
                Ok(Expr::Call(f, args))
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if let Some(v) = self.params.get(&name) {
                    return Ok(Expr::num(v.width(), v.bits()));
                }
                if self.is_punct(".") {
                    return Err(self.unsupported("hierarchical references"));
                }
                if self.is_punct("(") {
                    return Err(self.unsupported("user function calls"));
                }
                if !self.eat_punct("[") {
                    return Ok(Expr::Ident(name));
                }
                let idx = self.expr()?;
                if self.eat_punct(":") {
                    let lsb = self.expr()?;
                    self.expect_punct("]")?;
                    let (Some(m), Some(l)) = (const_value(&idx), const_value(&lsb)) else {
                        return Err(Diagnostic::error(pos, "part-select bounds must be constant"));
                    };
                    let (m, l) = (m.bits() as u32, l.bits() as u32);
                    if m < l {
                        return Err(Diagnostic::error(pos, "part-select msb below lsb"));
                    }
                    return Ok(Expr::Slice(name, m, l));
                }
                self.expect_punct("]")?;
                if self.is_punct("[") {
                    return Err(self.unsupported("multi-dimensional selects"));
                }
                Ok(Expr::Index(name, Box::new(idx)))
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

fn check_task_args(kind: TaskKind, args: &[Expr], pos: Pos) -> PResult<()> {
    let is_lv = |e: &Expr| expr_to_lvalue(e).is_some();
    let ok = match kind {
        TaskKind::Display => args.iter().skip(1).all(|a| !matches!(a, Expr::Str(_))),
        TaskKind::Fread32 | TaskKind::Feof => args.len() == 2 && is_lv(&args[1]),
        TaskKind::Fopen => args.len() == 2 && matches!(args[0], Expr::Str(_)) && is_lv(&args[1]),
        TaskKind::Finish => args.len() <= 1,
        TaskKind::Save | TaskKind::Restart => args.len() == 1 && matches!(args[0], Expr::Str(_)),
        TaskKind::Yield => args.is_empty(),
    };
    if ok {
        Ok(())
    } else {
        Err(Diagnostic::error(
            pos,
            format!("bad arguments to {}", kind.name()),
        ))
    }
}

pub fn range_width(r: &Range) -> u32 {
    let m = const_value(&r.msb).map_or(0, |v| v.bits() as u32);
    let l = const_value(&r.lsb).map_or(0, |v| v.bits() as u32);
    m.abs_diff(l) + 1
}

/// Folds an expression built only from literals.
pub fn const_value(e: &Expr) -> Option<Value> {
    Some(match e {
        Expr::Num { width, value } => Value::new(width.unwrap_or(32), *value),
        Expr::Unary(op, a) => ops::unary(*op, const_value(a)?),
        Expr::Binary(op, a, b) => ops::binary(*op, const_value(a)?, const_value(b)?),
        Expr::Ternary(c, a, b) => {
            let (a, b) = (const_value(a)?, const_value(b)?);
            let w = a.width().max(b.width());
            if const_value(c)?.is_true() {
                a.resize(w)
            } else {
                b.resize(w)
            }
        }
        Expr::Concat(parts) => {
            ops::concat(parts.iter().map(const_value).collect::<Option<Vec<_>>>()?)?
        }
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_module() {
        let su = parse("module t(); endmodule").unwrap();
        assert_eq!(su.modules.len(), 1);
        assert!(su.modules[0].items.is_empty());
        assert!(su.modules[0].ports.is_empty());
    }

    #[test]
    fn missing_end_reports_endmodule_position() {
        let src = "module t(); always @(posedge c) begin endmodule";
        let e = parse(src).unwrap_err();
        let col = src.find("endmodule").unwrap() as u32 + 1;
        assert_eq!(e.pos, Some(Pos { line: 1, col }));
        assert!(e.message.contains("expected 'end'"), "{}", e.message);
    }

    #[test]
    fn precedence() {
        let su = parse("module t(); wire [7:0] a; assign a = 1 + 2 * 3 == 7 & 1; endmodule").unwrap();
        let Item::Assign { rhs, .. } = &su.modules[0].items[1] else {
            panic!()
        };
        assert_eq!(const_value(rhs).map(|v| v.bits()), Some(1));
        assert!(matches!(rhs, Expr::Binary(BinaryOp::And, ..)));
    }

    #[test]
    fn left_associative_subtraction() {
        let su = parse("module t(); wire [7:0] a; assign a = 9 - 3 - 2; endmodule").unwrap();
        let Item::Assign { rhs, .. } = &su.modules[0].items[1] else {
            panic!()
        };
        assert_eq!(const_value(rhs).unwrap().bits(), 4);
    }

    #[test]
    fn localparams_fold_into_ranges_and_expressions() {
        let su = parse(
            "module t(); localparam W = 8; reg [W-1:0] r; wire [W*2-1:0] w = r + W; endmodule",
        )
        .unwrap();
        let Item::Decl(d) = &su.modules[0].items[1] else {
            panic!()
        };
        assert_eq!(range_width(d.range.as_ref().unwrap()), 8);
        let Item::Decl(w) = &su.modules[0].items[2] else {
            panic!()
        };
        assert_eq!(range_width(w.range.as_ref().unwrap()), 16);
    }

    #[test]
    fn unsupported_constructs_are_diagnosed() {
        for src in [
            "module t(); initial begin end endmodule",
            "module t(); always @* begin end endmodule",
            "module t(); reg a; always @(posedge a) #1 a = 0; endmodule",
            "module t(); reg a; always @(posedge a) $monitor(a); endmodule",
            "module t(); generate endgenerate endmodule",
            "module t(); reg [3:0] a; always @(a) for (a = 0; a < 3; a = a + 1) ; endmodule",
            "module t(); wire a; assign a = 6 / 2; endmodule",
        ] {
            let e = parse(src).unwrap_err();
            assert!(e.message.starts_with("unsupported feature"), "{src}: {}", e.message);
        }
    }

    #[test]
    fn attributes_and_memories() {
        let su = parse(
            "module t(); (* non_volatile *) reg [31:0] a; non_volatile reg b; reg [7:0] m [0:15]; endmodule",
        )
        .unwrap();
        let decls: Vec<_> = su.modules[0]
            .items
            .iter()
            .map(|i| match i {
                Item::Decl(d) => d.clone(),
                _ => panic!(),
            })
            .collect();
        assert!(decls[0].non_volatile && decls[1].non_volatile && !decls[2].non_volatile);
        assert_eq!(range_width(decls[2].array.as_ref().unwrap()), 16);
    }
}
