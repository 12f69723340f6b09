//! Pretty-printer producing text the parser accepts.

use std::fmt::Write;

use super::ast::*;

pub fn print_unit(su: &SourceUnit) -> String {
    let mut out = String::new();
    for (i, m) in su.modules.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_module(&mut out, m);
    }
    out
}

/// Identifiers containing characters outside `[A-Za-z0-9_$]` are printed
/// as escaped identifiers.
pub fn ident(name: &str) -> String {
    let plain = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$');
    if plain {
        name.to_string()
    } else {
        format!("\\{name} ")
    }
}

fn range(r: &Option<Range>) -> String {
    match r {
        Some(r) => format!("[{}:{}] ", expr(&r.msb), expr(&r.lsb)),
        None => String::new(),
    }
}

pub fn print_module(out: &mut String, m: &ModuleDecl) {
    let ports: Vec<String> = m
        .ports
        .iter()
        .map(|p| {
            format!(
                "{} {} {}{}",
                match p.dir {
                    Direction::Input => "input",
                    Direction::Output => "output",
                },
                match p.kind {
                    NetKind::Wire => "wire",
                    NetKind::Reg => "reg",
                },
                range(&p.range),
                ident(&p.name)
            )
        })
        .collect();
    if ports.is_empty() {
        let _ = writeln!(out, "module {}();", ident(&m.name));
    } else {
        let _ = writeln!(out, "module {}(\n  {}\n);", ident(&m.name), ports.join(",\n  "));
    }
    for item in &m.items {
        print_item(out, item);
    }
    out.push_str("endmodule\n");
}

fn print_item(out: &mut String, item: &Item) {
    match item {
        Item::Decl(d) => {
            let nv = if d.non_volatile { "(* non_volatile *) " } else { "" };
            let kind = match d.kind {
                NetKind::Wire => "wire",
                NetKind::Reg => "reg",
            };
            let arr = match &d.array {
                Some(r) => format!(" [{}:{}]", expr(&r.msb), expr(&r.lsb)),
                None => String::new(),
            };
            let init = match &d.init {
                Some(e) => format!(" = {}", expr(e)),
                None => String::new(),
            };
            let _ = writeln!(
                out,
                "  {nv}{kind} {}{}{arr}{init};",
                range(&d.range),
                ident(&d.name)
            );
        }
        Item::LocalParam { name, value } => {
            let _ = writeln!(out, "  localparam {} = {};", ident(name), expr(value));
        }
        Item::Assign { lhs, rhs } => {
            let _ = writeln!(out, "  assign {} = {};", lvalue(lhs), expr(rhs));
        }
        Item::Always { guards, body } => {
            let _ = write!(out, "  always @({})", guard_list(guards));
            print_stmt(out, body, 1, true);
        }
        Item::Instance {
            module,
            name,
            conns,
        } => {
            let c = match conns {
                Connections::Positional(v) => v
                    .iter()
                    .map(|e| e.as_ref().map(expr).unwrap_or_default())
                    .collect::<Vec<_>>()
                    .join(", "),
                Connections::Named(v) => v
                    .iter()
                    .map(|(p, e)| {
                        format!(".{}({})", ident(p), e.as_ref().map(expr).unwrap_or_default())
                    })
                    .collect::<Vec<_>>()
                    .join(", "),
            };
            let _ = writeln!(out, "  {} {}({});", ident(module), ident(name), c);
        }
    }
}

pub fn guard_list(guards: &[EventGuard]) -> String {
    guards
        .iter()
        .map(|g| match g.edge {
            Edge::Pos => format!("posedge {}", ident(&g.var)),
            Edge::Neg => format!("negedge {}", ident(&g.var)),
            Edge::Any => ident(&g.var),
        })
        .collect::<Vec<_>>()
        .join(" or ")
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

/// Prints `s`. When `inline` is set the statement continues the current
/// line (after a header such as `always @(...)` or `if (...)`).
pub fn print_stmt(out: &mut String, s: &Stmt, level: usize, inline: bool) {
    if inline {
        out.push(' ');
    } else {
        indent(out, level);
    }
    match s {
        Stmt::Blocking(l, e) => {
            let _ = writeln!(out, "{} = {};", lvalue(l), expr(e));
        }
        Stmt::NonBlocking(l, e) => {
            let _ = writeln!(out, "{} <= {};", lvalue(l), expr(e));
        }
        Stmt::Task(k, args) => {
            if args.is_empty() {
                let _ = writeln!(out, "{};", k.name());
            } else {
                let a: Vec<_> = args.iter().map(expr).collect();
                let _ = writeln!(out, "{}({});", k.name(), a.join(", "));
            }
        }
        Stmt::Begin(ss) | Stmt::Fork(ss) => {
            let (open, close) = if matches!(s, Stmt::Begin(_)) {
                ("begin", "end")
            } else {
                ("fork", "join")
            };
            out.push_str(open);
            out.push('\n');
            for st in ss {
                print_stmt(out, st, level + 1, false);
            }
            indent(out, level);
            out.push_str(close);
            out.push('\n');
        }
        Stmt::If(c, t, e) => {
            let _ = write!(out, "if ({})", expr(c));
            // An else-less inner `if` would capture our `else` on reparse.
            if e.is_some() && matches!(**t, Stmt::If(_, _, None)) {
                let wrapped = Stmt::Begin(vec![(**t).clone()]);
                print_stmt(out, &wrapped, level, true);
            } else {
                print_stmt(out, t, level, true);
            }
            if let Some(e) = e {
                indent(out, level);
                out.push_str("else");
                print_stmt(out, e, level, true);
            }
        }
        Stmt::Case(subject, items, default) => {
            let _ = writeln!(out, "case ({})", expr(subject));
            for it in items {
                indent(out, level + 1);
                let labels: Vec<_> = it.labels.iter().map(expr).collect();
                let _ = write!(out, "{}:", labels.join(", "));
                print_stmt(out, &it.body, level + 1, true);
            }
            if let Some(d) = default {
                indent(out, level + 1);
                out.push_str("default:");
                print_stmt(out, d, level + 1, true);
            }
            indent(out, level);
            out.push_str("endcase\n");
        }
    }
}

pub fn lvalue(l: &LValue) -> String {
    match l {
        LValue::Var(n) => ident(n),
        LValue::Index(n, i) => format!("{}[{}]", ident(n), expr(i)),
        LValue::Slice(n, m, lsb) => format!("{}[{}:{}]", ident(n), m, lsb),
    }
}

fn escape(s: &str) -> String {
    let mut o = String::new();
    for c in s.chars() {
        match c {
            '\n' => o.push_str("\\n"),
            '\t' => o.push_str("\\t"),
            '\\' => o.push_str("\\\\"),
            '"' => o.push_str("\\\""),
            c => o.push(c),
        }
    }
    o
}

/// Fully parenthesized expression text.
pub fn expr(e: &Expr) -> String {
    match e {
        Expr::Num { width: None, value } => value.to_string(),
        Expr::Num {
            width: Some(w),
            value,
        } => format!("{w}'d{value}"),
        Expr::Str(s) => format!("\"{}\"", escape(s)),
        Expr::Ident(n) => ident(n),
        Expr::Index(n, i) => format!("{}[{}]", ident(n), expr(i)),
        Expr::Slice(n, m, l) => format!("{}[{}:{}]", ident(n), m, l),
        Expr::Unary(op, a) => {
            let o = match op {
                UnaryOp::Not => "~",
                UnaryOp::LogicNot => "!",
                UnaryOp::Neg => "-",
                UnaryOp::ReduceAnd => "&",
                UnaryOp::ReduceOr => "|",
                UnaryOp::ReduceXor => "^",
            };
            format!("{o}({})", expr(a))
        }
        Expr::Binary(op, a, b) => format!("({} {} {})", expr(a), op.symbol(), expr(b)),
        Expr::Ternary(c, a, b) => format!("({} ? {} : {})", expr(c), expr(a), expr(b)),
        Expr::Concat(parts) => {
            let p: Vec<_> = parts.iter().map(expr).collect();
            format!("{{{}}}", p.join(", "))
        }
        Expr::Call(f, args) => {
            let a: Vec<_> = args.iter().map(expr).collect();
            format!("{}({})", f.name(), a.join(", "))
        }
    }
}
