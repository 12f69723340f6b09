//! Instance-tree inlining.
//!
//! Every declaration of an inlined instance is renamed `path.name`; input
//! port connections become continuous assigns into the child's port wire
//! and output port connections become continuous assigns from it.

use std::cell::RefCell;
use std::collections::HashSet;

use indexmap::IndexMap;

use super::ast::*;
use super::{range_width, Diagnostic};
use crate::program::{const_init, ContAssign, Init, ProcBlock, Program, VarDecl, VarKind};

/// The unique module that no other module instantiates.
pub fn find_top(su: &SourceUnit) -> Result<String, Diagnostic> {
    let mut instantiated = HashSet::new();
    for m in &su.modules {
        for it in &m.items {
            if let Item::Instance { module, .. } = it {
                instantiated.insert(module.as_str());
            }
        }
    }
    let roots: Vec<_> = su
        .modules
        .iter()
        .filter(|m| !instantiated.contains(m.name.as_str()))
        .collect();
    match roots.as_slice() {
        [one] => Ok(one.name.clone()),
        [] => Err(Diagnostic::global(
            "no top module: every module is instantiated (recursive instantiation?)",
        )),
        many => Err(Diagnostic::global(format!(
            "ambiguous top module; candidates: {}",
            many.iter().map(|m| m.name.as_str()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

pub fn elaborate(su: &SourceUnit, top: &str) -> Result<Program, Diagnostic> {
    let m = su
        .module(top)
        .ok_or_else(|| Diagnostic::global(format!("unknown module '{top}'")))?;
    let mut e = Elab {
        su,
        prog: Program {
            decls: IndexMap::new(),
            ..Program::default()
        },
        stack: vec![],
    };
    e.inline(m, "")?;
    for p in &m.ports {
        match p.dir {
            Direction::Input => e.prog.inputs.push(p.name.clone()),
            Direction::Output => e.prog.outputs.push(p.name.clone()),
        }
    }
    e.prog.check()?;
    Ok(e.prog)
}

struct Elab<'a> {
    su: &'a SourceUnit,
    prog: Program,
    stack: Vec<String>,
}

fn width_of(r: &Option<Range>) -> u32 {
    r.as_ref().map_or(1, range_width)
}

impl<'a> Elab<'a> {
    fn declare(&mut self, name: String, decl: VarDecl) -> Result<(), Diagnostic> {
        if self.prog.decls.contains_key(&name) {
            return Err(Diagnostic::global(format!("duplicate declaration of '{name}'")));
        }
        self.prog.decls.insert(name, decl);
        Ok(())
    }

    fn inline(&mut self, m: &'a ModuleDecl, prefix: &str) -> Result<(), Diagnostic> {
        if self.stack.contains(&m.name) {
            return Err(Diagnostic::global(format!(
                "recursive instantiation of module '{}'",
                m.name
            )));
        }
        self.stack.push(m.name.clone());
        let local: HashSet<&str> = m
            .ports
            .iter()
            .map(|p| p.name.as_str())
            .chain(m.items.iter().filter_map(|i| match i {
                Item::Decl(d) => Some(d.name.as_str()),
                _ => None,
            }))
            .collect();
        let undeclared: RefCell<Option<String>> = RefCell::new(None);
        let mut ren = |n: &str| -> String {
            let mut u = undeclared.borrow_mut();
            if !local.contains(n) && u.is_none() {
                *u = Some(n.to_string());
            }
            format!("{prefix}{n}")
        };

        for p in &m.ports {
            let kind = match p.kind {
                NetKind::Reg => VarKind::Reg,
                NetKind::Wire => VarKind::Wire,
            };
            let d = VarDecl {
                kind,
                ..VarDecl::reg(width_of(&p.range))
            };
            self.declare(format!("{prefix}{}", p.name), d)?;
        }
        for it in &m.items {
            if let Item::Decl(d) = it {
                let name = format!("{prefix}{}", d.name);
                let width = width_of(&d.range);
                let kind = match d.kind {
                    NetKind::Reg => VarKind::Reg,
                    NetKind::Wire => VarKind::Wire,
                };
                if d.non_volatile && kind == VarKind::Wire {
                    return Err(Diagnostic::global(format!(
                        "non_volatile annotation on wire '{name}'"
                    )));
                }
                let mut init = Init::Value(0);
                if let Some(e) = &d.init {
                    match kind {
                        VarKind::Wire => {
                            let mut rhs = e.clone();
                            rhs.rename(&mut ren);
                            self.prog.assigns.push(ContAssign {
                                lhs: LValue::Var(name.clone()),
                                rhs,
                            });
                        }
                        VarKind::Reg => {
                            init = match e {
                                Expr::Call(SysFunc::Fopen, args) => match args.as_slice() {
                                    [Expr::Str(p)] => Init::Fopen(p.clone()),
                                    _ => unreachable!("parser validates $fopen"),
                                },
                                _ => Init::Value(const_init(e, width).ok_or_else(|| {
                                    Diagnostic::global(format!(
                                        "initializer of '{name}' is not constant"
                                    ))
                                })?),
                            }
                        }
                    }
                }
                self.declare(
                    name,
                    VarDecl {
                        kind,
                        width,
                        depth: d.array.as_ref().map(range_width),
                        init,
                        non_volatile: d.non_volatile,
                    },
                )?;
            }
        }
        for it in &m.items {
            match it {
                Item::Decl(_) | Item::LocalParam { .. } => {}
                Item::Assign { lhs, rhs } => {
                    let (mut lhs, mut rhs) = (lhs.clone(), rhs.clone());
                    lhs.rename(&mut ren);
                    rhs.rename(&mut ren);
                    self.prog.assigns.push(ContAssign { lhs, rhs });
                }
                Item::Always { guards, body } => {
                    let guards = guards
                        .iter()
                        .map(|g| EventGuard::new(g.edge, ren(&g.var)))
                        .collect();
                    let mut body = body.clone();
                    body.rename(&mut ren);
                    self.prog.blocks.push(ProcBlock { guards, body });
                }
                Item::Instance {
                    module,
                    name,
                    conns,
                } => {
                    let child = self.su.module(module).ok_or_else(|| {
                        Diagnostic::global(format!("unknown module '{module}'"))
                    })?;
                    let conns: Vec<(&Port, Option<Expr>)> = match conns {
                        Connections::Positional(v) => {
                            if v.len() > child.ports.len() {
                                return Err(Diagnostic::global(format!(
                                    "instance '{name}' of '{module}' has {} connections but the module has {} ports",
                                    v.len(),
                                    child.ports.len()
                                )));
                            }
                            child.ports.iter().zip(v.iter().cloned()).collect()
                        }
                        Connections::Named(v) => {
                            let mut out = Vec::new();
                            for (pname, e) in v {
                                let port = child.ports.iter().find(|p| &p.name == pname).ok_or_else(
                                    || {
                                        Diagnostic::global(format!(
                                            "module '{module}' has no port '{pname}'"
                                        ))
                                    },
                                )?;
                                out.push((port, e.clone()));
                            }
                            out
                        }
                    };
                    let child_prefix = format!("{prefix}{name}.");
                    self.inline(child, &child_prefix)?;
                    for (port, e) in conns {
                        let Some(mut e) = e else { continue };
                        e.rename(&mut ren);
                        let inner = format!("{child_prefix}{}", port.name);
                        let pw = width_of(&port.range);
                        let ew = match self.prog.expr_width(&e) {
                            Ok(w) => w,
                            Err(m) if undeclared.borrow().is_none() => {
                                return Err(Diagnostic::global(format!(
                                    "connection of port '{}' on '{name}': {m}",
                                    port.name
                                )))
                            }
                            Err(_) => pw,
                        };
                        if ew != pw && !matches!(e, Expr::Num { width: None, .. }) {
                            return Err(Diagnostic::global(format!(
                                "port width mismatch on '{name}.{}': port is {pw} bits, connection is {ew} bits",
                                port.name
                            )));
                        }
                        match port.dir {
                            Direction::Input => self.prog.assigns.push(ContAssign {
                                lhs: LValue::Var(inner),
                                rhs: e,
                            }),
                            Direction::Output => {
                                let lhs = expr_to_lvalue(&e).ok_or_else(|| {
                                    Diagnostic::global(format!(
                                        "output port '{}' of '{name}' must connect to a variable",
                                        port.name
                                    ))
                                })?;
                                self.prog.assigns.push(ContAssign {
                                    lhs,
                                    rhs: Expr::Ident(inner),
                                });
                            }
                        }
                    }
                }
            }
        }
        if let Some(n) = undeclared.into_inner() {
            return Err(Diagnostic::global(format!(
                "undeclared identifier '{n}' in module '{}'",
                m.name
            )));
        }
        self.stack.pop();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    #[test]
    fn identity_hierarchy_keeps_names() {
        let su = parse("module t(input wire c); reg [3:0] r; always @(posedge c) r <= r + 1; endmodule")
            .unwrap();
        let p = elaborate(&su, "t").unwrap();
        assert_eq!(p.decls.keys().cloned().collect::<Vec<_>>(), vec!["c", "r"]);
        assert_eq!(p.inputs, vec!["c"]);
    }

    #[test]
    fn self_instantiation_is_rejected() {
        let su = parse("module t(); t inner(); endmodule").unwrap();
        let e = elaborate(&su, "t").unwrap_err();
        assert!(e.message.contains("recursive instantiation"), "{}", e.message);
    }

    #[test]
    fn unknown_module_and_port_errors() {
        let su = parse("module t(); nope x(); endmodule").unwrap();
        assert!(elaborate(&su, "t").unwrap_err().message.contains("unknown module"));
        let su = parse(
            "module s(input wire [3:0] a); endmodule module t(); wire [7:0] w; s x(.a(w)); endmodule",
        )
        .unwrap();
        assert!(elaborate(&su, "t").unwrap_err().message.contains("width mismatch"));
        let su = parse("module s(input wire a); endmodule module t(); wire w; s x(w, w); endmodule")
            .unwrap();
        assert!(elaborate(&su, "t").unwrap_err().message.contains("connections"));
        assert!(elaborate(&su, "zz").unwrap_err().message.contains("unknown module"));
    }

    #[test]
    fn nested_instances_are_prefixed() {
        let su = parse(
            "module leaf(input wire c, output wire [1:0] o); reg [1:0] r; assign o = r; always @(posedge c) r <= r + 1; endmodule
             module mid(input wire c, output wire [1:0] o); leaf l(.c(c), .o(o)); endmodule
             module top(input wire clk); wire [1:0] y; mid m(clk, y); endmodule",
        )
        .unwrap();
        assert_eq!(find_top(&su).unwrap(), "top");
        let p = elaborate(&su, "top").unwrap();
        assert!(p.decls.contains_key("m.l.r"));
        assert_eq!(p.blocks[0].guards[0].var, "m.l.c");
        assert_eq!(p.decls.len(), 2 + 2 + 3);
    }

    #[test]
    fn non_volatile_wire_is_rejected() {
        let su = parse("module t(); (* non_volatile *) wire w; endmodule").unwrap();
        assert!(elaborate(&su, "t").unwrap_err().message.contains("non_volatile"));
    }
}
