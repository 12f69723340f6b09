//! Compilation of an elaborated program into an interruptible state
//! machine: call hoisting, block flattening, core merging, guard lowering,
//! state construction, emission and volatility classification.

pub mod emit;
pub mod flatten;
pub mod fsm;
pub mod hoist;
pub mod manifest;
pub mod merge;

use std::sync::Arc;

use crate::frontend::{self, Diagnostic};
use crate::program::{ProcBlock, Program};

pub use emit::{emit_core, lift_core, CoreMeta};
pub use flatten::flatten_blocks;
pub use fsm::{build_state_machine, CoreStateMachine, State, Terminator};
pub use hoist::hoist_calls;
pub use manifest::{classify_volatile, ManifestEntry, StateManifest};
pub use merge::{lower_guards, merge_procedural, Core};

/// Everything needed to run a program on a state-machine engine. The
/// emitted `text` is authoritative: `program`, `machine` and `meta` are
/// recovered from it.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub name: String,
    /// The elaborated input program.
    pub source: Program,
    pub text: String,
    pub program: Program,
    pub machine: CoreStateMachine,
    pub meta: CoreMeta,
    /// Generated registers; never volatile.
    pub bookkeeping: Vec<String>,
    pub manifest: StateManifest,
}

impl Compiled {
    /// Cost used by the device model.
    pub fn cost(&self) -> u64 {
        self.program.statement_count() as u64
            + self
                .machine
                .states
                .iter()
                .map(|s| 1 + s.stmts.iter().map(|x| x.leaf_count()).sum::<usize>() as u64)
                .sum::<u64>()
    }

    pub fn task_kind(&self, code: u32) -> Option<crate::frontend::ast::TaskKind> {
        self.machine
            .task_codes()
            .into_iter()
            .find(|(c, _)| *c == code)
            .map(|(_, k)| k)
    }
}

pub fn compile(src: &Program, name: &str) -> Result<Compiled, Diagnostic> {
    let (hoisted, temps) = hoist_calls(src);
    let mut flat = hoisted;
    flat.blocks = flat
        .blocks
        .iter()
        .map(|b| ProcBlock {
            guards: b.guards.clone(),
            body: flatten_blocks(&b.body),
        })
        .collect();
    let (merged, core) = merge_procedural(&flat);
    let lowered = lower_guards(&merged, &core)?;
    let sm = build_state_machine(&core.body);
    let emitted = emit_core(&lowered, &sm, &CoreMeta::from_core(&core));
    let text = emitted.to_text(name);

    let su = frontend::parse(&text)
        .map_err(|d| Diagnostic::global(format!("internal: emitted text does not parse: {d}")))?;
    let program = frontend::elaborate(&su, name)
        .map_err(|d| Diagnostic::global(format!("internal: emitted text does not elaborate: {d}")))?;
    let (machine, meta) =
        lift_core(&program).map_err(|m| Diagnostic::global(format!("internal: {m}")))?;

    let mut bookkeeping = temps;
    bookkeeping.extend(meta.prev_regs.iter().map(|(_, r)| r.clone()));
    for n in [
        merge::STATE_REG,
        merge::TASK_REG,
        merge::CLOCK,
        merge::CONT,
        merge::DONE,
    ] {
        bookkeeping.push(n.to_string());
    }
    let manifest = classify_volatile(&program, &bookkeeping, &text);
    Ok(Compiled {
        name: name.to_string(),
        source: src.clone(),
        text,
        program,
        machine,
        meta,
        bookkeeping,
        manifest,
    })
}

/// Parses, elaborates and compiles. `top` defaults to the unique
/// uninstantiated module.
pub fn compile_source(text: &str, top: Option<&str>) -> Result<Arc<Compiled>, Diagnostic> {
    let su = frontend::parse(text)?;
    let top = match top {
        Some(t) => t.to_string(),
        None => frontend::find_top(&su)?,
    };
    let prog = frontend::elaborate(&su, &top)?;
    compile(&prog, &top).map(Arc::new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::ast::{Stmt, TaskKind};

    const FIG2: &str = r#"
module sum(input wire clock);
  reg [31:0] fd = $fopen("data");
  reg [31:0] r;
  reg [31:0] total;
  always @(posedge clock) begin
    $fread32(fd, r);
    if ($feof(fd)) begin
      $display("res = %d", total);
      $finish;
    end else
      total <= total + r;
  end
endmodule
"#;

    #[test]
    fn file_sum_state_structure() {
        let c = compile_source(FIG2, None).unwrap();
        let sm = &c.machine;
        let kinds: Vec<TaskKind> = sm.task_codes().into_iter().map(|(_, k)| k).collect();
        assert_eq!(
            kinds,
            vec![TaskKind::Fread32, TaskKind::Feof, TaskKind::Display, TaskKind::Finish]
        );
        // A lone block needs no guard test: the read is the entry state.
        assert!(matches!(
            sm.state(1).term,
            Terminator::Task { kind: TaskKind::Fread32, .. }
        ));
        let eof_branch = sm
            .states
            .iter()
            .find(|s| matches!(&s.term, Terminator::Branch { cond, .. } if *cond == crate::frontend::ast::Expr::ident("__sf_0")))
            .expect("branch on the hoisted $feof result");
        let Terminator::Branch { else_id, .. } = eof_branch.term else {
            unreachable!()
        };
        assert!(matches!(sm.state(else_id).stmts[0], Stmt::NonBlocking(..)));
        assert!(c.text.contains("always @(posedge __clk)"));
        assert!(c.text.contains("__task = 32'd1;"));
    }

    #[test]
    fn emitted_text_is_a_fixpoint() {
        let c1 = compile_source(FIG2, None).unwrap();
        let emitted = emit_core(&c1.program, &c1.machine, &c1.meta).to_text(&c1.name);
        assert_eq!(emitted, c1.text);
        let su = crate::frontend::parse(&emitted).unwrap();
        let p = crate::frontend::elaborate(&su, &c1.name).unwrap();
        let (sm2, meta2) = lift_core(&p).unwrap();
        assert_eq!(sm2, c1.machine);
        assert_eq!(meta2, c1.meta);
    }

    #[test]
    fn single_straight_line_block_is_one_state() {
        let c = compile_source(
            "module t(input wire clock); reg [7:0] a; reg [7:0] b;
             always @(posedge clock) begin a <= a + 1; b = a; end endmodule",
            None,
        )
        .unwrap();
        assert_eq!(c.machine.states.len(), 1);
        assert_eq!(c.machine.states[0].term, Terminator::Done);
    }

    #[test]
    fn manifest_classification() {
        let c = compile_source(
            "module t(input wire clock); reg [3:0] a; reg b; reg c; reg d; reg [7:0] e;
             always @(posedge clock) begin a <= 1; b <= 1; c <= 1; d <= 1; e <= 1; end endmodule",
            None,
        )
        .unwrap();
        let user: Vec<_> = c
            .manifest
            .entries
            .iter()
            .filter(|e| !c.bookkeeping.contains(&e.name))
            .collect();
        assert_eq!(user.len(), 5);
        assert!(c.manifest.entries.iter().all(|e| !e.volatile));

        let c = compile_source(
            "module t(input wire clock); (* non_volatile *) reg [3:0] keep; reg [7:0] scratch;
             always @(posedge clock) begin scratch <= scratch + 1; keep <= keep + 1; $yield; end endmodule",
            None,
        )
        .unwrap();
        let vol: Vec<_> = c.manifest.entries.iter().filter(|e| e.volatile).map(|e| e.name.as_str()).collect();
        assert_eq!(vol, vec!["scratch"]);
        assert!(c.manifest.to_text().starts_with("keep 4 non_volatile\nscratch 8 volatile\n"));

        let c = compile_source("module t(); endmodule", None).unwrap();
        assert!(c.manifest.entries.iter().all(|e| c.bookkeeping.contains(&e.name)));
        assert!(c.machine.states.is_empty());
    }

    #[test]
    fn case_with_task_arm_builds_case_branch() {
        let c = compile_source(
            "module t(input wire clock); reg [1:0] s; reg x;
             always @(posedge clock) case (s) 0: $display(\"zero\"); 1, 2: x = 1; endcase endmodule",
            None,
        )
        .unwrap();
        assert!(c
            .machine
            .states
            .iter()
            .any(|s| matches!(&s.term, Terminator::CaseBranch { arms, .. } if arms.len() == 2)));
    }
}
