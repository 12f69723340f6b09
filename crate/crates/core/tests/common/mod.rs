#![allow(dead_code)]

use fpgavirt_core::bisim::{transformed, Case, Observed};
use fpgavirt_core::host::TaskEffect;
use fpgavirt_core::transform::compile_source;

pub fn run(case: &Case) -> Observed {
    let c = compile_source(&case.source, None).unwrap_or_else(|d| panic!("{}: {d}", case.name));
    transformed(case, &c).unwrap_or_else(|e| panic!("{}: {e}", case.name)).0
}

pub fn displays(o: &Observed) -> Vec<String> {
    o.trace
        .iter()
        .filter_map(|t| match &t.effect {
            TaskEffect::Display(s) => Some(s.clone()),
            _ => None,
        })
        .collect()
}
