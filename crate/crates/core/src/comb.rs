//! Continuous-assignment network evaluated to a fixed point.

use crate::error::{Error, Result};
use crate::program::{ContAssign, Program};
use crate::store::{NoSys, Store, Target};

#[derive(Debug, Clone)]
pub struct Comb {
    assigns: Vec<ContAssign>,
    /// For each store slot, the assigns that read it.
    readers: Vec<Vec<usize>>,
}

impl Comb {
    pub fn new(p: &Program, store: &Store) -> Comb {
        let mut readers = vec![Vec::new(); p.decls.len()];
        for (k, a) in p.assigns.iter().enumerate() {
            let mut add = |n: &str| {
                if let Some(i) = store.index_of(n) {
                    if !readers[i].contains(&k) {
                        readers[i].push(k);
                    }
                }
            };
            a.rhs.for_each_ident(&mut add);
            if let crate::frontend::ast::LValue::Index(_, i) = &a.lhs {
                i.for_each_ident(&mut add);
            }
        }
        Comb {
            assigns: p.assigns.clone(),
            readers,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.assigns.is_empty()
    }

    /// Re-evaluates assigns until none changes its target. Each evaluation
    /// counts against `budget`.
    pub fn settle(&self, store: &mut Store, budget: &mut u64, bound: u64) -> Result<()> {
        let n = self.assigns.len();
        let mut queued = vec![true; n];
        let mut work: std::collections::VecDeque<usize> = (0..n).collect();
        while let Some(k) = work.pop_front() {
            queued[k] = false;
            *budget += 1;
            if *budget > bound {
                return Err(Error::Oscillation(bound));
            }
            let a = &self.assigns[k];
            let v = store.eval(&a.rhs, &mut NoSys)?;
            let t = store.resolve(&a.lhs, &mut NoSys)?;
            let (slot, before) = read_target(store, t);
            store.write(t, v);
            if read_target(store, t).1 != before {
                for &r in &self.readers[slot] {
                    if !queued[r] {
                        queued[r] = true;
                        work.push_back(r);
                    }
                }
            }
        }
        Ok(())
    }
}

fn read_target(store: &Store, t: Target) -> (usize, u64) {
    match t {
        Target::Elem(i, idx) => (i, store.get_elem_at(i, idx).bits()),
        Target::Whole(i) | Target::Bit(i, _) | Target::Slice(i, ..) => (i, store.get_at(i).bits()),
    }
}
