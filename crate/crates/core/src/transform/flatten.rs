use crate::frontend::ast::{CaseItem, Stmt};

/// Replaces `fork`/`join` with `begin`/`end` and splices directly nested
/// blocks into their parent, recursively.
pub fn flatten_blocks(s: &Stmt) -> Stmt {
    match s {
        Stmt::Begin(ss) | Stmt::Fork(ss) => {
            let mut out = Vec::new();
            for s in ss {
                match flatten_blocks(s) {
                    Stmt::Begin(inner) => out.extend(inner),
                    other => out.push(other),
                }
            }
            Stmt::Begin(out)
        }
        Stmt::If(c, t, e) => Stmt::If(
            c.clone(),
            Box::new(flatten_blocks(t)),
            e.as_ref().map(|e| Box::new(flatten_blocks(e))),
        ),
        Stmt::Case(subject, items, d) => Stmt::Case(
            subject.clone(),
            items
                .iter()
                .map(|i| CaseItem {
                    labels: i.labels.clone(),
                    body: flatten_blocks(&i.body),
                })
                .collect(),
            d.as_ref().map(|d| Box::new(flatten_blocks(d))),
        ),
        leaf => leaf.clone(),
    }
}

/// The statements of `s` as a list, without the enclosing `begin`.
pub fn stmt_list(s: &Stmt) -> Vec<Stmt> {
    match flatten_blocks(s) {
        Stmt::Begin(ss) => ss,
        other => vec![other],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::ast::{Expr, LValue};

    fn a(n: &str) -> Stmt {
        Stmt::Blocking(LValue::Var(n.into()), Expr::uint(1))
    }

    fn no_nested(s: &Stmt) -> bool {
        match s {
            Stmt::Fork(_) => false,
            Stmt::Begin(ss) => ss
                .iter()
                .all(|s| !matches!(s, Stmt::Begin(_)) && no_nested(s)),
            Stmt::If(_, t, e) => no_nested(t) && e.as_ref().is_none_or(|e| no_nested(e)),
            Stmt::Case(_, items, d) => {
                items.iter().all(|i| no_nested(&i.body)) && d.as_ref().is_none_or(|d| no_nested(d))
            }
            _ => true,
        }
    }

    #[test]
    fn fork_becomes_begin() {
        assert_eq!(
            flatten_blocks(&Stmt::Fork(vec![a("x"), a("y")])),
            Stmt::Begin(vec![a("x"), a("y")])
        );
    }

    #[test]
    fn nested_begin_is_spliced() {
        let s = Stmt::Begin(vec![Stmt::Begin(vec![a("x")])]);
        assert_eq!(flatten_blocks(&s), Stmt::Begin(vec![a("x")]));
        assert_eq!(flatten_blocks(&a("x")), a("x"));
    }

    #[test]
    fn order_and_multiset_preserved_in_arms() {
        let s = Stmt::Begin(vec![
            a("p"),
            Stmt::Fork(vec![Stmt::Begin(vec![a("q"), a("r")]), a("s")]),
            Stmt::If(
                Expr::uint(1),
                Box::new(Stmt::Begin(vec![Stmt::Fork(vec![a("t")])])),
                None,
            ),
        ]);
        let f = flatten_blocks(&s);
        assert!(no_nested(&f));
        assert_eq!(f.leaf_count(), s.leaf_count());
        let Stmt::Begin(ss) = &f else { panic!() };
        assert_eq!(&ss[..4], &[a("p"), a("q"), a("r"), a("s")]);
    }
}
