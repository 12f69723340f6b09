//! Round-robin arbitration of the shared I/O resource. A grant covers one
//! trap service to completion; only one grant is outstanding at a time.

use std::collections::BTreeSet;

#[derive(Debug, Default, Clone)]
pub struct IoScheduler {
    pending: BTreeSet<u32>,
    current: Option<u32>,
    last: Option<u32>,
}

impl IoScheduler {
    pub fn new() -> Self {
        Self::default()
    }

    /// `eid` has an I/O trap waiting. A tenant has at most one.
    pub fn request(&mut self, eid: u32) {
        self.pending.insert(eid);
    }

    /// Drops a tenant's request and any grant it holds.
    pub fn cancel(&mut self, eid: u32) {
        self.pending.remove(&eid);
        if self.current == Some(eid) {
            self.current = None;
        }
    }

    pub fn current(&self) -> Option<u32> {
        self.current
    }

    pub fn is_pending(&self, eid: u32) -> bool {
        self.pending.contains(&eid)
    }

    /// Issues the next grant if the resource is free: the first pending
    /// tenant after the previous grantee in eid order, wrapping.
    pub fn grant(&mut self) -> Option<u32> {
        if self.current.is_some() {
            return None;
        }
        let after = self.last.map_or(0, |l| l.saturating_add(1));
        let next = self
            .pending
            .range(after..)
            .next()
            .or_else(|| self.pending.iter().next())
            .copied()?;
        self.pending.remove(&next);
        self.current = Some(next);
        self.last = Some(next);
        Some(next)
    }

    /// The grantee's trap service finished.
    pub fn complete(&mut self, eid: u32) -> bool {
        if self.current == Some(eid) {
            self.current = None;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_streams_alternate() {
        let mut s = IoScheduler::new();
        let mut seq = vec![];
        for _ in 0..6 {
            s.request(1);
            s.request(2);
            let g = s.grant().unwrap();
            assert_eq!(s.grant(), None, "one grant outstanding");
            seq.push(g);
            s.complete(g);
        }
        assert_eq!(seq, [1, 2, 1, 2, 1, 2]);
    }

    #[test]
    fn survivor_gets_everything_after_the_other_leaves() {
        let mut s = IoScheduler::new();
        s.request(1);
        s.request(2);
        let g = s.grant().unwrap();
        s.cancel(2);
        s.complete(g);
        for _ in 0..3 {
            s.request(1);
            assert_eq!(s.grant(), Some(1));
            s.complete(1);
        }
        assert_eq!(s.grant(), None);
    }

    proptest! {
        /// With k tenants that always have a request pending, any window
        /// of grants gives each tenant its 1/k share to within one.
        #[test]
        fn fair_under_contention(
            eids in prop::collection::btree_set(1u32..50, 1..6),
            start in 0usize..40,
            len in 0usize..200,
        ) {
            let eids: Vec<u32> = eids.into_iter().collect();
            let k = eids.len();
            let mut s = IoScheduler::new();
            let mut seq = vec![];
            for _ in 0..start + len {
                for &e in &eids {
                    if s.current() != Some(e) {
                        s.request(e);
                    }
                }
                let g = s.grant().unwrap();
                seq.push(g);
                s.complete(g);
            }
            let window = &seq[start..];
            for &e in &eids {
                let n = window.iter().filter(|&&g| g == e).count() as f64;
                prop_assert!((n - window.len() as f64 / k as f64).abs() <= 1.0);
            }
        }
    }
}
