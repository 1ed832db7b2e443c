//! Independent brute-force oracles shared by integration tests.
#![allow(dead_code)]

use popv_core::multiset::{multisets_of_size, Multiset};
use popv_core::{Model, Protocol, Rule};
use std::collections::{BTreeSet, HashMap, VecDeque};

/// One IO or MFDO step written out directly from the definitions, without the library's `fire`.
fn successors(p: &Protocol, c: &[u64], seen: u64) -> Vec<(Vec<u64>, u64)> {
    let mut out = Vec::new();
    for t in &p.transitions {
        let (from, obs, to) = match t.rule {
            Rule::Observe { from, obs, to } => (from, obs, to),
            Rule::Pair { q1, q2, q3, q4 } if q1 == q3 => (q2, q1, q4),
            _ => panic!("oracle handles observation protocols only"),
        };
        let ok = if p.model == Model::MFDO {
            c[from] >= 1 && seen & (1 << obs) != 0
        } else {
            c[from] >= 1 && c[obs] >= if obs == from { 2 } else { 1 }
        };
        if ok {
            let mut d = c.to_vec();
            d[from] -= 1;
            d[to] += 1;
            out.push((d, seen | (1 << to)));
        }
    }
    out
}

fn support(c: &[u64]) -> u64 {
    c.iter().enumerate().filter(|(_, &x)| x > 0).fold(0, |s, (q, _)| s | (1 << q))
}

/// All configurations reachable from `c` (with the MFDO seen set starting at its support).
pub fn reachable(p: &Protocol, c: &[u64]) -> BTreeSet<Vec<u64>> {
    let start = (c.to_vec(), support(c));
    let mut seen_nodes = BTreeSet::from([start.clone()]);
    let mut queue = VecDeque::from([start]);
    while let Some((x, s)) = queue.pop_front() {
        for n in successors(p, &x, s) {
            if seen_nodes.insert(n.clone()) {
                queue.push_back(n);
            }
        }
    }
    seen_nodes.into_iter().map(|(x, _)| x).collect()
}

/// Configurations of size at most `max` that can reach a member of `target`.
pub fn explicit_pre(p: &Protocol, target: impl Fn(&Multiset) -> bool, max: u64) -> BTreeSet<Vec<u64>> {
    let mut out = BTreeSet::new();
    for s in 0..=max {
        for m in multisets_of_size(p.num_states(), s) {
            let r = reachable(p, m.counts());
            if r.iter().any(|x| target(&Multiset::from_counts(x.clone()))) {
                out.insert(m.counts().to_vec());
            }
        }
    }
    out
}

/// Configurations of size at most `max` reachable from a member of `source`.
pub fn explicit_post(p: &Protocol, source: impl Fn(&Multiset) -> bool, max: u64) -> BTreeSet<Vec<u64>> {
    let mut out = BTreeSet::new();
    for s in 0..=max {
        for m in multisets_of_size(p.num_states(), s) {
            if source(&m) {
                out.extend(reachable(p, m.counts()));
            }
        }
    }
    out
}

/// Memoized reachability, for repeated queries over the same protocol.
#[derive(Default)]
pub struct ReachCache {
    cache: HashMap<Vec<u64>, BTreeSet<Vec<u64>>>,
}

impl ReachCache {
    pub fn get(&mut self, p: &Protocol, c: &[u64]) -> &BTreeSet<Vec<u64>> {
        self.cache.entry(c.to_vec()).or_insert_with(|| reachable(p, c))
    }
}
