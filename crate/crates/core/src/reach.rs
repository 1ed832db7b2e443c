//! Explicit reachability graphs and bottom strongly connected components.

use crate::error::{Error, Result};
use crate::protocol::{Model, Protocol, TransId};
use crate::semantics::{support_set, Configuration, Seen};
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use std::collections::HashMap;

/// Default bound on the number of graph nodes.
pub const DEFAULT_NODE_BUDGET: usize = 10_000_000;

/// Node budget, overridable through the `POPV_NODE_BUDGET` environment variable.
pub fn node_budget() -> usize {
    std::env::var("POPV_NODE_BUDGET")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_NODE_BUDGET)
}

/// A graph node: a configuration, with its seen set for MFDO.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Node {
    pub config: Configuration,
    pub seen: Option<Seen>,
}

/// Configurations reachable from a set of roots, in breadth-first discovery order.
#[derive(Clone, Debug, Default)]
pub struct ReachGraph {
    pub nodes: Vec<Node>,
    pub index: HashMap<Node, usize>,
    /// Outgoing edges labeled by transitions, in transition order.
    pub edges: Vec<Vec<(TransId, usize)>>,
    pub roots: Vec<usize>,
}

impl ReachGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a node if new; returns its index and whether it was inserted.
    pub fn intern(&mut self, node: Node) -> (usize, bool) {
        if let Some(&i) = self.index.get(&node) {
            return (i, false);
        }
        let i = self.nodes.len();
        self.index.insert(node.clone(), i);
        self.nodes.push(node);
        self.edges.push(Vec::new());
        (i, true)
    }

    /// Finds a node holding the given configuration (any seen set).
    pub fn find_config(&self, c: &Configuration) -> Option<usize> {
        self.nodes.iter().position(|n| &n.config == c)
    }

    /// Shortest path (as transition labels) from `from` to `to`, if any.
    pub fn path(&self, from: usize, to: usize) -> Option<Vec<TransId>> {
        let mut prev: Vec<Option<(usize, TransId)>> = vec![None; self.len()];
        let mut visited = vec![false; self.len()];
        let mut queue = std::collections::VecDeque::from([from]);
        visited[from] = true;
        while let Some(u) = queue.pop_front() {
            if u == to {
                let mut path = Vec::new();
                let mut cur = to;
                while let Some((p, t)) = prev[cur] {
                    path.push(t);
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for &(t, v) in &self.edges[u] {
                if !visited[v] {
                    visited[v] = true;
                    prev[v] = Some((u, t));
                    queue.push_back(v);
                }
            }
        }
        None
    }
}

/// Builds the graph of configurations reachable from `roots`.
///
/// Delayed models need `msg_cap`, a bound on the number of messages in transit;
/// sends that would exceed it are skipped. MFDO nodes carry seen sets that start
/// as the support of each root.
pub fn reach_graph(p: &Protocol, roots: &[Configuration], msg_cap: Option<u64>) -> Result<ReachGraph> {
    reach_graph_with_budget(p, roots, msg_cap, node_budget())
}

pub fn reach_graph_with_budget(
    p: &Protocol,
    roots: &[Configuration],
    msg_cap: Option<u64>,
    budget: usize,
) -> Result<ReachGraph> {
    if p.model.is_delayed() && msg_cap.is_none() {
        return Err(Error::Invalid("delayed models need a message cap".into()));
    }
    let mfdo = p.model == Model::MFDO;
    let mut g = ReachGraph::default();
    for r in roots {
        let node = Node { config: r.clone(), seen: mfdo.then(|| support_set(&r.agents)) };
        let (i, _) = g.intern(node);
        if !g.roots.contains(&i) {
            g.roots.push(i);
        }
    }
    let mut head = 0;
    while head < g.nodes.len() {
        let node = g.nodes[head].clone();
        for t in 0..p.transitions.len() {
            let mut c = node.config.clone();
            let mut seen = node.seen.clone();
            if !p.fire(t, &mut c, seen.as_mut()) {
                continue;
            }
            if let Some(cap) = msg_cap {
                if c.messages.size() > cap {
                    continue;
                }
            }
            let (j, fresh) = g.intern(Node { config: c, seen });
            if fresh && g.nodes.len() > budget {
                return Err(Error::Budget { budget });
            }
            g.edges[head].push((t, j));
        }
        head += 1;
    }
    Ok(g)
}

/// SCC decomposition with bottom components and their consensus values.
#[derive(Clone, Debug)]
pub struct SccAnalysis {
    /// Components in reverse topological order (sinks first).
    pub sccs: Vec<Vec<usize>>,
    pub scc_of: Vec<usize>,
    /// Indices into `sccs` of the bottom components.
    pub bottom: Vec<usize>,
    /// Consensus value of each component (all agents output the same bit in every node), if any.
    pub consensus: Vec<Option<u8>>,
}

impl SccAnalysis {
    pub fn is_bottom(&self, scc: usize) -> bool {
        self.bottom.contains(&scc)
    }
}

/// Computes SCCs with Tarjan's algorithm and classifies bottom components.
pub fn bottom_scc_analysis(p: &Protocol, g: &ReachGraph) -> SccAnalysis {
    bottom_scc_analysis_by(g.len(), |u| g.edges[u].iter().map(|e| e.1).collect(), |u| {
        p.consensus_of(&g.nodes[u].config.agents)
    })
}

/// SCC analysis of an arbitrary graph given by successor and consensus functions.
pub fn bottom_scc_analysis_by(
    n: usize,
    succ: impl Fn(usize) -> Vec<usize>,
    consensus: impl Fn(usize) -> Option<u8>,
) -> SccAnalysis {
    let mut graph: DiGraph<(), ()> = DiGraph::with_capacity(n, n);
    for _ in 0..n {
        graph.add_node(());
    }
    let mut succs = Vec::with_capacity(n);
    for u in 0..n {
        let s = succ(u);
        for &v in &s {
            graph.add_edge(NodeIndex::new(u), NodeIndex::new(v), ());
        }
        succs.push(s);
    }
    let sccs: Vec<Vec<usize>> = tarjan_scc(&graph)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|x| x.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    let mut scc_of = vec![0; n];
    for (i, c) in sccs.iter().enumerate() {
        for &u in c {
            scc_of[u] = i;
        }
    }
    let mut bottom = Vec::new();
    let mut cons = Vec::with_capacity(sccs.len());
    for (i, c) in sccs.iter().enumerate() {
        if c.iter().all(|&u| succs[u].iter().all(|&v| scc_of[v] == i)) {
            bottom.push(i);
        }
        let mut val = consensus(c[0]);
        for &u in &c[1..] {
            if val.is_none() {
                break;
            }
            if consensus(u) != val {
                val = None;
            }
        }
        cons.push(val);
    }
    SccAnalysis { sccs, scc_of, bottom, consensus: cons }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::multiset::Multiset;

    #[test]
    fn io_example_reaches_all_in_q3() {
        let p = catalog::io_example();
        let g = reach_graph(&p, &[Configuration::from_counts(&p, &[4, 0, 1])], None).unwrap();
        let target = Configuration::from_counts(&p, &[0, 0, 5]);
        assert!(g.find_config(&target).is_some());
        let a = bottom_scc_analysis(&p, &g);
        assert_eq!(a.bottom.len(), 1);
        let b = a.bottom[0];
        assert_eq!(a.sccs[b].len(), 1);
        assert_eq!(g.nodes[a.sccs[b][0]].config, target);
        assert_eq!(a.consensus[b], Some(1));
    }

    #[test]
    fn two_state_bottom() {
        let p = catalog::two_state();
        let g = reach_graph(&p, &[Configuration::from_counts(&p, &[1, 1])], None).unwrap();
        assert_eq!(g.len(), 2);
        let a = bottom_scc_analysis(&p, &g);
        assert_eq!(a.bottom.len(), 1);
        let b = a.bottom[0];
        assert_eq!(g.nodes[a.sccs[b][0]].config.agents.counts(), &[0, 2]);
        assert_eq!(a.consensus[b], Some(1));
    }

    #[test]
    fn no_transitions_single_node() {
        let mut p = catalog::two_state();
        p.transitions.clear();
        let g = reach_graph(&p, &[Configuration::from_counts(&p, &[2, 0])], None).unwrap();
        assert_eq!(g.len(), 1);
        let a = bottom_scc_analysis(&p, &g);
        assert_eq!(a.bottom, vec![0]);
    }

    #[test]
    fn do_ab_with_message_cap() {
        let p = catalog::do_ab();
        let root = Configuration::new(Multiset::from_counts(vec![1, 1, 0]), Multiset::zeros(3));
        let g = reach_graph(&p, &[root], Some(4)).unwrap();
        let target = Configuration::new(Multiset::from_counts(vec![0, 0, 2]), Multiset::zeros(3));
        assert!(g.find_config(&target).is_some());
        assert!(reach_graph(&p, &[g.nodes[0].config.clone()], None).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let p = catalog::io_example();
        let r = reach_graph_with_budget(&p, &[Configuration::from_counts(&p, &[4, 0, 1])], None, 3);
        assert_eq!(r.unwrap_err(), Error::Budget { budget: 3 });
    }
}
