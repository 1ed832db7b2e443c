//! Correctness deciders: stable-consensus sets, single-instance and all-instance
//! correctness, saturation and max-flow checks for delayed observation.

use crate::counting::{post_star, pre_star, Constraint, Cube, Method, INF};
use crate::error::{Error, Result};
use crate::histories::mfdo_run_to_do;
use crate::multiset::{multisets_of_size, Multiset};
use crate::protocol::{MfdoView, Model, MsgId, Protocol, Rule, StateId, TransId};
use crate::reach::{bottom_scc_analysis, node_budget, reach_graph_with_budget, Node, ReachGraph};
use crate::semantics::{support_set, Configuration, Run, Seen};
use fixedbitset::FixedBitSet;
use petgraph::algo::maximum_flow::ford_fulkerson;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

/// Edge label of the reset edges `(C, S) -> (C, supp C)` in the delayed-observation graph.
pub const RESET: TransId = usize::MAX;

/// A counting predicate over the input alphabet.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub constraint: Constraint,
}

impl Predicate {
    /// The constant predicate `b` over the inputs of `p`.
    pub fn constant(p: &Protocol, b: u8) -> Predicate {
        let n = p.inputs.len();
        Predicate { constraint: if b == 1 { Constraint::top(n) } else { Constraint::empty(n) } }
    }

    pub fn eval(&self, d: &Multiset) -> u8 {
        u8::from(self.constraint.contains(d))
    }
}

/// Parses a predicate in the constraint format, with input symbols as coordinates.
/// The literals `true` and `false` denote the constant predicates.
pub fn parse_predicate(p: &Protocol, text: &str) -> Result<Predicate> {
    match text.trim() {
        "true" | "const1" => Ok(Predicate::constant(p, 1)),
        "false" | "const0" => Ok(Predicate::constant(p, 0)),
        _ => Ok(Predicate { constraint: crate::counting::parse_constraint_over(&p.inputs, text)? }),
    }
}

/// The initial configuration `I(D)` of an input multiset over Σ.
pub fn input_config(p: &Protocol, d: &Multiset) -> Configuration {
    let mut agents = Multiset::zeros(p.num_states());
    for (s, &k) in d.counts().iter().enumerate() {
        agents.add(p.init[s], k);
    }
    Configuration::of_agents(p, agents)
}

fn check_injective(p: &Protocol) -> Result<()> {
    let mut seen = FixedBitSet::with_capacity(p.num_states());
    for &q in &p.init {
        if seen.put(q) {
            return Err(Error::Invalid("the input mapping is not injective".into()));
        }
    }
    Ok(())
}

/// The initial configurations `I(D)` with `φ(D) = b`, as a constraint over states.
pub fn initial_set(p: &Protocol, phi: &Predicate, b: u8) -> Result<Constraint> {
    check_injective(p)?;
    if phi.constraint.dim() != p.inputs.len() {
        return Err(Error::Invalid("predicate dimension does not match the input alphabet".into()));
    }
    let over_inputs = if b == 1 { phi.constraint.clone() } else { phi.constraint.complement() };
    let n = p.num_states();
    let cubes = over_inputs
        .cubes()
        .iter()
        .map(|c| {
            let mut cube = Cube::new(vec![0; n], vec![0; n]);
            for (s, &q) in p.init.iter().enumerate() {
                cube.lower[q] = c.lower[s];
                cube.upper[q] = c.upper[s];
            }
            cube
        })
        .collect();
    Constraint::from_cubes(n, cubes)
}

/// The b-consensus configurations: no agent in a state with output `1 - b`.
pub fn consensus_set(p: &Protocol, b: u8) -> Constraint {
    let n = p.num_states();
    let mut c = Cube::top(n);
    for q in 0..n {
        if p.output[q] != b {
            c.upper[q] = 0;
        }
    }
    Constraint::from_cubes(n, vec![c]).expect("dimension matches")
}

/// The closure view used by the symbolic deciders: IO and MFDO use their own
/// configurations, DO uses zero-message configurations through the MFDO protocol.
fn closure_protocol(p: &Protocol) -> Result<Protocol> {
    match p.model {
        Model::IO | Model::MFDO => Ok(p.clone()),
        Model::DO => Ok(p.to_mfdo()?.mfdo),
        m => Err(Error::Model(format!("no symbolic closures for {m}"))),
    }
}

/// Stable b-consensus configurations, `¬pre*(¬Cons_b)`; zero-message ones for DO.
pub fn stable_set(p: &Protocol, b: u8) -> Result<Constraint> {
    let cp = closure_protocol(p)?;
    let not_cons = consensus_set(p, b).complement();
    let pre = pre_star(&cp, &not_cons, Method::Fixpoint)?;
    let mut stab = pre.complement();
    stab.expand();
    Ok(stab)
}

/// Checker outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Correct,
    Incorrect,
    Inconclusive,
}

/// How a verdict was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckMethod {
    Symbolic,
    WitnessBound,
    Kernel,
}

impl std::str::FromStr for CheckMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<CheckMethod> {
        match s {
            "symbolic" => Ok(CheckMethod::Symbolic),
            "witness" | "witness-bound" => Ok(CheckMethod::WitnessBound),
            "kernel" => Ok(CheckMethod::Kernel),
            _ => Err(Error::Invalid(format!("unknown mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for CheckMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CheckMethod::Symbolic => "symbolic",
            CheckMethod::WitnessBound => "witness-bound",
            CheckMethod::Kernel => "kernel",
        })
    }
}

/// A counterexample: a run from the initial configuration to `bad`, a configuration
/// in a bottom component that is not a stable consensus on the expected value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    /// Input multiset over Σ, when the start is an initial configuration.
    pub input: Option<Multiset>,
    pub expected: u8,
    pub run: Run,
    pub bad: Configuration,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    pub method: CheckMethod,
    /// Largest population size the verdict relies on.
    pub bound_used: u64,
    /// Worst-case bound derived from the input norms alone.
    pub worst_case_bound: Option<u128>,
    /// Largest population size fully explored by a sweep, if any.
    pub largest_size_checked: Option<u64>,
    /// True when the verdict only covers sizes up to `bound_used`.
    pub bounded: bool,
    pub witness: Option<Witness>,
    pub note: Option<String>,
}

impl Verdict {
    fn new(status: Status, method: CheckMethod, bound_used: u64) -> Verdict {
        Verdict {
            status,
            method,
            bound_used,
            worst_case_bound: None,
            largest_size_checked: None,
            bounded: false,
            witness: None,
            note: None,
        }
    }

    pub fn is_correct(&self) -> bool {
        self.status == Status::Correct
    }

    /// Process exit code: 0 correct, 1 incorrect, 3 inconclusive.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Correct => 0,
            Status::Incorrect => 1,
            Status::Inconclusive => 3,
        }
    }
}

/// The delayed-observation graph over MFDO pairs `(C, S)`: MFDO moves plus reset
/// edges `(C, S) -> (C, supp C)` labeled [`RESET`]. Agent configurations reachable
/// here are exactly the zero-message configurations reachable in the DO protocol.
/// Closes a seen set under "sends the same message". Observations only depend on
/// the messages available, so this quotient is a bisimulation of the MFDO graph.
fn message_closure(view: &MfdoView, s: &Seen) -> Seen {
    let mut msgs = FixedBitSet::with_capacity(view.message_of.iter().max().map_or(0, |m| m + 1));
    for q in s.ones() {
        msgs.insert(view.message_of[q]);
    }
    let mut out = FixedBitSet::with_capacity(s.len());
    for (q, &m) in view.message_of.iter().enumerate() {
        if msgs.contains(m) {
            out.insert(q);
        }
    }
    out
}

/// Replaces an observation of `o` by an equivalent one (same receive, same
/// endpoints) whose observed state is actually in `seen`.
fn concrete_observation(view: &MfdoView, t: TransId, seen: &Seen) -> TransId {
    let Rule::Observe { from, obs, to } = view.mfdo.transitions[t].rule else { return t };
    if seen.contains(obs) {
        return t;
    }
    (0..view.mfdo.transitions.len())
        .find(|&u| {
            view.receive_of[u] == view.receive_of[t]
                && matches!(view.mfdo.transitions[u].rule, Rule::Observe { from: f, obs: o, to: g } if f == from && g == to && seen.contains(o))
        })
        .unwrap_or(t)
}

pub fn do_star_graph(view: &MfdoView, roots: &[Multiset], budget: usize) -> Result<ReachGraph> {
    let q = &view.mfdo;
    let mut g = ReachGraph::default();
    for r in roots {
        let node = Node { config: Configuration::of_agents(q, r.clone()), seen: Some(message_closure(view, &support_set(r))) };
        let (i, _) = g.intern(node);
        if !g.roots.contains(&i) {
            g.roots.push(i);
        }
    }
    let mut head = 0;
    while head < g.nodes.len() {
        let node = g.nodes[head].clone();
        let mut succ = Vec::new();
        for t in 0..q.transitions.len() {
            let mut c = node.config.clone();
            let mut seen = node.seen.clone();
            if q.fire(t, &mut c, seen.as_mut()) {
                let seen = seen.map(|s| message_closure(view, &s));
                succ.push((t, Node { config: c, seen }));
            }
        }
        let fresh = message_closure(view, &support_set(&node.config.agents));
        if node.seen.as_ref() != Some(&fresh) {
            succ.push((RESET, Node { config: node.config.clone(), seen: Some(fresh) }));
        }
        for (t, n) in succ {
            let (j, new) = g.intern(n);
            if new && g.nodes.len() > budget {
                return Err(Error::Budget { budget });
            }
            g.edges[head].push((t, j));
        }
        head += 1;
    }
    Ok(g)
}

/// Result of searching a graph for a root that can reach a bad bottom component.
struct BadPath {
    root: usize,
    labels: Vec<TransId>,
    target: usize,
}

/// For each root (node, expected value), checks whether a bottom SCC that is not a
/// stable consensus on the expected value is reachable; returns the first such path.
fn find_bad(p: &Protocol, g: &ReachGraph, roots: &[(usize, u8)]) -> Option<BadPath> {
    let a = bottom_scc_analysis(p, g);
    let mut reach_bad = [vec![false; a.sccs.len()], vec![false; a.sccs.len()]];
    for (i, comp) in a.sccs.iter().enumerate() {
        for b in 0..2u8 {
            let bad = if a.is_bottom(i) {
                a.consensus[i] != Some(b)
            } else {
                comp.iter().any(|&u| g.edges[u].iter().any(|&(_, v)| a.scc_of[v] != i && reach_bad[b as usize][a.scc_of[v]]))
            };
            reach_bad[b as usize][i] = bad;
        }
    }
    for (ri, &(root, b)) in roots.iter().enumerate() {
        if !reach_bad[b as usize][a.scc_of[root]] {
            continue;
        }
        let is_target = |u: usize| {
            let s = a.scc_of[u];
            a.is_bottom(s) && a.consensus[s] != Some(b) && p.consensus_of(&g.nodes[u].config.agents) != Some(b)
        };
        let mut prev: Vec<Option<(usize, TransId)>> = vec![None; g.len()];
        let mut visited = vec![false; g.len()];
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(u) = queue.pop_front() {
            if is_target(u) {
                let mut labels = Vec::new();
                let mut cur = u;
                while let Some((x, t)) = prev[cur] {
                    labels.push(t);
                    cur = x;
                }
                labels.reverse();
                return Some(BadPath { root: ri, labels, target: u });
            }
            for &(t, v) in &g.edges[u] {
                if !visited[v] {
                    visited[v] = true;
                    prev[v] = Some((u, t));
                    queue.push_back(v);
                }
            }
        }
        unreachable!("a reachable bad bottom component contains a target");
    }
    None
}

/// Converts a path of the delayed-observation graph into a DO run between
/// zero-message configurations, one MFDO segment per reset.
fn do_run_of_labels(p: &Protocol, view: &MfdoView, start: &Multiset, labels: &[TransId]) -> Result<Run> {
    let mut run = Run::new(Configuration::of_agents(p, start.clone()));
    let mut seg = Run::new(Configuration::of_agents(&view.mfdo, start.clone()));
    let mut cur = Configuration::of_agents(&view.mfdo, start.clone());
    let mut seen = support_set(start);
    let flush = |seg: &mut Run, run: &mut Run| -> Result<Multiset> {
        let end = view.mfdo.apply_run(seg)?.agents;
        let d = mfdo_run_to_do(p, view, seg)?;
        for &(t, k) in &d.steps {
            run.push(t, k);
        }
        *seg = Run::new(Configuration::of_agents(&view.mfdo, end.clone()));
        Ok(end)
    };
    for &t in labels {
        if t == RESET {
            flush(&mut seg, &mut run)?;
            seen = support_set(&cur.agents);
        } else {
            let t = concrete_observation(view, t, &seen);
            view.mfdo.fire(t, &mut cur, Some(&mut seen));
            seg.push(t, 1);
        }
    }
    flush(&mut seg, &mut run)?;
    Ok(run)
}

fn labels_to_run(start: &Configuration, labels: &[TransId]) -> Run {
    let mut r = Run::new(start.clone());
    for &t in labels {
        r.push(t, 1);
    }
    r
}

/// Builds the instance graph for a model and the witness run of a bad path.
struct InstanceGraph {
    graph: ReachGraph,
    view: Option<MfdoView>,
}

fn instance_graph(p: &Protocol, roots: &[Configuration], msg_cap: Option<u64>, budget: usize) -> Result<InstanceGraph> {
    match p.model {
        Model::PP | Model::IT | Model::IO | Model::MFDO => {
            Ok(InstanceGraph { graph: reach_graph_with_budget(p, roots, None, budget)?, view: None })
        }
        Model::DO => {
            if roots.iter().any(|c| !c.is_zero_message()) {
                return Err(Error::Invalid("DO instances start at zero-message configurations".into()));
            }
            let view = p.to_mfdo()?;
            let agents: Vec<Multiset> = roots.iter().map(|c| c.agents.clone()).collect();
            Ok(InstanceGraph { graph: do_star_graph(&view, &agents, budget)?, view: Some(view) })
        }
        Model::DT => {
            let cap = msg_cap.ok_or_else(|| Error::Invalid("DT instances need a message cap".into()))?;
            Ok(InstanceGraph { graph: reach_graph_with_budget(p, roots, Some(cap), budget)?, view: None })
        }
        m => Err(Error::Model(format!("no correctness verdicts for {m}"))),
    }
}

fn witness_of(p: &Protocol, ig: &InstanceGraph, start: &Configuration, bad: &BadPath) -> Result<Witness> {
    let target = &ig.graph.nodes[bad.target].config;
    let run = match &ig.view {
        Some(view) => do_run_of_labels(p, view, &start.agents, &bad.labels)?,
        None => labels_to_run(start, &bad.labels),
    };
    let bad_config = match &ig.view {
        Some(_) => Configuration::of_agents(p, target.agents.clone()),
        None => target.clone(),
    };
    Ok(Witness { input: None, expected: 0, run, bad: bad_config })
}

/// Single-instance correctness: every bottom SCC reachable from `c0` is a stable
/// b-consensus. DT instances are explored under a message cap and labeled bounded.
pub fn check_instance(p: &Protocol, c0: &Configuration, b: u8) -> Result<Verdict> {
    check_instance_capped(p, c0, b, None)
}

pub fn check_instance_capped(p: &Protocol, c0: &Configuration, b: u8, msg_cap: Option<u64>) -> Result<Verdict> {
    let cap = if p.model == Model::DT { Some(msg_cap.unwrap_or(2 * c0.num_agents().max(1))) } else { None };
    let ig = instance_graph(p, std::slice::from_ref(c0), cap, node_budget())?;
    let root = ig.graph.roots[0];
    let mut v = match find_bad(p, &ig.graph, &[(root, b)]) {
        None => Verdict::new(Status::Correct, CheckMethod::Kernel, c0.num_agents()),
        Some(bad) => {
            let mut w = witness_of(p, &ig, c0, &bad)?;
            w.expected = b;
            let mut v = Verdict::new(Status::Incorrect, CheckMethod::Kernel, c0.num_agents());
            v.witness = Some(w);
            v
        }
    };
    if let Some(cap) = cap {
        v.bounded = true;
        v.note = Some(format!("explored with at most {cap} messages in transit"));
    }
    Ok(v)
}

/// Outcome of a bounded sweep over input sizes.
enum Sweep {
    Found(Witness),
    Clean { largest: Option<u64> },
    Budget { largest: Option<u64>, size: u64 },
}

/// Checks all inputs of each size in `sizes` with one graph per size.
fn sweep(p: &Protocol, phi: &Predicate, sizes: std::ops::RangeInclusive<u64>, msg_cap: Option<u64>) -> Result<Sweep> {
    let budget = node_budget();
    let mut largest = None;
    for size in sizes {
        let inputs = multisets_of_size(p.inputs.len(), size);
        let roots: Vec<Configuration> = inputs.iter().map(|d| input_config(p, d)).collect();
        let cap = msg_cap.map(|c| c.max(2 * size));
        let ig = match instance_graph(p, &roots, cap, budget) {
            Ok(ig) => ig,
            Err(Error::Budget { .. }) => return Ok(Sweep::Budget { largest, size }),
            Err(e) => return Err(e),
        };
        // Roots may coincide when ι is not injective; keep the first input per node.
        let mut root_of: BTreeMap<usize, usize> = BTreeMap::new();
        let mut tagged = Vec::new();
        for (i, c) in roots.iter().enumerate() {
            let node = ig.graph.find_root(c);
            if root_of.insert(node, i).is_none() {
                tagged.push((node, phi.eval(&inputs[i])));
            }
        }
        // Inputs mapping to one configuration with different values are incorrect outright.
        for (i, c) in roots.iter().enumerate() {
            let node = ig.graph.find_root(c);
            let first = root_of[&node];
            if phi.eval(&inputs[i]) != phi.eval(&inputs[first]) {
                let w = Witness {
                    input: Some(inputs[i].clone()),
                    expected: phi.eval(&inputs[i]),
                    run: Run::new(c.clone()),
                    bad: c.clone(),
                };
                return Ok(Sweep::Found(w));
            }
        }
        if let Some(bad) = find_bad(p, &ig.graph, &tagged) {
            let (node, expected) = tagged[bad.root];
            let i = root_of[&node];
            let mut w = witness_of(p, &ig, &roots[i], &bad)?;
            w.input = Some(inputs[i].clone());
            w.expected = expected;
            return Ok(Sweep::Found(w));
        }
        largest = Some(size);
    }
    Ok(Sweep::Clean { largest })
}

impl ReachGraph {
    /// Index of the root node holding configuration `c` (ignoring seen sets).
    fn find_root(&self, c: &Configuration) -> usize {
        *self
            .roots
            .iter()
            .find(|&&r| self.nodes[r].config.agents == c.agents)
            .expect("every root configuration was interned")
    }
}

/// The constraints of the inclusion `post*(I_b) ⊆ pre*(Stab_b)` for one b.
struct Pipeline {
    post: Constraint,
    pre_stab: Constraint,
}

fn pipeline(p: &Protocol, phi: &Predicate, b: u8) -> Result<Pipeline> {
    let cp = closure_protocol(p)?;
    let ib = initial_set(p, phi, b)?;
    let post = post_star(&cp, &ib, Method::Fixpoint)?;
    let stab = stable_set(p, b)?;
    let pre_stab = pre_star(&cp, &stab, Method::Fixpoint)?;
    Ok(Pipeline { post, pre_stab })
}

/// Parts of `c` outside the union of `ds`, as disjoint cubes.
fn uncovered(c: &Cube, ds: &[Cube], out: &mut Vec<Cube>) {
    if c.is_empty() {
        return;
    }
    let Some(i) = ds.iter().position(|d| !c.intersect(d).is_empty()) else {
        out.push(c.clone());
        return;
    };
    let d = &ds[i];
    let mut rest = c.clone();
    for q in 0..c.dim() {
        if rest.lower[q] < d.lower[q] {
            uncovered(&rest.clone().at_most(q, d.lower[q] - 1), &ds[i + 1..], out);
        }
        if d.upper[q] != INF && rest.upper[q] > d.upper[q] {
            uncovered(&rest.clone().at_least(q, d.upper[q] + 1), &ds[i + 1..], out);
        }
        rest = rest.at_least(q, d.lower[q]).at_most(q, d.upper[q]);
    }
}

/// A member with at least two agents of `post ∖ pre_stab`, if any.
fn violation(pl: &Pipeline) -> Option<Multiset> {
    let mut pieces = Vec::new();
    for c in pl.post.cubes() {
        uncovered(c, pl.pre_stab.cubes(), &mut pieces);
    }
    let dim = pl.post.dim();
    Constraint::from_cubes(dim, pieces).ok()?.population_member()
}

/// Worst-case bound on the lower norm of `post*(I_b) ∩ ¬pre*(Stab_b)` from input norms alone.
pub fn worst_case_bound(p: &Protocol, phi: &Predicate) -> u128 {
    let n = p.num_states() as u128;
    let k = p.inputs.len() as u128;
    let l_phi = phi.constraint.lnorm() as u128;
    let u_phi = phi.constraint.unorm() as u128;
    // I_0 is a complement over Σ: lnorm ≤ k·unorm + k.
    let l_init = l_phi.max(k * u_phi + k);
    let stab_u = n * n + n.pow(4);
    l_init + n.pow(3) + n * stab_u + n
}

/// All-instance correctness for IO, MFDO and DO protocols.
///
/// `Symbolic` decides the inclusion `post*(I_b) ⊆ pre*(Stab_b)` on counting
/// constraints and then extracts a witness by a sweep at the violating size.
/// `WitnessBound` sweeps every size up to the lower norm of the violation set.
/// `Kernel` sweeps sizes `2..=max_size` and is bounded.
pub fn check_correct(p: &Protocol, phi: &Predicate, method: CheckMethod, max_size: Option<u64>) -> Result<Verdict> {
    if !matches!(p.model, Model::IO | Model::MFDO | Model::DO) {
        if method != CheckMethod::Kernel {
            return Err(Error::Model(format!("{} protocols only support the bounded kernel mode", p.model)));
        }
    }
    if phi.constraint.dim() != p.inputs.len() {
        return Err(Error::Invalid("predicate dimension does not match the input alphabet".into()));
    }
    let worst = worst_case_bound(p, phi);
    match method {
        CheckMethod::Kernel => {
            let max = max_size.ok_or_else(|| Error::Invalid("kernel mode needs a maximal size".into()))?;
            let cap = (p.model == Model::DT).then_some(2 * max);
            let mut v = from_sweep(sweep(p, phi, 2..=max.max(2), cap)?, CheckMethod::Kernel, max);
            v.bounded = v.status == Status::Correct;
            v.worst_case_bound = Some(worst);
            Ok(v)
        }
        CheckMethod::Symbolic => {
            let mut pls = Vec::new();
            for b in 0..2u8 {
                match pipeline(p, phi, b) {
                    Ok(pl) => pls.push(pl),
                    Err(Error::SoundUnderapprox(msg)) => {
                        let mut v = Verdict::new(Status::Inconclusive, CheckMethod::Symbolic, 0);
                        v.note = Some(msg);
                        v.worst_case_bound = Some(worst);
                        return Ok(v);
                    }
                    Err(e) => return Err(e),
                }
            }
            for pl in &pls {
                if let Some(m) = violation(pl) {
                    let s = m.size();
                    let mut v = from_sweep(sweep(p, phi, s..=s, None)?, CheckMethod::Symbolic, s);
                    if v.status == Status::Correct {
                        return Err(Error::Invalid(format!(
                            "symbolic violation of size {s} has no explicit witness"
                        )));
                    }
                    v.worst_case_bound = Some(worst);
                    return Ok(v);
                }
            }
            let mut v = Verdict::new(Status::Correct, CheckMethod::Symbolic, 0);
            v.worst_case_bound = Some(worst);
            Ok(v)
        }
        CheckMethod::WitnessBound => {
            let mut bound: Option<u64> = Some(0);
            for b in 0..2u8 {
                match pipeline(p, phi, b) {
                    Ok(pl) => {
                        let comp = pl.pre_stab.complement();
                        bound = bound.map(|x| x.max(pl.post.lnorm() + comp.lnorm()));
                    }
                    Err(Error::SoundUnderapprox(_)) => bound = None,
                    Err(e) => return Err(e),
                }
            }
            let bound = match bound {
                Some(b) => b.max(2),
                None => u64::try_from(worst).unwrap_or(u64::MAX),
            };
            let mut v = from_sweep(sweep(p, phi, 2..=bound, None)?, CheckMethod::WitnessBound, bound);
            v.worst_case_bound = Some(worst);
            Ok(v)
        }
    }
}

fn from_sweep(s: Sweep, method: CheckMethod, bound: u64) -> Verdict {
    match s {
        Sweep::Found(w) => {
            let mut v = Verdict::new(Status::Incorrect, method, bound);
            v.largest_size_checked = Some(w.run.start.num_agents());
            v.witness = Some(w);
            v
        }
        Sweep::Clean { largest } => {
            let mut v = Verdict::new(Status::Correct, method, bound);
            v.largest_size_checked = largest;
            v
        }
        Sweep::Budget { largest, size } => {
            let mut v = Verdict::new(Status::Inconclusive, method, bound);
            v.largest_size_checked = largest;
            v.note = Some(format!("node budget exceeded at size {size}"));
            v
        }
    }
}

/// All-instance correctness of an IO protocol.
pub fn check_correct_io(p: &Protocol, phi: &Predicate, method: CheckMethod) -> Result<Verdict> {
    if p.model != Model::IO {
        return Err(Error::Model(format!("expected an IO protocol, got {}", p.model)));
    }
    check_correct(p, phi, method, None)
}

/// All-instance correctness of a DO protocol through zero-message closures.
pub fn check_correct_do(p: &Protocol, phi: &Predicate, method: CheckMethod) -> Result<Verdict> {
    if p.model != Model::DO {
        return Err(Error::Model(format!("expected a DO protocol, got {}", p.model)));
    }
    check_correct(p, phi, method, None)
}

/// A saturated configuration `MS(Z)` with the run producing it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Saturated {
    pub base: Configuration,
    pub result: Configuration,
    pub log: Run,
}

/// States reachable from the populated states by receiving present messages,
/// with BFS parents `(previous state, receive transition)`.
fn receive_bfs(p: &Protocol, agents: &Multiset, present: &FixedBitSet) -> Vec<Option<Option<(StateId, TransId)>>> {
    let n = p.num_states();
    let mut parent: Vec<Option<Option<(StateId, TransId)>>> = vec![None; n];
    let mut queue = VecDeque::new();
    for q in agents.support() {
        parent[q] = Some(None);
        queue.push_back(q);
    }
    while let Some(q) = queue.pop_front() {
        for (t, tr) in p.transitions.iter().enumerate() {
            if let Rule::Receive { from, msg, to } = tr.rule {
                if from == q && to != q && present.contains(msg) && parent[to].is_none() {
                    parent[to] = Some(Some((q, t)));
                    queue.push_back(to);
                }
            }
        }
    }
    parent
}

fn present_messages(c: &Configuration) -> FixedBitSet {
    support_set(&c.messages)
}

/// Saturation: every populated state emits `|Z||Q| + |Q|²` messages; then, while
/// some state reachable through receives of present messages has not emitted, an
/// agent travels there along a shortest receive path and emits.
pub fn saturate(p: &Protocol, z: &Configuration) -> Result<Saturated> {
    if p.model != Model::DO {
        return Err(Error::Model(format!("expected a DO protocol, got {}", p.model)));
    }
    if !z.is_zero_message() {
        return Err(Error::Invalid("saturation starts at a zero-message configuration".into()));
    }
    let n = p.num_states() as u64;
    let amount = z.num_agents() * n + n * n;
    let sends = p.sends_from();
    let mut c = z.clone();
    let mut log = Run::new(z.clone());
    let mut emitted = FixedBitSet::with_capacity(p.num_states());
    let emit = |q: StateId, c: &mut Configuration, log: &mut Run| -> Result<()> {
        let t = *sends[q].first().ok_or_else(|| Error::Model(format!("state {} sends nothing", p.states[q])))?;
        for _ in 0..amount {
            p.fire(t, c, None);
        }
        log.push(t, amount);
        Ok(())
    };
    let populated: Vec<StateId> = z.agents.support().collect();
    for q in populated {
        emit(q, &mut c, &mut log)?;
        emitted.insert(q);
    }
    loop {
        let parent = receive_bfs(p, &c.agents, &present_messages(&c));
        let Some(r) = (0..p.num_states()).find(|&q| parent[q].is_some() && !emitted.contains(q)) else { break };
        let mut path = Vec::new();
        let mut cur = r;
        while let Some(Some((prev, t))) = parent[cur] {
            path.push(t);
            cur = prev;
        }
        path.reverse();
        for t in path {
            if !p.fire(t, &mut c, None) {
                return Err(Error::Invalid("saturation path is not enabled".into()));
            }
            log.push(t, 1);
        }
        emit(r, &mut c, &mut log)?;
        emitted.insert(r);
    }
    Ok(Saturated { base: z.clone(), result: c, log })
}

/// Checks the saturation properties: the log replays from the base to the result,
/// every present message type has at least `|Z||Q|` copies, and every state reachable
/// through receives of present messages emits a present message type.
pub fn check_saturation(p: &Protocol, s: &Saturated) -> std::result::Result<(), String> {
    let end = p.apply_run(&s.log).map_err(|e| e.to_string())?;
    if end != s.result {
        return Err("log does not reach the saturated configuration".into());
    }
    let need = s.base.num_agents() * p.num_states() as u64;
    for m in s.result.messages.support() {
        if s.result.messages.get(m) < need {
            return Err(format!("message {} has fewer than {need} copies", p.messages[m]));
        }
    }
    let present = present_messages(&s.result);
    let parent = receive_bfs(p, &s.result.agents, &present);
    for q in 0..p.num_states() {
        if parent[q].is_some() {
            let m: Option<MsgId> = p.do_message_of(q);
            if m.is_some_and(|m| !present.contains(m)) {
                return Err(format!("reachable state {} emits an absent message", p.states[q]));
            }
        }
    }
    Ok(())
}

/// Whether the agents of `ms` can be redistributed onto `target` by receives of
/// present message types only, decided by an integer max-flow over `|Q|` layers.
pub fn flow_check(p: &Protocol, ms: &Saturated, target: &Multiset) -> Result<bool> {
    let agents = &ms.result.agents;
    if agents.size() != target.size() || target.dim() != p.num_states() {
        return Err(Error::Invalid("flow check needs equal agent counts".into()));
    }
    let n = p.num_states();
    let inf = target.size() + 1;
    let present = present_messages(&ms.result);
    let mut g: DiGraph<(), u64> = DiGraph::new();
    let source = g.add_node(());
    let sink = g.add_node(());
    let layer: Vec<Vec<NodeIndex>> = (0..n).map(|_| (0..n).map(|_| g.add_node(())).collect()).collect();
    for q in 0..n {
        if agents.get(q) > 0 {
            g.add_edge(source, layer[0][q], agents.get(q));
        }
        if target.get(q) > 0 {
            g.add_edge(layer[n - 1][q], sink, target.get(q));
        }
    }
    for i in 0..n - 1 {
        for q in 0..n {
            g.add_edge(layer[i][q], layer[i + 1][q], inf);
        }
        for tr in &p.transitions {
            if let Rule::Receive { from, msg, to } = tr.rule {
                if from != to && present.contains(msg) {
                    g.add_edge(layer[i][from], layer[i + 1][to], inf);
                }
            }
        }
    }
    let (flow, _) = ford_fulkerson(&g, source, sink);
    Ok(flow == target.size())
}

/// Agent configurations reachable at zero messages from `z`, in BFS order, with
/// the MFDO path (as labels) to each.
fn zm_reachable(view: &MfdoView, z: &Multiset, budget: usize) -> Result<(ReachGraph, Vec<(Multiset, usize)>)> {
    let g = reach_graph_with_budget(&view.mfdo, &[Configuration::of_agents(&view.mfdo, z.clone())], None, budget)?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, node) in g.nodes.iter().enumerate() {
        if seen.insert(node.config.agents.clone()) {
            out.push((node.config.agents.clone(), i));
        }
    }
    Ok((g, out))
}

/// Non-computation check for one DO input through saturation and max-flow: the
/// instance does not compute `b` iff some zero-message `Z` reachable from the start
/// reaches a non-b-consensus `Z_nc`, and every zero-message `Z'` reachable from `Z`
/// satisfies `flow_check(saturate(Z'), Z)`.
pub fn check_instance_do_sigma2(p: &Protocol, c0: &Configuration, b: u8) -> Result<Verdict> {
    if p.model != Model::DO {
        return Err(Error::Model(format!("expected a DO protocol, got {}", p.model)));
    }
    if !c0.is_zero_message() {
        return Err(Error::Invalid("DO instances start at zero-message configurations".into()));
    }
    let view = p.to_mfdo()?;
    let budget = node_budget();
    let (g0, reach0) = zm_reachable(&view, &c0.agents, budget)?;
    let mut sat_cache: BTreeMap<Vec<u64>, Saturated> = BTreeMap::new();
    for (z, zi) in &reach0 {
        let (gz, reach_z) = zm_reachable(&view, z, budget)?;
        let Some((znc, nci)) = reach_z.iter().find(|(x, _)| p.consensus_of(x) != Some(b)) else { continue };
        let mut all_return = true;
        for (z2, _) in &reach_z {
            let key = z2.counts().to_vec();
            if !sat_cache.contains_key(&key) {
                let s = saturate(p, &Configuration::of_agents(p, z2.clone()))?;
                sat_cache.insert(key.clone(), s);
            }
            if !flow_check(p, &sat_cache[&key], z)? {
                all_return = false;
                break;
            }
        }
        if all_return {
            let to_z = g0.path(g0.roots[0], *zi).expect("reachable");
            let to_nc = gz.path(gz.roots[0], *nci).expect("reachable");
            let mut labels = to_z;
            labels.push(RESET);
            labels.extend(to_nc);
            let run = do_run_of_labels(p, &view, &c0.agents, &labels)?;
            let mut v = Verdict::new(Status::Incorrect, CheckMethod::Kernel, c0.num_agents());
            v.witness = Some(Witness { input: None, expected: b, run, bad: Configuration::of_agents(p, znc.clone()) });
            return Ok(v);
        }
    }
    Ok(Verdict::new(Status::Correct, CheckMethod::Kernel, c0.num_agents()))
}
