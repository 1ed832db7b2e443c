//! VASS reachability queries, their ±1 normal form, and the DT protocol whose
//! single-instance correctness fails exactly when the query holds.

use super::lines;
use crate::error::{Error, Result};
use crate::format::valid_ident;
use crate::multiset::Multiset;
use crate::protocol::{Model, MsgId, Protocol, Rule, StateId};
use crate::reach::reach_graph;
use crate::semantics::{Configuration, Run};
use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

/// A vector addition system with states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vass {
    pub states: Vec<String>,
    pub dim: usize,
    pub transitions: Vec<(usize, Vec<i64>, usize)>,
}

/// `(from, v0) ->* (to, vf)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VassQuery {
    pub from: usize,
    pub v0: Vec<u64>,
    pub to: usize,
    pub vf: Vec<u64>,
}

impl Vass {
    /// Every transition changes exactly one component by ±1.
    pub fn is_pm1(&self) -> bool {
        self.transitions
            .iter()
            .all(|(_, v, _)| v.iter().filter(|&&x| x != 0).count() == 1 && v.iter().all(|&x| x.abs() <= 1))
    }

    /// Reachability by breadth-first search with every counter kept at most `cap`.
    pub fn reachable_capped(&self, q: &VassQuery, cap: u64) -> bool {
        let start = (q.from, q.v0.clone());
        if q.v0.iter().any(|&x| x > cap) {
            return false;
        }
        let mut seen = HashSet::from([start.clone()]);
        let mut queue = VecDeque::from([start]);
        while let Some((s, v)) = queue.pop_front() {
            if s == q.to && v == q.vf {
                return true;
            }
            for (from, d, to) in &self.transitions {
                if *from != s {
                    continue;
                }
                let next: Option<Vec<u64>> = v
                    .iter()
                    .zip(d)
                    .map(|(&x, &dx)| {
                        let y = x as i64 + dx;
                        (y >= 0 && y as u64 <= cap).then_some(y as u64)
                    })
                    .collect();
                if let Some(next) = next {
                    if seen.insert((*to, next.clone())) {
                        queue.push_back((*to, next));
                    }
                }
            }
        }
        false
    }
}

fn parse_vector(line: &super::Line<'_>, i: usize, dim: usize) -> Result<Vec<i64>> {
    let t = line.tok(i)?;
    let inner = t
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| line.err(i, format!("expected a vector `(v1,...,vk)`, found `{t}`")))?;
    let v: std::result::Result<Vec<i64>, _> =
        inner.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse::<i64>()).collect();
    let v = v.map_err(|_| line.err(i, format!("bad vector `{t}`")))?;
    if v.len() != dim {
        return Err(line.err(i, format!("vector `{t}` does not have dimension {dim}")));
    }
    Ok(v)
}

/// Parses `dim k`, `state q ...`, `trans q (dv1,...,dvk) q'` and `query q0 v0 -> q vf`.
pub fn parse_vass(text: &str) -> Result<(Vass, VassQuery)> {
    let mut dim = None;
    let mut states: Vec<String> = Vec::new();
    let mut transitions = Vec::new();
    let mut query = None;
    for line in lines(text) {
        let state = |i: usize, states: &[String]| -> Result<usize> {
            let t = line.tok(i)?;
            states.iter().position(|s| s == t).ok_or_else(|| line.err(i, format!("unknown state `{t}`")))
        };
        let need_dim = || dim.ok_or_else(|| line.err(0, "`dim` must come first"));
        match line.tok(0)? {
            "dim" => dim = Some(line.num::<usize>(1)?),
            "state" => {
                for (i, &(_, t)) in line.toks.iter().enumerate().skip(1) {
                    if !valid_ident(t) || states.iter().any(|s| s == t) {
                        return Err(line.err(i, format!("invalid or duplicate state `{t}`")));
                    }
                    states.push(t.to_string());
                }
            }
            "trans" => {
                let d = need_dim()?;
                transitions.push((state(1, &states)?, parse_vector(&line, 2, d)?, state(3, &states)?));
            }
            "query" => {
                let d = need_dim()?;
                let nonneg = |v: Vec<i64>, i: usize| -> Result<Vec<u64>> {
                    v.into_iter().map(|x| u64::try_from(x).map_err(|_| line.err(i, "negative counter"))).collect()
                };
                let from = state(1, &states)?;
                let v0 = nonneg(parse_vector(&line, 2, d)?, 2)?;
                if line.tok(3)? != "->" {
                    return Err(line.err(3, "expected `->`"));
                }
                let to = state(4, &states)?;
                let vf = nonneg(parse_vector(&line, 5, d)?, 5)?;
                query = Some(VassQuery { from, v0, to, vf });
            }
            t => return Err(line.err(0, format!("unknown keyword `{t}`"))),
        }
    }
    let dim = dim.ok_or_else(|| Error::parse(1, 1, "missing `dim` line"))?;
    let query = query.ok_or_else(|| Error::parse(1, 1, "missing `query` line"))?;
    Ok((Vass { states, dim, transitions }, query))
}

fn fresh(names: &mut Vec<String>, base: &str) -> usize {
    let mut name = base.to_string();
    while names.contains(&name) {
        name.push('\'');
    }
    names.push(name);
    names.len() - 1
}

/// The ±1 normal form: fresh `r0`/`r` states with `r0 -v0-> q0` and `q -(-vf)-> r`,
/// every transition split into unit steps through fresh states (components in
/// order), and zero vectors replaced by `1++` then `1--`.
/// Returns the new system with `r0` and `r`, which satisfy
/// `(q0, v0) ->* (q, vf)` iff `(r0, 0) ->* (r, 0)`.
pub fn vass_to_pm1(v: &Vass, q: &VassQuery) -> Result<(Vass, usize, usize)> {
    if v.dim == 0 {
        return Err(Error::Invalid("dimension must be at least 1".into()));
    }
    let mut names = v.states.clone();
    let r0 = fresh(&mut names, "r0");
    let r = fresh(&mut names, "r");
    let mut all: Vec<(usize, Vec<i64>, usize)> = vec![(r0, q.v0.iter().map(|&x| x as i64).collect(), q.from)];
    all.extend(v.transitions.iter().cloned());
    all.push((q.to, q.vf.iter().map(|&x| -(x as i64)).collect(), r));
    let mut out = Vec::new();
    for (t, (from, w, to)) in all.into_iter().enumerate() {
        let mut steps = Vec::new();
        for (c, &x) in w.iter().enumerate() {
            for _ in 0..x.unsigned_abs() {
                let mut e = vec![0; v.dim];
                e[c] = x.signum();
                steps.push(e);
            }
        }
        if steps.is_empty() {
            let mut up = vec![0; v.dim];
            up[0] = 1;
            let mut down = vec![0; v.dim];
            down[0] = -1;
            steps = vec![up, down];
        }
        let mut cur = from;
        let last = steps.len() - 1;
        for (j, e) in steps.into_iter().enumerate() {
            let next = if j == last { to } else { fresh(&mut names, &format!("u{t}_{}", j + 1)) };
            out.push((cur, e, next));
            cur = next;
        }
    }
    Ok((Vass { states: names, dim: v.dim, transitions: out }, r0, r))
}

/// The generated DT protocol with its layout.
#[derive(Clone, Debug)]
pub struct Pm1Protocol {
    pub protocol: Protocol,
    pub c0: Configuration,
    /// States projecting to the VASS target `r` and to the spectator.
    pub target: BTreeSet<StateId>,
    pub spectator: BTreeSet<StateId>,
    /// Counter messages `1..k`.
    pub counters: Vec<MsgId>,
}

impl Pm1Protocol {
    /// One agent at `r`, the spectator untouched, and no counter messages.
    pub fn is_zero_pool_target(&self, c: &Configuration) -> bool {
        let agents = c.agents.size();
        let at_r: u64 = self.target.iter().map(|&q| c.agents.get(q)).sum();
        let spect: u64 = self.spectator.iter().map(|&q| c.agents.get(q)).sum();
        agents == 2 && at_r == 1 && spect == 1 && self.counters.iter().all(|&m| c.messages.get(m) == 0)
    }

    /// Bounded search for a zero-pool target configuration, with at most `msg_cap`
    /// messages in transit; returns a run reaching it.
    pub fn find_zero_pool_target(&self, msg_cap: u64) -> Result<Option<Run>> {
        let g = reach_graph(&self.protocol, std::slice::from_ref(&self.c0), Some(msg_cap))?;
        let Some(target) = (0..g.len()).find(|&i| self.is_zero_pool_target(&g.nodes[i].config)) else {
            return Ok(None);
        };
        let labels = g.path(g.roots[0], target).expect("reachable");
        let mut run = Run::new(self.c0.clone());
        for t in labels {
            run.push(t, 1);
        }
        Ok(Some(run))
    }
}

/// The nondeterministic DT protocol simulating a ±1-VASS in one agent, with the
/// counters in the message pool, the `r_bot`/`r_top` oscillation at `r`, the
/// absorbing `top` state, and an inert spectator agent in `bot`.
///
/// The spectator keeps `bot` when it receives the oscillation message `eps`, so
/// the oscillation stays non-converging; any other message turns it into `top`.
/// With `determinize`, the round-counter construction yields a deterministic protocol.
pub fn pm1_to_dt(v: &Vass, r0: usize, r: usize, determinize: bool) -> Result<Pm1Protocol> {
    if !v.is_pm1() {
        return Err(Error::Invalid("not a ±1-VASS".into()));
    }
    let mut names = v.states.clone();
    let r_top = fresh(&mut names, "r_top");
    let r_bot = fresh(&mut names, "r_bot");
    let top = fresh(&mut names, "top");
    let bot = fresh(&mut names, "bot");
    let mut msgs: Vec<String> = (1..=v.dim).map(|i| format!("c{i}")).collect();
    let eps = fresh(&mut msgs, "eps");
    let m_top = fresh(&mut msgs, "m_top");
    let mut p = Protocol::new(Model::DT, names, msgs);
    p.nondeterministic = true;
    let nq = v.states.len();
    let unit = |d: &[i64]| -> (usize, i64) {
        let c = d.iter().position(|&x| x != 0).expect("±1 vector");
        (c, d[c])
    };
    for q in 0..nq {
        for (from, d, to) in &v.transitions {
            let (c, s) = unit(d);
            if *from == q && s > 0 {
                p.add("", Rule::Send { from: q, to: *to, msg: c });
            }
        }
        if q == r {
            p.add("", Rule::Send { from: r, to: r_bot, msg: eps });
        }
    }
    p.add("", Rule::Send { from: r_bot, to: r_top, msg: eps });
    p.add("", Rule::Send { from: r_top, to: r_bot, msg: eps });
    p.add("", Rule::Send { from: top, to: top, msg: m_top });
    for q in 0..nq {
        for m in 0..p.num_messages() {
            let targets: Vec<usize> = v
                .transitions
                .iter()
                .filter(|(from, d, _)| *from == q && m < v.dim && unit(d) == (m, -1))
                .map(|t| t.2)
                .collect();
            if targets.is_empty() {
                p.add("", Rule::Receive { from: q, msg: m, to: top });
            }
            for to in targets {
                p.add("", Rule::Receive { from: q, msg: m, to });
            }
        }
    }
    for q in [r_top, r_bot] {
        for m in 0..p.num_messages() {
            p.add("", Rule::Receive { from: q, msg: m, to: if m == eps { r_top } else { top } });
        }
    }
    for m in 0..p.num_messages() {
        p.add("", Rule::Receive { from: top, msg: m, to: top });
        p.add("", Rule::Receive { from: bot, msg: m, to: if m == eps { bot } else { top } });
    }
    p.add_input(&p.states[r0].clone(), r0);
    p.add_input("spectator", bot);
    p.output = vec![1; p.num_states()];
    p.output[r_bot] = 0;
    p.output[bot] = 0;
    let counters: Vec<MsgId> = (0..v.dim).collect();
    if !determinize {
        let c0 = Configuration::of_agents(&p, Multiset::from_elems(p.num_states(), &[r0, bot]));
        return Ok(Pm1Protocol { protocol: p, c0, target: BTreeSet::from([r]), spectator: BTreeSet::from([bot]), counters });
    }
    let (d, lift) = determinize_dt(&p);
    let c0 = Configuration::of_agents(&d, Multiset::from_elems(d.num_states(), &[lift(r0, 1, 1), lift(bot, 1, 1)]));
    let rounds = p.num_states() * p.num_messages();
    let all = |q: StateId| -> BTreeSet<StateId> {
        (1..=rounds).flat_map(|i| [lift(q, i, 0), lift(q, i, 1)]).collect()
    };
    Ok(Pm1Protocol { target: all(r), spectator: all(bot), protocol: d, c0, counters })
}

/// Round-counter determinization of a nondeterministic DT protocol. States are
/// `(q, i, b)` with `i ∈ 1..=|Q||M|` choosing among the sorted alternatives and
/// `b` marking a pending `increment` emission. Alternatives are sorted by names.
/// Returns the protocol and the map from `(q, i, b)` to its state id.
pub fn determinize_dt(p: &Protocol) -> (Protocol, impl Fn(StateId, usize, u8) -> StateId) {
    let (nq, nm) = (p.num_states(), p.num_messages());
    let n = nq * nm;
    let lift = move |q: StateId, i: usize, b: u8| -> StateId { (q * n + (i - 1)) * 2 + b as usize };
    let mut names = Vec::with_capacity(nq * n * 2);
    for q in 0..nq {
        for i in 1..=n {
            for b in 0..2 {
                names.push(format!("{}~{i}~{b}", p.states[q]));
            }
        }
    }
    let mut msgs = p.messages.clone();
    let incr = fresh(&mut msgs, "increment");
    let mut d = Protocol::new(Model::DT, names, msgs);
    let mut sends: BTreeMap<StateId, Vec<(MsgId, StateId)>> = BTreeMap::new();
    let mut recvs: BTreeMap<(StateId, MsgId), Vec<StateId>> = BTreeMap::new();
    for t in &p.transitions {
        match t.rule {
            Rule::Send { from, to, msg } => sends.entry(from).or_default().push((msg, to)),
            Rule::Receive { from, msg, to } => recvs.entry((from, msg)).or_default().push(to),
            _ => {}
        }
    }
    for v in sends.values_mut() {
        v.sort_by(|a, b| (&p.messages[a.0], &p.states[a.1]).cmp(&(&p.messages[b.0], &p.states[b.1])));
        v.dedup();
    }
    for v in recvs.values_mut() {
        v.sort_by(|a, b| p.states[*a].cmp(&p.states[*b]));
        v.dedup();
    }
    for q in 0..nq {
        for i in 1..=n {
            if let Some(opts) = sends.get(&q) {
                let (m, to) = opts[i % opts.len()];
                d.add("", Rule::Send { from: lift(q, i, 0), to: lift(to, i, 0), msg: m });
            }
            d.add("", Rule::Send { from: lift(q, i, 1), to: lift(q, i, 0), msg: incr });
            for b in 0..2u8 {
                for m in 0..nm {
                    if let Some(opts) = recvs.get(&(q, m)) {
                        let to = opts[i % opts.len()];
                        d.add("", Rule::Receive { from: lift(q, i, b), msg: m, to: lift(to, i, b) });
                    }
                }
                d.add("", Rule::Receive { from: lift(q, i, b), msg: incr, to: lift(q, i % n + 1, 1) });
            }
        }
    }
    for (s, &q) in p.inputs.iter().zip(&p.init) {
        d.add_input(s, lift(q, 1, 1));
    }
    d.output = (0..nq).flat_map(|q| std::iter::repeat_n(p.output[q], 2 * n)).collect();
    (d, lift)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple() -> (Vass, VassQuery) {
        parse_vass("dim 2\nstate p q\ntrans p (2,-1) q\nquery p (0,1) -> q (2,0)\n").unwrap()
    }

    #[test]
    fn parse_and_oracle() {
        let (v, q) = simple();
        assert_eq!(v.transitions, vec![(0, vec![2, -1], 1)]);
        assert!(v.reachable_capped(&q, 5));
        let q2 = VassQuery { vf: vec![1, 0], ..q.clone() };
        assert!(!v.reachable_capped(&q2, 5));
        let e = parse_vass("dim 2\nstate p\ntrans p (1) p\nquery p (0,0) -> p (0,0)\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, col: 9, .. }), "{e:?}");
    }

    #[test]
    fn unit_chain() {
        let v = Vass { states: vec!["p".into(), "q".into()], dim: 2, transitions: vec![(0, vec![2, -1], 1)] };
        let q = VassQuery { from: 0, v0: vec![0, 0], to: 0, vf: vec![0, 0] };
        let (w, r0, r) = vass_to_pm1(&v, &q).unwrap();
        assert!(w.is_pm1());
        let chain: Vec<&Vec<i64>> = w.transitions.iter().filter(|t| w.states[t.0].starts_with("u1_") || w.states[t.2].starts_with("u1_")).map(|t| &t.1).collect();
        assert_eq!(chain, vec![&vec![1, 0], &vec![1, 0], &vec![0, -1]]);
        assert!(w.reachable_capped(&VassQuery { from: r0, v0: vec![0, 0], to: r, vf: vec![0, 0] }, 3));
    }

    #[test]
    fn equivalence_after_normal_form() {
        let (v, q) = simple();
        let (w, r0, r) = vass_to_pm1(&v, &q).unwrap();
        let zero = vec![0; 2];
        assert!(w.reachable_capped(&VassQuery { from: r0, v0: zero.clone(), to: r, vf: zero.clone() }, 6));
        let q2 = VassQuery { vf: vec![1, 0], ..q };
        let (w, r0, r) = vass_to_pm1(&v, &q2).unwrap();
        assert!(!w.reachable_capped(&VassQuery { from: r0, v0: zero.clone(), to: r, vf: zero }, 6));
    }

    #[test]
    fn protocol_search() {
        let v = Vass {
            states: vec!["r0".into(), "s".into(), "r".into()],
            dim: 1,
            transitions: vec![(0, vec![1], 1), (1, vec![-1], 2)],
        };
        let pm = pm1_to_dt(&v, 0, 2, false).unwrap();
        assert!(pm.protocol.validate().is_empty(), "{:?}", pm.protocol.validate());
        let run = pm.find_zero_pool_target(3).unwrap().unwrap();
        let end = pm.protocol.apply_run(&run).unwrap();
        assert!(pm.is_zero_pool_target(&end));
        let stuck = Vass { transitions: vec![(0, vec![1], 1), (1, vec![1], 2)], ..v };
        let pm = pm1_to_dt(&stuck, 0, 2, false).unwrap();
        assert!(pm.find_zero_pool_target(4).unwrap().is_none());
    }

    #[test]
    fn determinized_is_deterministic() {
        let v = Vass {
            states: vec!["r0".into(), "s".into(), "r".into()],
            dim: 1,
            transitions: vec![(0, vec![1], 1), (1, vec![-1], 2), (0, vec![1], 2)],
        };
        let pm = pm1_to_dt(&v, 0, 2, true).unwrap();
        assert!(!pm.protocol.nondeterministic);
        assert!(pm.protocol.validate().is_empty(), "{:?}", pm.protocol.validate().first());
    }
}
