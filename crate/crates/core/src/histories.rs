//! Trajectory histories: realizability, de-anonymization, pruning and shortening.
//!
//! A history is a multiset of equal-length trajectories, one per agent. Positions
//! are 0-based internally; step `i` goes from position `i` to `i + 1`.

use crate::error::{Error, Result};
use crate::multiset::Multiset;
use crate::protocol::{MfdoView, Model, Protocol, Rule, StateId, TransId};
use crate::semantics::{support_set, Configuration, Run, Seen};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Maximal number of positions of an explicitly stored history.
pub const HISTORY_CAP: usize = 100_000;

/// A multiset of equal-length trajectories, stored one trajectory per agent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct History {
    pub trajectories: Vec<Vec<StateId>>,
}

/// Outcome of a compatibility check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Compat {
    Compatible,
    /// The non-horizontal step of `trajectory` at `position` has no enabling transition.
    Incompatible { trajectory: usize, position: usize },
}

impl History {
    pub fn new(trajectories: Vec<Vec<StateId>>) -> Result<History> {
        if let Some(first) = trajectories.first() {
            if first.is_empty() || trajectories.iter().any(|t| t.len() != first.len()) {
                return Err(Error::Invalid("trajectories must be nonempty and of equal length".into()));
            }
            if first.len() > HISTORY_CAP {
                return Err(Error::HistoryTooLong { len: first.len(), cap: HISTORY_CAP });
            }
        }
        Ok(History { trajectories })
    }

    /// Number of positions.
    pub fn len(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.len())
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn width(&self) -> usize {
        self.trajectories.len()
    }

    /// The configuration at position `i`.
    pub fn config(&self, dim: usize, i: usize) -> Multiset {
        let mut m = Multiset::zeros(dim);
        for t in &self.trajectories {
            m.add(t[i], 1);
        }
        m
    }

    pub fn first_config(&self, dim: usize) -> Multiset {
        self.config(dim, 0)
    }

    pub fn last_config(&self, dim: usize) -> Multiset {
        self.config(dim, self.len() - 1)
    }

    /// Seen sets `S^0 ⊆ S^1 ⊆ …`: states visited at positions `0..=i`.
    pub fn seen_sets(&self, dim: usize) -> Vec<Seen> {
        let mut out = Vec::with_capacity(self.len());
        let mut s = Seen::with_capacity(dim);
        for i in 0..self.len() {
            for t in &self.trajectories {
                s.insert(t[i]);
            }
            out.push(s.clone());
        }
        out
    }

    /// Trajectories whose step `i` is non-horizontal.
    pub fn movers(&self, i: usize) -> Vec<usize> {
        (0..self.width()).filter(|&j| self.trajectories[j][i] != self.trajectories[j][i + 1]).collect()
    }

    /// Whether all non-horizontal steps at every position are equal.
    pub fn is_well_structured(&self) -> bool {
        (0..self.len().saturating_sub(1)).all(|i| {
            let mut step = None;
            self.trajectories.iter().all(|t| {
                if t[i] == t[i + 1] {
                    return true;
                }
                match step {
                    None => {
                        step = Some((t[i], t[i + 1]));
                        true
                    }
                    Some(s) => s == (t[i], t[i + 1]),
                }
            })
        })
    }

    /// Trajectory indices grouped by (initial, final) state.
    pub fn bunches(&self) -> BTreeMap<(StateId, StateId), Vec<usize>> {
        let mut out: BTreeMap<(StateId, StateId), Vec<usize>> = BTreeMap::new();
        let n = self.len();
        for (j, t) in self.trajectories.iter().enumerate() {
            out.entry((t[0], t[n - 1])).or_default().push(j);
        }
        out
    }

    pub fn select(&self, idx: &[usize]) -> History {
        History { trajectories: idx.iter().map(|&j| self.trajectories[j].clone()).collect() }
    }
}

/// Candidate transitions moving an agent from `q` to `q2`, with their observed state.
fn observation_transitions(p: &Protocol, q: StateId, q2: StateId) -> Vec<(TransId, StateId)> {
    p.transitions
        .iter()
        .enumerate()
        .filter_map(|(i, t)| match t.rule {
            Rule::Observe { from, obs, to } if from == q && to == q2 => Some((i, obs)),
            Rule::Pair { q1, q2: r, q3, q4 } if q1 == q3 && r == q && q4 == q2 => Some((i, q1)),
            _ => None,
        })
        .collect()
}

fn check_model(p: &Protocol) -> Result<()> {
    match p.model {
        Model::IO | Model::MFDO => Ok(()),
        m => Err(Error::Model(format!("histories need an IO or MFDO protocol, got {m}"))),
    }
}

/// Finds the enabling transition of step `i` (whose movers are `movers`), if any.
fn enabling_transition(
    p: &Protocol,
    h: &History,
    seen: &[Seen],
    i: usize,
    movers: &[usize],
) -> Option<TransId> {
    let t0 = &h.trajectories[movers[0]];
    let (q, q2) = (t0[i], t0[i + 1]);
    observation_transitions(p, q, q2).into_iter().find_map(|(t, o)| {
        let ok = if p.model == Model::MFDO {
            seen[i].contains(o)
        } else {
            h.trajectories.iter().any(|x| x[i] == o && x[i + 1] == o)
        };
        ok.then_some(t)
    })
}

/// Checks that every non-horizontal step has an enabling transition.
pub fn is_compatible(p: &Protocol, h: &History) -> Result<Compat> {
    check_model(p)?;
    if !h.is_well_structured() {
        return Err(Error::Invalid("history is not well-structured".into()));
    }
    let seen = if p.model == Model::MFDO { h.seen_sets(p.num_states()) } else { Vec::new() };
    for i in 0..h.len().saturating_sub(1) {
        let movers = h.movers(i);
        if movers.is_empty() {
            continue;
        }
        if enabling_transition(p, h, &seen, i, &movers).is_none() {
            return Ok(Compat::Incompatible { trajectory: movers[0], position: i + 1 });
        }
    }
    Ok(Compat::Compatible)
}

/// Turns a compatible well-structured history into a run, one block per position.
pub fn realize(p: &Protocol, h: &History) -> Result<Run> {
    check_model(p)?;
    if !h.is_well_structured() {
        return Err(Error::Invalid("history is not well-structured".into()));
    }
    let dim = p.num_states();
    let seen = if p.model == Model::MFDO { h.seen_sets(dim) } else { Vec::new() };
    let mut run = Run::new(Configuration::of_agents(p, h.first_config(dim)));
    for i in 0..h.len().saturating_sub(1) {
        let movers = h.movers(i);
        if movers.is_empty() {
            continue;
        }
        let t = enabling_transition(p, h, &seen, i, &movers).ok_or_else(|| {
            Error::Invalid(format!("history is not compatible at position {} (trajectory {})", i + 1, movers[0]))
        })?;
        run.push(t, movers.len() as u64);
    }
    Ok(run)
}

/// Builds a well-structured history of a run, one position per transition occurrence.
///
/// The mover of each occurrence is the lexicographically smallest trajectory
/// currently ending in the source state.
pub fn deanonymize(p: &Protocol, r: &Run) -> Result<History> {
    check_model(p)?;
    p.apply_run(r)?;
    let len = r.total_len() as usize + 1;
    if len > HISTORY_CAP {
        return Err(Error::HistoryTooLong { len, cap: HISTORY_CAP });
    }
    let start = r.start.agents.elems();
    let w = start.len();
    let mut trajs: Vec<Vec<StateId>> = start.iter().map(|&q| {
        let mut v = Vec::with_capacity(len);
        v.push(q);
        v
    }).collect();
    // rank[j] orders trajectories lexicographically; equal ranks mean equal trajectories.
    let mut rank: Vec<usize> = start.clone();
    for &(t, k) in &r.steps {
        let (src, dst) = p.mover(t).ok_or_else(|| Error::Model("transition has no single mover".into()))?;
        for _ in 0..k {
            let mover = (0..w)
                .filter(|&j| *trajs[j].last().unwrap() == src)
                .min_by_key(|&j| (rank[j], j))
                .expect("run replays, so a mover exists");
            for (j, tr) in trajs.iter_mut().enumerate() {
                let last = *tr.last().unwrap();
                tr.push(if j == mover { dst } else { last });
            }
            let mut keys: Vec<(usize, StateId)> = (0..w).map(|j| (rank[j], *trajs[j].last().unwrap())).collect();
            let mut sorted = keys.clone();
            sorted.sort_unstable();
            sorted.dedup();
            for (j, key) in keys.iter_mut().enumerate() {
                rank[j] = sorted.binary_search(key).unwrap();
            }
        }
    }
    History::new(trajs)
}

/// Replaces a bunch by at most one trajectory per visited state.
///
/// For each state `q` visited by the bunch, `τ_q` follows a bunch trajectory until
/// the first visit time `f(q)`, stays in `q` until the last visit time `l(q)`, and
/// then follows a bunch trajectory that is in `q` at `l(q)`.
pub fn prune_bunch(p: &Protocol, h: &History, bunch: &[usize]) -> Result<History> {
    let pruned = pruned_bunch_trajectories(p.num_states(), h, bunch)?;
    let mut keep: Vec<bool> = vec![true; h.width()];
    for &j in bunch {
        keep[j] = false;
    }
    let mut trajs: Vec<Vec<StateId>> =
        (0..h.width()).filter(|&j| keep[j]).map(|j| h.trajectories[j].clone()).collect();
    trajs.extend(pruned);
    History::new(trajs)
}

fn pruned_bunch_trajectories(dim: usize, h: &History, bunch: &[usize]) -> Result<Vec<Vec<StateId>>> {
    if bunch.is_empty() {
        return Err(Error::Invalid("empty bunch".into()));
    }
    let n = h.len();
    let ends = (h.trajectories[bunch[0]][0], h.trajectories[bunch[0]][n - 1]);
    let mut seen_idx = std::collections::HashSet::new();
    for &j in bunch {
        let t = h.trajectories.get(j).ok_or_else(|| Error::Invalid("bunch index out of range".into()))?;
        if (t[0], t[n - 1]) != ends || !seen_idx.insert(j) {
            return Err(Error::Invalid("not a bunch of the history".into()));
        }
    }
    let mut first: Vec<Option<(usize, usize)>> = vec![None; dim];
    let mut last: Vec<Option<(usize, usize)>> = vec![None; dim];
    for i in 0..n {
        for &j in bunch {
            let q = h.trajectories[j][i];
            if first[q].is_none() {
                first[q] = Some((i, j));
            }
        }
    }
    for i in (0..n).rev() {
        for &j in bunch {
            let q = h.trajectories[j][i];
            if last[q].is_none() {
                last[q] = Some((i, j));
            }
        }
    }
    let mut out = Vec::new();
    for q in 0..dim {
        let (Some((f, a)), Some((l, b))) = (first[q], last[q]) else { continue };
        let mut tr = Vec::with_capacity(n);
        tr.extend_from_slice(&h.trajectories[a][..f]);
        tr.extend(std::iter::repeat_n(q, l + 1 - f));
        tr.extend_from_slice(&h.trajectories[b][l + 1..]);
        out.push(tr);
    }
    Ok(out)
}

/// Greedy sub-multiset of trajectories (in index order) covering `need` at position `pos`.
fn greedy_cover(h: &History, need: &Multiset, pos: usize) -> Result<Vec<usize>> {
    let mut left = need.clone();
    let mut out = Vec::new();
    for (j, t) in h.trajectories.iter().enumerate() {
        let q = t[pos];
        if left.get(q) > 0 {
            left.remove(q, 1);
            out.push(j);
        }
    }
    if !left.is_empty() {
        return Err(Error::Invalid("covering precondition violated".into()));
    }
    Ok(out)
}

/// The covering core `H_0 = max(H_L, H_{L'})` as a set of trajectory indices.
fn covering_core(h: &History, l_init: &Multiset, l_final: &Multiset) -> Result<Vec<usize>> {
    let mut core = greedy_cover(h, l_final, h.len() - 1)?;
    core.extend(greedy_cover(h, l_init, 0)?);
    core.sort_unstable();
    core.dedup();
    Ok(core)
}

/// Pruning with cubic overhead: keeps a covering core and prunes every bunch of
/// the remainder to at most |Q| trajectories. The returned run starts at some
/// `D' ≤ start` with `D' ≥ l_init`, ends at some `D ≥ l_final`, and
/// `|D'| ≤ |l_init| + |l_final| + |Q|³`.
pub fn prune(p: &Protocol, r: &Run, l_init: &Multiset, l_final: &Multiset) -> Result<Run> {
    let h = deanonymize(p, r)?;
    let core = covering_core(&h, l_init, l_final)?;
    let in_core: std::collections::HashSet<usize> = core.iter().copied().collect();
    let rest: Vec<usize> = (0..h.width()).filter(|j| !in_core.contains(j)).collect();
    let rest_h = h.select(&rest);
    let mut trajs: Vec<Vec<StateId>> = core.iter().map(|&j| h.trajectories[j].clone()).collect();
    for (_, b) in rest_h.bunches() {
        if b.len() > p.num_states() {
            trajs.extend(pruned_bunch_trajectories(p.num_states(), &rest_h, &b)?);
        } else {
            trajs.extend(b.iter().map(|&j| rest_h.trajectories[j].clone()));
        }
    }
    if trajs.is_empty() {
        return Ok(Run::new(Configuration::of_agents(p, Multiset::zeros(p.num_states()))));
    }
    realize(p, &History::new(trajs)?)
}

/// Pruning with linear overhead for MFDO: keeps a covering core plus, for every
/// visited state, one trajectory visiting it at its first-visit time.
pub fn prune_mfdo_linear(p: &Protocol, r: &Run, l_init: &Multiset, l_final: &Multiset) -> Result<Run> {
    if p.model != Model::MFDO {
        return Err(Error::Model("linear pruning needs an MFDO protocol".into()));
    }
    let h = deanonymize(p, r)?;
    let mut keep = covering_core(&h, l_init, l_final)?;
    let mut done = Seen::with_capacity(p.num_states());
    for i in 0..h.len() {
        for (j, t) in h.trajectories.iter().enumerate() {
            if !done.contains(t[i]) {
                done.insert(t[i]);
                keep.push(j);
            }
        }
    }
    keep.sort_unstable();
    keep.dedup();
    if keep.is_empty() {
        return Ok(Run::new(Configuration::of_agents(p, Multiset::zeros(p.num_states()))));
    }
    realize(p, &h.select(&keep))
}

/// Maps a DO run between zero-message configurations to a run of the corresponding
/// MFDO protocol with the same agent endpoints.
pub fn do_run_to_mfdo(p: &Protocol, view: &MfdoView, r: &Run) -> Result<Run> {
    if !r.start.is_zero_message() {
        return Err(Error::Invalid("DO run must start at a zero-message configuration".into()));
    }
    let mut index: BTreeMap<(TransId, StateId), TransId> = BTreeMap::new();
    for (mi, t) in view.mfdo.transitions.iter().enumerate() {
        if let Rule::Observe { obs, .. } = t.rule {
            index.insert((view.receive_of[mi], obs), mi);
        }
    }
    let mut c = r.start.clone();
    let mut senders: Vec<Vec<StateId>> = vec![Vec::new(); p.num_messages()];
    let mut out = Run::new(Configuration::of_agents(&view.mfdo, r.start.agents.clone()));
    for (i, &(t, k)) in r.steps.iter().enumerate() {
        for _ in 0..k {
            if !p.fire(t, &mut c, None) {
                return Err(Error::NotEnabled { index: i, transition: p.transitions[t].name.clone() });
            }
            match p.transitions[t].rule {
                Rule::Send { from, msg, .. } => {
                    if !senders[msg].contains(&from) {
                        senders[msg].push(from);
                        senders[msg].sort_unstable();
                    }
                }
                Rule::Receive { from, msg, to } if from != to => {
                    let o = senders[msg][0];
                    out.push(index[&(t, o)], 1);
                }
                _ => {}
            }
        }
    }
    if !c.is_zero_message() {
        return Err(Error::Invalid("DO run must end at a zero-message configuration".into()));
    }
    Ok(out)
}

/// Maps an MFDO run of the corresponding protocol back to a DO run between
/// zero-message configurations. For every message type, all its sends are issued
/// in one block by the earliest-visited state sending it, right after the block in
/// which that state first becomes populated.
pub fn mfdo_run_to_do(p: &Protocol, view: &MfdoView, r: &Run) -> Result<Run> {
    let trace = view.mfdo.trace(r)?;
    let dim = p.num_states();
    let mut needed = vec![0u64; p.num_messages()];
    for &(t, k) in &r.steps {
        if let Rule::Observe { obs, .. } = view.mfdo.transitions[t].rule {
            needed[view.message_of[obs]] += k;
        }
    }
    // first_visit[q] = index of the trace configuration where q is first populated.
    let mut first_visit = vec![usize::MAX; dim];
    for (i, c) in trace.iter().enumerate() {
        for q in c.agents.support() {
            if first_visit[q] == usize::MAX {
                first_visit[q] = i;
            }
        }
    }
    let sends = p.sends_from();
    let mut inserts: BTreeMap<usize, Vec<(TransId, u64)>> = BTreeMap::new();
    for (m, &count) in needed.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let qm = (0..dim)
            .filter(|&q| view.message_of[q] == m && first_visit[q] != usize::MAX)
            .min_by_key(|&q| (first_visit[q], q))
            .ok_or_else(|| Error::Invalid("message consumed but never sent".into()))?;
        inserts.entry(first_visit[qm]).or_default().push((sends[qm][0], count));
    }
    let mut out = Run::new(Configuration::of_agents(p, r.start.agents.clone()));
    for (i, &(t, k)) in r.steps.iter().enumerate() {
        if let Some(v) = inserts.get(&i) {
            for &(s, c) in v {
                out.push(s, c);
            }
        }
        out.push(view.receive_of[t], k);
    }
    if let Some(v) = inserts.get(&r.steps.len()) {
        for &(s, c) in v {
            out.push(s, c);
        }
    }
    Ok(out)
}

/// Pruning for DO runs between zero-message configurations, via the corresponding MFDO protocol.
pub fn prune_do(p: &Protocol, r: &Run, l_init: &Multiset, l_final: &Multiset) -> Result<Run> {
    let view = p.to_mfdo()?;
    let m = do_run_to_mfdo(p, &view, r)?;
    let pruned = prune(&view.mfdo, &m, l_init, l_final)?;
    mfdo_run_to_do(p, &view, &pruned)
}

/// Removes cycles from a state path, cutting back to the first occurrence of each repeated state.
pub fn remove_cycles(path: &[StateId]) -> Vec<StateId> {
    let mut out: Vec<StateId> = Vec::new();
    for &q in path {
        if let Some(pos) = out.iter().position(|&x| x == q) {
            out.truncate(pos + 1);
        } else {
            out.push(q);
        }
    }
    out
}

/// Shortening: returns a run with the same endpoints whose aggregated length is at
/// most |Q|⁴ (MFDO) or |Q|⁴ + |Q| (DO, zero-message endpoints).
pub fn shorten(p: &Protocol, r: &Run) -> Result<Run> {
    match p.model {
        Model::MFDO => shorten_mfdo(p, r),
        Model::DO => {
            let view = p.to_mfdo()?;
            let m = do_run_to_mfdo(p, &view, r)?;
            let s = shorten_mfdo(&view.mfdo, &m)?;
            mfdo_run_to_do(p, &view, &s)
        }
        m => Err(Error::Model(format!("shortening needs an MFDO or DO protocol, got {m}"))),
    }
}

fn shorten_mfdo(p: &Protocol, r: &Run) -> Result<Run> {
    let h = deanonymize(p, r)?;
    let n = h.len();
    let w = h.width();
    let seen = h.seen_sets(p.num_states());
    let growth: Vec<usize> = (0..n.saturating_sub(1)).filter(|&i| seen[i + 1] != seen[i]).collect();
    let mut cur: Vec<StateId> = (0..w).map(|j| h.trajectories[j][0]).collect();
    let mut columns: Vec<Vec<StateId>> = vec![cur.clone()];
    let mut seg_start = 0;
    let mut bounds: Vec<(usize, usize, Option<usize>)> = Vec::new();
    for &g in &growth {
        bounds.push((seg_start, g, Some(g)));
        seg_start = g + 1;
    }
    bounds.push((seg_start, n - 1, None));
    for (a, b, grow) in bounds {
        let mut groups: BTreeMap<(StateId, StateId), Vec<usize>> = BTreeMap::new();
        for j in 0..w {
            let (x, y) = (h.trajectories[j][a], h.trajectories[j][b]);
            if x != y {
                groups.entry((x, y)).or_default().push(j);
            }
        }
        for members in groups.values() {
            let path = remove_cycles(&h.trajectories[members[0]][a..=b]);
            for &q in &path[1..] {
                for &j in members {
                    cur[j] = q;
                }
                columns.push(cur.clone());
            }
        }
        if let Some(g) = grow {
            for (j, c) in cur.iter_mut().enumerate() {
                *c = h.trajectories[j][g + 1];
            }
            columns.push(cur.clone());
        }
    }
    let trajs: Vec<Vec<StateId>> = (0..w).map(|j| columns.iter().map(|c| c[j]).collect()).collect();
    let run = realize(p, &History::new(trajs)?)?;
    Ok(run)
}

/// Prints a history, one line per distinct trajectory with an `xK` multiplicity suffix.
pub fn dump_history(p: &Protocol, h: &History) -> String {
    let mut groups: Vec<(&Vec<StateId>, usize)> = Vec::new();
    for t in &h.trajectories {
        match groups.iter_mut().find(|g| g.0 == t) {
            Some(g) => g.1 += 1,
            None => groups.push((t, 1)),
        }
    }
    let mut s = String::new();
    for (t, k) in groups {
        let states: Vec<&str> = t.iter().map(|&q| p.states[q].as_str()).collect();
        let _ = writeln!(s, "{} x{k}", states.join(" "));
    }
    s
}

/// Parses the history dump format.
pub fn parse_history(p: &Protocol, text: &str) -> Result<History> {
    let mut trajs = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let (body, k) = match toks.last().and_then(|t| t.strip_prefix('x')).and_then(|k| k.parse::<usize>().ok()) {
            Some(k) => (&toks[..toks.len() - 1], k),
            None => (&toks[..], 1),
        };
        let mut tr = Vec::with_capacity(body.len());
        for s in body {
            tr.push(p.state_id(s).map_err(|_| Error::parse(ln + 1, 1, format!("unknown state `{s}`")))?);
        }
        for _ in 0..k {
            trajs.push(tr.clone());
        }
    }
    History::new(trajs)
}

/// Convenience: the seen set at the start of an MFDO run.
pub fn initial_seen(c: &Configuration) -> Seen {
    support_set(&c.agents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::format;

    fn parse(p: &Protocol, rows: &[&str]) -> History {
        parse_history(p, &rows.join("\n")).unwrap()
    }

    fn figure_history(p: &Protocol) -> History {
        parse(p, &[
            "q1 q1 q1 q1 q3 q3 q3",
            "q1 q1 q2 q2 q2 q3 q3",
            "q1 q1 q2 q2 q2 q2 q3",
            "q1 q3 q3 q3 q3 q3 q3",
            "q3 q3 q3 q3 q3 q3 q3",
        ])
    }

    #[test]
    fn io_history_is_compatible_and_realizes() {
        let p = catalog::io_example();
        let h = figure_history(&p);
        assert!(h.is_well_structured());
        assert_eq!(is_compatible(&p, &h).unwrap(), Compat::Compatible);
        let r = realize(&p, &h).unwrap();
        assert_eq!(p.apply_run(&r).unwrap().agents.counts(), &[0, 0, 5]);
    }

    #[test]
    fn missing_observer_is_incompatible() {
        let p = catalog::io_example();
        let mut h = figure_history(&p);
        h.trajectories.pop();
        assert_eq!(is_compatible(&p, &h).unwrap(), Compat::Incompatible { trajectory: 3, position: 1 });
    }

    #[test]
    fn bunch_pruning_keeps_one_trajectory_per_state() {
        let p = catalog::io_example();
        let h = figure_history(&p);
        let pruned = prune_bunch(&p, &h, &[0, 1, 2, 3]).unwrap();
        assert_eq!(pruned.width(), 4);
        assert_eq!(is_compatible(&p, &pruned).unwrap(), Compat::Compatible);
        let r = realize(&p, &pruned).unwrap();
        assert_eq!(r.start.agents.counts(), &[3, 0, 1]);
        assert_eq!(p.apply_run(&r).unwrap().agents.counts(), &[0, 0, 4]);
    }

    #[test]
    fn deanonymize_round_trips() {
        let p = catalog::io_example();
        let r = format::parse_run(&p, "start: {q1:4, q3:1}\nt3 t1^2 t3 t2 t4\n").unwrap();
        let h = deanonymize(&p, &r).unwrap();
        assert_eq!(h.len(), 7);
        assert!(h.is_well_structured());
        let back = realize(&p, &h).unwrap();
        assert_eq!(back.normalized(), r.normalized());
    }

    #[test]
    fn mfdo_linear_prune() {
        let p = catalog::mfdo_ab();
        let r = format::parse_run(&p, "start: {a:1, b:4}\nt2 t1 t2^3\n").unwrap();
        assert_eq!(p.apply_run(&r).unwrap().agents.counts(), &[0, 0, 5]);
        let z = Multiset::zeros(3);
        let pr = prune_mfdo_linear(&p, &r, &z, &z).unwrap();
        assert_eq!(pr.start.agents.counts(), &[1, 1, 0]);
        assert_eq!(p.apply_run(&pr).unwrap().agents.counts(), &[0, 0, 2]);
    }

    #[test]
    fn do_prune_and_shorten() {
        let p = catalog::do_ab();
        let r = format::parse_run(
            &p,
            "start: {a:1, b:4}\ns_a^4 s_b t2 t1 t2^3\n",
        )
        .unwrap();
        assert_eq!(p.apply_run(&r).unwrap().agents.counts(), &[0, 0, 5]);
        let z = Multiset::zeros(3);
        let pr = prune_do(&p, &r, &z, &z).unwrap();
        let end = p.apply_run(&pr).unwrap();
        assert!(end.is_zero_message());
        assert!(pr.start.agents.le(&r.start.agents));
        let s = shorten(&p, &r).unwrap();
        let end = p.apply_run(&s).unwrap();
        assert_eq!(end.agents.counts(), &[0, 0, 5]);
        assert!(end.is_zero_message());
    }

    #[test]
    fn shorten_collapses_oscillation() {
        let mut p = Protocol::new(Model::MFDO, vec!["x".into(), "y".into(), "z".into()], Vec::new());
        p.add("f", Rule::Observe { from: 0, obs: 0, to: 1 });
        p.add("g", Rule::Observe { from: 1, obs: 0, to: 0 });
        p.add("h", Rule::Observe { from: 1, obs: 1, to: 2 });
        let mut r = Run::new(Configuration::from_counts(&p, &[2, 0, 0]));
        for _ in 0..100 {
            r.steps.push((0, 1));
            r.steps.push((1, 1));
        }
        r.steps.push((0, 1));
        r.steps.push((2, 1));
        let end = p.apply_run(&r).unwrap();
        let s = shorten(&p, &r).unwrap();
        assert_eq!(p.apply_run(&s).unwrap(), end);
        assert!(s.aggregated_len() <= 81);
        assert!(s.aggregated_len() < r.aggregated_len());
    }

    #[test]
    fn remove_cycles_cuts_back() {
        assert_eq!(remove_cycles(&[0, 1, 2, 1, 3, 0, 4]), vec![0, 4]);
        assert_eq!(remove_cycles(&[0, 1, 2]), vec![0, 1, 2]);
    }

    #[test]
    fn dump_parse_round_trip() {
        let p = catalog::io_example();
        let h = figure_history(&p);
        assert_eq!(parse_history(&p, &dump_history(&p, &h)).unwrap(), h);
    }
}
