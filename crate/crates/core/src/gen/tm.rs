//! Bounded Turing machines and their IO-protocol implementation.

use super::lines;
use crate::error::{Error, Result};
use crate::format::valid_ident;
use crate::multiset::Multiset;
use crate::protocol::{Model, Protocol, Rule, StateId, TransId};
use crate::semantics::Configuration;
use std::collections::{BTreeMap, HashSet};

/// A deterministic machine with a tape of `k` cells; symbol 0 is the blank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TuringMachine {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub init: usize,
    pub accept: usize,
    pub reject: usize,
    /// `(q, σ) -> (q', σ', d)` with `d ∈ {-1, +1}`.
    pub delta: BTreeMap<(usize, usize), (usize, usize, i8)>,
    pub k: usize,
}

/// A machine configuration; `head` is 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TmConfig {
    pub state: usize,
    pub head: usize,
    pub tape: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TmOutcome {
    Accept,
    Reject,
    /// Halted outside the accepting and rejecting states, or about to leave the tape.
    Blocked,
    /// Revisited a configuration.
    Loop,
}

impl TuringMachine {
    pub fn validate(&self) -> Result<()> {
        let nq = self.states.len();
        let ns = self.alphabet.len();
        if self.k == 0 {
            return Err(Error::Invalid("tape bound K must be at least 1".into()));
        }
        if ns == 0 {
            return Err(Error::Invalid("the tape alphabet is empty".into()));
        }
        if self.init >= nq || self.accept >= nq || self.reject >= nq {
            return Err(Error::Invalid("distinguished state out of range".into()));
        }
        if self.accept == self.reject {
            return Err(Error::Invalid("accepting and rejecting states coincide".into()));
        }
        for (&(q, s), &(q2, s2, d)) in &self.delta {
            if q >= nq || q2 >= nq || s >= ns || s2 >= ns || !(d == 1 || d == -1) {
                return Err(Error::Invalid("transition out of range".into()));
            }
        }
        Ok(())
    }

    pub fn initial(&self) -> TmConfig {
        TmConfig { state: self.init, head: 1, tape: vec![0; self.k] }
    }

    /// One step, or `None` when halted, undefined, or about to leave the tape.
    pub fn step(&self, c: &TmConfig) -> Option<TmConfig> {
        if c.state == self.accept || c.state == self.reject {
            return None;
        }
        let &(q, s, d) = self.delta.get(&(c.state, c.tape[c.head - 1]))?;
        let head = c.head as i64 + i64::from(d);
        if head < 1 || head > self.k as i64 {
            return None;
        }
        let mut tape = c.tape.clone();
        tape[c.head - 1] = s;
        Some(TmConfig { state: q, head: head as usize, tape })
    }

    /// Runs from the empty tape until halting or a repeated configuration.
    pub fn run(&self) -> (TmOutcome, Vec<TmConfig>) {
        let mut trace = vec![self.initial()];
        let mut seen = HashSet::from([self.initial()]);
        loop {
            let c = trace.last().expect("non-empty");
            match self.step(c) {
                Some(n) => {
                    if !seen.insert(n.clone()) {
                        trace.push(n);
                        return (TmOutcome::Loop, trace);
                    }
                    trace.push(n);
                }
                None => {
                    let out = if c.state == self.accept {
                        TmOutcome::Accept
                    } else if c.state == self.reject {
                        TmOutcome::Reject
                    } else {
                        TmOutcome::Blocked
                    };
                    return (out, trace);
                }
            }
        }
    }
}

/// Parses a machine file:
///
/// ```text
/// states: q0 q1 acc rej    # the first state is initial unless `init:` is given
/// accept: acc
/// reject: rej
/// tape: _ 1                # the first symbol is the blank
/// K: 2
/// delta: q0 _ -> q1 1 R
/// ```
pub fn parse_tm(text: &str) -> Result<TuringMachine> {
    let mut states: Vec<String> = Vec::new();
    let mut alphabet: Vec<String> = Vec::new();
    let mut named: BTreeMap<&str, (usize, usize, String)> = BTreeMap::new();
    let mut k = None;
    let mut deltas = Vec::new();
    for line in lines(text) {
        match line.tok(0)? {
            "states:" | "tape:" => {
                let list = if line.tok(0)? == "states:" { &mut states } else { &mut alphabet };
                for (i, &(_, t)) in line.toks.iter().enumerate().skip(1) {
                    if !valid_ident(t) || list.iter().any(|x| x == t) {
                        return Err(line.err(i, format!("invalid or duplicate name `{t}`")));
                    }
                    list.push(t.to_string());
                }
            }
            key @ ("init:" | "accept:" | "reject:") => {
                named.insert(key, (line.no, line.toks[1.min(line.toks.len() - 1)].0, line.tok(1)?.to_string()));
            }
            "K:" => k = Some(line.num::<usize>(1)?),
            "delta:" => deltas.push(line),
            other => return Err(line.err(0, format!("unknown keyword `{other}`"))),
        }
    }
    let state = |key: &str| -> Result<usize> {
        match named.get(key) {
            Some((l, c, name)) => states
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::parse(*l, *c, format!("unknown state `{name}`"))),
            None if key == "init:" && !states.is_empty() => Ok(0),
            None => Err(Error::parse(1, 1, format!("missing `{key}` line"))),
        }
    };
    let init = state("init:")?;
    let accept = state("accept:")?;
    let reject = state("reject:")?;
    let mut delta = BTreeMap::new();
    for line in deltas {
        let find = |i: usize, list: &[String], what: &str| -> Result<usize> {
            let t = line.tok(i)?;
            list.iter().position(|x| x == t).ok_or_else(|| line.err(i, format!("unknown {what} `{t}`")))
        };
        let q = find(1, &states, "state")?;
        let s = find(2, &alphabet, "symbol")?;
        if line.tok(3)? != "->" {
            return Err(line.err(3, "expected `->`"));
        }
        let q2 = find(4, &states, "state")?;
        let s2 = find(5, &alphabet, "symbol")?;
        let d = match line.tok(6)? {
            "L" => -1,
            "R" => 1,
            t => return Err(line.err(6, format!("expected L or R, found `{t}`"))),
        };
        if delta.insert((q, s), (q2, s2, d)).is_some() {
            return Err(line.err(1, "transition defined twice"));
        }
    }
    let k = k.ok_or_else(|| Error::parse(1, 1, "missing `K:` line"))?;
    let tm = TuringMachine { states, alphabet, init, accept, reject, delta, k };
    tm.validate()?;
    Ok(tm)
}

/// Kinds of the simulation transitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    /// A cell observes the head on it and switches on.
    CellOn,
    /// The head observes its cell on, writes and leaves.
    HeadLeave,
    /// The cell observes the departed head and switches off with the new symbol.
    CellOff,
    /// The moving head observes the old cell off and lands on the next cell.
    HeadLand,
}

/// The generated IO protocol with its state layout.
#[derive(Clone, Debug)]
pub struct TmEncoding {
    pub tm: TuringMachine,
    pub protocol: Protocol,
    /// Canonical input: one agent per input symbol.
    pub d0: Multiset,
    /// `pass[σ][n-1]`
    pub pass: Vec<Vec<StateId>>,
    pub act: Vec<Vec<StateId>>,
    /// `stable[q][n-1]`
    pub stable: Vec<Vec<StateId>>,
    /// `(q, σ, n, d)` to the moving-head state.
    pub switch: BTreeMap<(usize, usize, usize, i8), StateId>,
    pub observer: StateId,
    pub success: StateId,
    /// Simulation kind of each transition; `None` for the observer and attractor transitions.
    pub kinds: Vec<Option<StepKind>>,
}

fn dir(d: i8) -> &'static str {
    if d > 0 {
        "+1"
    } else {
        "-1"
    }
}

/// Builds the IO implementation of a bounded machine, extended with the
/// `observer`/`success` states that detect acceptance.
pub fn tm_to_io(tm: &TuringMachine) -> Result<TmEncoding> {
    tm.validate()?;
    let k = tm.k;
    let (nq, ns) = (tm.states.len(), tm.alphabet.len());
    let mut names = Vec::new();
    let mut add = |name: String| {
        names.push(name);
        names.len() - 1
    };
    let pass: Vec<Vec<StateId>> =
        (0..ns).map(|s| (1..=k).map(|n| add(format!("pass.{}.{n}", tm.alphabet[s]))).collect()).collect();
    let act: Vec<Vec<StateId>> =
        (0..ns).map(|s| (1..=k).map(|n| add(format!("act.{}.{n}", tm.alphabet[s]))).collect()).collect();
    let stable: Vec<Vec<StateId>> =
        (0..nq).map(|q| (1..=k).map(|n| add(format!("stable.{}.{n}", tm.states[q]))).collect()).collect();
    let mut switch = BTreeMap::new();
    for q in 0..nq {
        for s in 0..ns {
            for n in 1..=k {
                for d in [-1i8, 1] {
                    let m = n as i64 + i64::from(d);
                    if m >= 1 && m <= k as i64 {
                        let name = format!("sw.{}.{}.{n}.{}", tm.states[q], tm.alphabet[s], dir(d));
                        switch.insert((q, s, n, d), add(name));
                    }
                }
            }
        }
    }
    let observer = add("observer".into());
    let success = add("success".into());
    let mut p = Protocol::new(Model::IO, names, Vec::new());
    let mut kinds = Vec::new();
    let mut rule = |p: &mut Protocol, name: String, from, obs, to, kind| {
        p.add(&name, Rule::Observe { from, obs, to });
        kinds.push(kind);
    };
    for q in 0..nq {
        for s in 0..ns {
            for n in 1..=k {
                rule(&mut p, format!("1a.{}.{}.{n}", tm.states[q], tm.alphabet[s]), pass[s][n - 1], stable[q][n - 1], act[s][n - 1], Some(StepKind::CellOn));
            }
        }
    }
    for (&(q, s2, n, d), &sw) in &switch {
        for s in 0..ns {
            let name = format!("1b.{}.{}.{}.{n}.{}", tm.states[q], tm.alphabet[s], tm.alphabet[s2], dir(d));
            rule(&mut p, name, act[s][n - 1], sw, pass[s2][n - 1], Some(StepKind::CellOff));
        }
    }
    for (&(q, s), &(q2, s2, d)) in &tm.delta {
        for n in 1..=k {
            if let Some(&sw) = switch.get(&(q2, s2, n, d)) {
                let name = format!("2a.{}.{}.{n}", tm.states[q], tm.alphabet[s]);
                rule(&mut p, name, stable[q][n - 1], act[s][n - 1], sw, Some(StepKind::HeadLeave));
            }
        }
    }
    for (&(q, s, n, d), &sw) in &switch {
        let m = (n as i64 + i64::from(d)) as usize;
        let name = format!("2b.{}.{}.{n}.{}", tm.states[q], tm.alphabet[s], dir(d));
        rule(&mut p, name, sw, pass[s][n - 1], stable[q][m - 1], Some(StepKind::HeadLand));
    }
    for n in 1..=k {
        rule(&mut p, format!("obs.{n}"), observer, stable[tm.accept][n - 1], success, None);
    }
    for q in 0..p.num_states() {
        if q != success {
            let name = format!("attract.{}", p.states[q]);
            rule(&mut p, name, q, success, success, None);
        }
    }
    for n in 1..=k {
        p.add_input(&format!("i{n}"), pass[0][n - 1]);
    }
    p.add_input(&format!("i{}", k + 1), stable[tm.init][0]);
    p.add_input(&format!("i{}", k + 2), observer);
    p.output = vec![0; p.num_states()];
    p.output[success] = 1;
    let d0 = Multiset::from_counts(vec![1; k + 2]);
    Ok(TmEncoding { tm: tm.clone(), protocol: p, d0, pass, act, stable, switch, observer, success, kinds })
}

impl TmEncoding {
    /// `C_c`: one agent per cell in its `pass` state and one head agent.
    pub fn encode(&self, c: &TmConfig) -> Configuration {
        let mut agents = Multiset::zeros(self.protocol.num_states());
        for (i, &s) in c.tape.iter().enumerate() {
            agents.add(self.pass[s][i], 1);
        }
        agents.add(self.stable[c.state][c.head - 1], 1);
        Configuration::of_agents(&self.protocol, agents)
    }

    /// The canonical initial configuration `I(D0)`, i.e. the empty-tape `C_c` plus the observer.
    pub fn initial_config(&self) -> Configuration {
        let mut c = self.encode(&self.tm.initial());
        c.agents.add(self.observer, 1);
        c
    }

    /// The machine configuration encoded by `c`, if it has the `C_c` shape.
    pub fn decode(&self, c: &Configuration) -> Option<TmConfig> {
        let k = self.tm.k;
        let mut tape = vec![0; k];
        for n in 1..=k {
            let syms: Vec<usize> =
                (0..self.pass.len()).filter(|&s| c.agents.get(self.pass[s][n - 1]) == 1).collect();
            if syms.len() != 1 {
                return None;
            }
            tape[n - 1] = syms[0];
        }
        let heads: Vec<(usize, usize)> = (0..self.stable.len())
            .flat_map(|q| (1..=k).map(move |n| (q, n)))
            .filter(|&(q, n)| c.agents.get(self.stable[q][n - 1]) == 1)
            .collect();
        let &[(state, head)] = heads.as_slice() else { return None };
        let c2 = TmConfig { state, head, tape };
        let mut expect = self.encode(&c2).agents;
        expect.set(self.observer, c.agents.get(self.observer));
        expect.set(self.success, c.agents.get(self.success));
        (expect == c.agents).then_some(c2)
    }

    fn cell_states(&self, n: usize) -> impl Iterator<Item = StateId> + '_ {
        self.pass.iter().chain(self.act.iter()).map(move |v| v[n - 1])
    }

    fn head_states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.stable.iter().flatten().copied().chain(self.switch.values().copied())
    }

    /// Conditions 1–4 of a modelling configuration, on the simulation states only.
    pub fn validate_modelling(&self, c: &Configuration) -> bool {
        let a = &c.agents;
        let k = self.tm.k;
        for n in 1..=k {
            let total: u64 = self.cell_states(n).map(|q| a.get(q)).sum();
            if total != 1 {
                return false;
            }
        }
        if self.head_states().map(|q| a.get(q)).sum::<u64>() != 1 {
            return false;
        }
        for n in 1..=k {
            let on = self.act.iter().any(|v| a.get(v[n - 1]) > 0);
            let head_here = self.stable.iter().any(|v| a.get(v[n - 1]) > 0)
                || self.switch.iter().any(|(&(_, _, m, _), &q)| m == n && a.get(q) > 0);
            if on && !head_here {
                return false;
            }
        }
        for (&(_, s, n, _), &q) in &self.switch {
            if a.get(q) > 0 {
                let on = self.act.iter().any(|v| a.get(v[n - 1]) > 0);
                if !on && a.get(self.pass[s][n - 1]) == 0 {
                    return false;
                }
            }
        }
        true
    }

    /// Enabled simulation transitions at `c`.
    pub fn enabled_simulation(&self, c: &Configuration) -> Vec<TransId> {
        (0..self.protocol.transitions.len())
            .filter(|&t| self.kinds[t].is_some() && self.protocol.is_enabled(t, c, None))
            .collect()
    }

    /// Applies the unique enabled sequence of the four simulation kinds to a
    /// modelling configuration; `None` when the machine is blocked.
    pub fn simulate_tm_step(&self, c: &Configuration) -> Result<Option<Configuration>> {
        if !self.validate_modelling(c) {
            return Err(Error::Invalid("not a modelling configuration".into()));
        }
        let mut cur = c.clone();
        for kind in [StepKind::CellOn, StepKind::HeadLeave, StepKind::CellOff, StepKind::HeadLand] {
            let en = self.enabled_simulation(&cur);
            match en.as_slice() {
                [] => return Ok(None),
                [t] if self.kinds[*t] == Some(kind) => {
                    self.protocol.fire(*t, &mut cur, None);
                }
                _ => return Err(Error::Invalid("unexpected enabled simulation transitions".into())),
            }
        }
        Ok(Some(cur))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::check_instance;

    const WRITE_ACCEPT: &str = "states: q0 q1 acc rej\naccept: acc\nreject: rej\ntape: _ 1\nK: 2\n\
        delta: q0 _ -> q1 1 R\ndelta: q1 _ -> acc _ L\n";

    #[test]
    fn parse_and_run() {
        let tm = parse_tm(WRITE_ACCEPT).unwrap();
        assert_eq!(tm.states.len(), 4);
        let (out, trace) = tm.run();
        assert_eq!(out, TmOutcome::Accept);
        assert_eq!(trace.len(), 3);
        assert_eq!(trace[1].tape, vec![1, 0]);
        let e = parse_tm("states: q\naccept: q\nreject: q\ntape: _\nK: 1\n").unwrap_err();
        assert!(matches!(e, Error::Invalid(_)));
        let e = parse_tm("states: a b\naccept: a\nreject: c\ntape: _\nK: 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
    }

    #[test]
    fn state_count() {
        let tm = parse_tm(WRITE_ACCEPT).unwrap();
        let enc = tm_to_io(&tm).unwrap();
        // Switch states: for each (q, σ) the legal (n, d) pairs with K = 2 are (1,+1) and (2,-1).
        let switches = 4 * 2 * 2;
        assert_eq!(enc.protocol.num_states(), 2 * 2 * 2 + 4 * 2 + switches + 2);
        assert!(enc.protocol.validate().is_empty(), "{:?}", enc.protocol.validate());
    }

    #[test]
    fn simulation_matches_interpreter() {
        let tm = parse_tm(WRITE_ACCEPT).unwrap();
        let enc = tm_to_io(&tm).unwrap();
        let (_, trace) = tm.run();
        let mut c = enc.encode(&trace[0]);
        assert!(enc.validate_modelling(&c));
        for next in &trace[1..] {
            c = enc.simulate_tm_step(&c).unwrap().unwrap();
            assert_eq!(enc.decode(&c).as_ref(), Some(next));
        }
        assert!(enc.simulate_tm_step(&c).unwrap().is_none());
    }

    #[test]
    fn two_heads_are_not_modelling() {
        let tm = parse_tm(WRITE_ACCEPT).unwrap();
        let enc = tm_to_io(&tm).unwrap();
        let mut c = enc.encode(&tm.initial());
        c.agents.add(enc.stable[1][1], 1);
        assert!(!enc.validate_modelling(&c));
        assert!(enc.simulate_tm_step(&c).is_err());
    }

    #[test]
    fn accepting_machine_instance() {
        let tm = parse_tm(WRITE_ACCEPT).unwrap();
        let enc = tm_to_io(&tm).unwrap();
        let c0 = enc.initial_config();
        assert_eq!(crate::verify::input_config(&enc.protocol, &enc.d0), c0);
        assert!(check_instance(&enc.protocol, &c0, 1).unwrap().is_correct());
        assert!(!check_instance(&enc.protocol, &c0, 0).unwrap().is_correct());
    }

    #[test]
    fn rejecting_machine_instance() {
        let text = WRITE_ACCEPT.replace("-> acc _ L", "-> rej _ L");
        let enc = tm_to_io(&parse_tm(&text).unwrap()).unwrap();
        let c0 = enc.initial_config();
        assert!(check_instance(&enc.protocol, &c0, 0).unwrap().is_correct());
        assert!(!check_instance(&enc.protocol, &c0, 1).unwrap().is_correct());
    }
}
