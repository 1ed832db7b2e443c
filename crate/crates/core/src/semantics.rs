//! Configurations, one-step semantics and runs.

use crate::error::{Error, Result};
use crate::multiset::Multiset;
use crate::protocol::{Model, Protocol, Rule, StateId, TransId};
use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

/// Agents per state plus, for delayed models, messages per type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration {
    pub agents: Multiset,
    pub messages: Multiset,
}

impl Configuration {
    pub fn new(agents: Multiset, messages: Multiset) -> Self {
        Configuration { agents, messages }
    }

    /// A configuration with no messages over a protocol's dimensions.
    pub fn of_agents(p: &Protocol, agents: Multiset) -> Self {
        Configuration { agents, messages: Multiset::zeros(p.num_messages()) }
    }

    pub fn from_counts(p: &Protocol, counts: &[u64]) -> Self {
        Configuration::of_agents(p, Multiset::from_counts(counts.to_vec()))
    }

    pub fn is_zero_message(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn num_agents(&self) -> u64 {
        self.agents.size()
    }
}

/// The seen set of an MFDO execution.
pub type Seen = FixedBitSet;

/// The seen set consisting of the populated states.
pub fn support_set(agents: &Multiset) -> Seen {
    let mut s = FixedBitSet::with_capacity(agents.dim());
    for q in agents.support() {
        s.insert(q);
    }
    s
}

/// A run: a start configuration and a sequence of `(transition, multiplicity)` blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub start: Configuration,
    pub steps: Vec<(TransId, u64)>,
}

impl Run {
    pub fn new(start: Configuration) -> Self {
        Run { start, steps: Vec::new() }
    }

    /// Appends `k` occurrences of `t`, merging with the last block when equal.
    pub fn push(&mut self, t: TransId, k: u64) {
        if k == 0 {
            return;
        }
        if let Some(last) = self.steps.last_mut() {
            if last.0 == t {
                last.1 += k;
                return;
            }
        }
        self.steps.push((t, k));
    }

    /// Drops ε blocks and merges adjacent equal transitions.
    pub fn normalized(&self) -> Run {
        let mut r = Run::new(self.start.clone());
        for &(t, k) in &self.steps {
            r.push(t, k);
        }
        r
    }

    /// Number of nonempty blocks.
    pub fn aggregated_len(&self) -> usize {
        self.normalized().steps.len()
    }

    /// Total number of transition occurrences.
    pub fn total_len(&self) -> u64 {
        self.steps.iter().map(|s| s.1).sum()
    }
}

impl Protocol {
    /// Fires `t` once in place. Returns false, leaving `c` unchanged, when `t` is not enabled.
    pub fn fire(&self, t: TransId, c: &mut Configuration, seen: Option<&mut Seen>) -> bool {
        match self.transitions[t].rule {
            Rule::Pair { q1, q2, q3, q4 } => {
                let need = if q1 == q2 { 2 } else { 1 };
                if c.agents.get(q1) < need || c.agents.get(q2) < 1 {
                    return false;
                }
                c.agents.remove(q1, 1);
                c.agents.remove(q2, 1);
                c.agents.add(q3, 1);
                c.agents.add(q4, 1);
                true
            }
            Rule::Observe { from, obs, to } => {
                if self.model == Model::MFDO {
                    let Some(seen) = seen else { return false };
                    if c.agents.get(from) < 1 || !seen.contains(obs) {
                        return false;
                    }
                    c.agents.remove(from, 1);
                    c.agents.add(to, 1);
                    seen.insert(to);
                    true
                } else {
                    let need = if obs == from { 2 } else { 1 };
                    if c.agents.get(from) < 1 || c.agents.get(obs) < need {
                        return false;
                    }
                    c.agents.remove(from, 1);
                    c.agents.add(to, 1);
                    true
                }
            }
            Rule::Send { from, to, msg } => {
                if c.agents.get(from) < 1 {
                    return false;
                }
                c.agents.remove(from, 1);
                c.agents.add(to, 1);
                c.messages.add(msg, 1);
                true
            }
            Rule::Receive { from, msg, to } => {
                if c.agents.get(from) < 1 || c.messages.get(msg) < 1 {
                    return false;
                }
                c.agents.remove(from, 1);
                c.messages.remove(msg, 1);
                c.agents.add(to, 1);
                true
            }
        }
    }

    /// Whether `t` can fire once at `c`.
    pub fn is_enabled(&self, t: TransId, c: &Configuration, seen: Option<&Seen>) -> bool {
        let mut tmp = c.clone();
        let mut s = seen.cloned();
        self.fire(t, &mut tmp, s.as_mut())
    }

    /// All one-step successors, in transition order.
    pub fn enabled_steps(
        &self,
        c: &Configuration,
        seen: Option<&Seen>,
    ) -> Result<Vec<(TransId, Configuration)>> {
        if self.model == Model::MFDO && seen.is_none() {
            return Err(Error::Invalid("MFDO steps need a seen set".into()));
        }
        if c.agents.dim() != self.num_states() || c.messages.dim() != self.num_messages() {
            return Err(Error::Invalid("configuration dimensions do not match the protocol".into()));
        }
        let mut out = Vec::new();
        for t in 0..self.transitions.len() {
            let mut next = c.clone();
            let mut s = seen.cloned();
            if self.fire(t, &mut next, s.as_mut()) {
                out.push((t, next));
            }
        }
        Ok(out)
    }

    /// Applies a run and returns the final configuration.
    pub fn apply_run(&self, r: &Run) -> Result<Configuration> {
        Ok(self.trace(r)?.pop().expect("trace is never empty"))
    }

    /// Configurations before the run and after each block.
    pub fn trace(&self, r: &Run) -> Result<Vec<Configuration>> {
        let mut c = r.start.clone();
        let mut seen = (self.model == Model::MFDO).then(|| support_set(&c.agents));
        let mut out = vec![c.clone()];
        for (i, &(t, k)) in r.steps.iter().enumerate() {
            if t >= self.transitions.len() {
                return Err(Error::Invalid(format!("step {i} refers to transition #{t}")));
            }
            for _ in 0..k {
                if !self.fire(t, &mut c, seen.as_mut()) {
                    return Err(Error::NotEnabled { index: i, transition: self.transitions[t].name.clone() });
                }
            }
            out.push(c.clone());
        }
        Ok(out)
    }

    /// The seen set reached at the end of an MFDO run.
    pub fn final_seen(&self, r: &Run) -> Result<Seen> {
        let mut c = r.start.clone();
        let mut seen = support_set(&c.agents);
        for (i, &(t, k)) in r.steps.iter().enumerate() {
            for _ in 0..k {
                if !self.fire(t, &mut c, Some(&mut seen)) {
                    return Err(Error::NotEnabled { index: i, transition: self.transitions[t].name.clone() });
                }
            }
        }
        Ok(seen)
    }

    /// Moving agent of a non-send/receive transition: `(source, target)`.
    pub fn mover(&self, t: TransId) -> Option<(StateId, StateId)> {
        match self.transitions[t].rule {
            Rule::Observe { from, to, .. } => Some((from, to)),
            Rule::Pair { q1, q2, q3, q4 } if q1 == q3 => Some((q2, q4)),
            Rule::Send { from, to, .. } | Rule::Receive { from, to, .. } => Some((from, to)),
            _ => None,
        }
    }
}
