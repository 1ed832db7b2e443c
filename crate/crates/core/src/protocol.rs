//! Protocol descriptions for the seven communication models and their structural validation.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

pub type StateId = usize;
pub type MsgId = usize;
pub type TransId = usize;

/// Communication model of a protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Model {
    /// Standard population protocols (rendez-vous).
    PP,
    /// Immediate transmission.
    IT,
    /// Immediate observation.
    IO,
    /// Queued transmission.
    QT,
    /// Delayed transmission.
    DT,
    /// Delayed observation.
    DO,
    /// Message-free delayed observation (observations of the seen set).
    MFDO,
}

impl Model {
    pub const ALL: [Model; 7] =
        [Model::PP, Model::IT, Model::IO, Model::QT, Model::DT, Model::DO, Model::MFDO];

    /// Models whose configurations carry messages.
    pub fn is_delayed(self) -> bool {
        matches!(self, Model::QT | Model::DT | Model::DO)
    }

    /// Models whose steps are pairwise rendez-vous (PP, IT, IO).
    pub fn is_pairwise(self) -> bool {
        matches!(self, Model::PP | Model::IT | Model::IO)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Model::PP => "PP",
            Model::IT => "IT",
            Model::IO => "IO",
            Model::QT => "QT",
            Model::DT => "DT",
            Model::DO => "DO",
            Model::MFDO => "MFDO",
        };
        f.write_str(s)
    }
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Model> {
        Model::ALL
            .iter()
            .copied()
            .find(|m| m.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Unknown { kind: "model", name: s.to_string() })
    }
}

/// The shape of a single transition.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// `(q1, q2) -> (q3, q4)`: rendez-vous of an initiator in `q1` and a responder in `q2`.
    Pair { q1: StateId, q2: StateId, q3: StateId, q4: StateId },
    /// `from ->^obs to`: an agent in `from` observes `obs` and moves to `to`.
    /// In IO this is the pair `(obs, from) -> (obs, to)`; in MFDO `obs` must have been seen.
    Observe { from: StateId, obs: StateId, to: StateId },
    /// `from -> to ! msg`: an agent sends `msg` and moves.
    Send { from: StateId, to: StateId, msg: MsgId },
    /// `from ? msg -> to`: an agent consumes `msg` and moves.
    Receive { from: StateId, msg: MsgId, to: StateId },
}

impl Rule {
    /// The pair view `(q1, q2) -> (q3, q4)` of a pairwise rule.
    pub fn as_pair(&self) -> Option<(StateId, StateId, StateId, StateId)> {
        match *self {
            Rule::Pair { q1, q2, q3, q4 } => Some((q1, q2, q3, q4)),
            Rule::Observe { from, obs, to } => Some((obs, from, obs, to)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub name: String,
    pub rule: Rule,
    /// Identity receive added to complete a partial receive function.
    pub implicit: bool,
}

/// A protocol of one of the seven models.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub model: Model,
    /// Allows several transitions per left-hand side (used by generated DT protocols).
    pub nondeterministic: bool,
    pub states: Vec<String>,
    pub messages: Vec<String>,
    /// Input alphabet Σ.
    pub inputs: Vec<String>,
    /// ι: input symbol index to state.
    pub init: Vec<StateId>,
    /// o: output bit per state.
    pub output: Vec<u8>,
    pub transitions: Vec<Transition>,
}

impl Protocol {
    pub fn new(model: Model, states: Vec<String>, messages: Vec<String>) -> Protocol {
        let n = states.len();
        Protocol {
            model,
            nondeterministic: false,
            states,
            messages,
            inputs: Vec::new(),
            init: Vec::new(),
            output: vec![0; n],
            transitions: Vec::new(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_messages(&self) -> usize {
        self.messages.len()
    }

    pub fn state_id(&self, name: &str) -> Result<StateId> {
        self.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Unknown { kind: "state", name: name.to_string() })
    }

    pub fn msg_id(&self, name: &str) -> Result<MsgId> {
        self.messages
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Unknown { kind: "message", name: name.to_string() })
    }

    pub fn input_id(&self, name: &str) -> Result<usize> {
        self.inputs
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Unknown { kind: "input symbol", name: name.to_string() })
    }

    pub fn trans_id(&self, name: &str) -> Result<TransId> {
        self.transitions
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::Unknown { kind: "transition", name: name.to_string() })
    }

    /// Appends a transition; an empty name gets the automatic name `t<index+1>`.
    pub fn add(&mut self, name: &str, rule: Rule) -> TransId {
        let id = self.transitions.len();
        let name = if name.is_empty() { format!("t{}", id + 1) } else { name.to_string() };
        self.transitions.push(Transition { name, rule, implicit: false });
        id
    }

    pub fn add_input(&mut self, symbol: &str, state: StateId) {
        self.inputs.push(symbol.to_string());
        self.init.push(state);
    }

    /// Completes δ_r with identity receives for every unwritten (q, m) pair.
    /// Returns the number of pairs added.
    pub fn complete_receives(&mut self) -> usize {
        let mut defined: BTreeSet<(StateId, MsgId)> = BTreeSet::new();
        for t in &self.transitions {
            if let Rule::Receive { from, msg, .. } = t.rule {
                defined.insert((from, msg));
            }
        }
        let mut added = 0;
        for q in 0..self.num_states() {
            for m in 0..self.num_messages() {
                if !defined.contains(&(q, m)) {
                    let name = format!("id[{}?{}]", self.states[q], self.messages[m]);
                    self.transitions.push(Transition {
                        name,
                        rule: Rule::Receive { from: q, msg: m, to: q },
                        implicit: true,
                    });
                    added += 1;
                }
            }
        }
        added
    }

    /// Informational notes produced alongside validation.
    pub fn notes(&self) -> Vec<String> {
        let implicit = self.transitions.iter().filter(|t| t.implicit).count();
        if implicit > 0 {
            vec![format!("{implicit} unwritten (state, message) receive pairs completed with the identity")]
        } else {
            Vec::new()
        }
    }

    /// Structural violations for the protocol's own model.
    pub fn validate(&self) -> Vec<String> {
        self.validate_as(self.model)
    }

    /// Structural violations when the protocol is read as a protocol of `model`.
    pub fn validate_as(&self, model: Model) -> Vec<String> {
        let mut v = Vec::new();
        let n = self.num_states();
        if self.init.len() != self.inputs.len() {
            v.push("input mapping does not cover the input alphabet".to_string());
        }
        if self.output.len() != n {
            v.push("output mapping does not cover the states".to_string());
        }
        for (i, &q) in self.init.iter().enumerate() {
            if q >= n {
                v.push(format!("input symbol {} maps to an unknown state", self.inputs[i]));
            }
        }
        for (q, &b) in self.output.iter().enumerate() {
            if b > 1 {
                v.push(format!("output of {} is not a bit", self.states[q]));
            }
        }
        for t in &self.transitions {
            let ok = match t.rule {
                Rule::Pair { q1, q2, q3, q4 } => q1 < n && q2 < n && q3 < n && q4 < n,
                Rule::Observe { from, obs, to } => from < n && obs < n && to < n,
                Rule::Send { from, to, msg } | Rule::Receive { from, msg, to } => {
                    from < n && to < n && msg < self.num_messages()
                }
            };
            if !ok {
                v.push(format!("transition {} references an unknown identifier", t.name));
            }
        }
        if !v.is_empty() {
            return v;
        }
        match model {
            Model::PP | Model::IT | Model::IO => self.validate_pairwise(model, &mut v),
            Model::MFDO => self.validate_mfdo(&mut v),
            Model::QT | Model::DT | Model::DO => self.validate_delayed(model, &mut v),
        }
        v
    }

    fn validate_pairwise(&self, model: Model, v: &mut Vec<String>) {
        let n = self.num_states();
        if !self.messages.is_empty() {
            v.push(format!("{model} protocols have no messages"));
        }
        let mut delta: BTreeMap<(StateId, StateId), Vec<(StateId, StateId, &str)>> = BTreeMap::new();
        for t in &self.transitions {
            match t.rule.as_pair() {
                Some((q1, q2, q3, q4)) => delta.entry((q1, q2)).or_default().push((q3, q4, &t.name)),
                None => v.push(format!("transition {} is a send/receive, not allowed in {model}", t.name)),
            }
        }
        if !self.nondeterministic {
            for ((q1, q2), outs) in &delta {
                let distinct: BTreeSet<(StateId, StateId)> = outs.iter().map(|o| (o.0, o.1)).collect();
                if distinct.len() > 1 {
                    v.push(format!(
                        "transition function not functional on ({}, {})",
                        self.states[*q1], self.states[*q2]
                    ));
                }
            }
        }
        match model {
            Model::IT => {
                for q1 in 0..n {
                    let mut firsts = BTreeSet::new();
                    for q2 in 0..n {
                        match delta.get(&(q1, q2)) {
                            Some(outs) => firsts.extend(outs.iter().map(|o| o.0)),
                            None => {
                                firsts.insert(q1);
                            }
                        }
                    }
                    if firsts.len() > 1 {
                        v.push(format!(
                            "first component of δ({}, ·) depends on the responder",
                            self.states[q1]
                        ));
                    }
                }
            }
            Model::IO => {
                for ((q1, _), outs) in &delta {
                    for (q3, _, name) in outs {
                        if q3 != q1 {
                            v.push(format!("transition {name} changes the observed agent"));
                        }
                    }
                }
            }
            _ => {}
        }
    }

    fn validate_mfdo(&self, v: &mut Vec<String>) {
        if !self.messages.is_empty() {
            v.push("MFDO protocols have no messages".to_string());
        }
        let mut delta: BTreeMap<(StateId, StateId), BTreeSet<StateId>> = BTreeMap::new();
        for t in &self.transitions {
            match t.rule {
                Rule::Observe { from, obs, to } => {
                    delta.entry((from, obs)).or_default().insert(to);
                }
                _ => v.push(format!("transition {} is not an observation, not allowed in MFDO", t.name)),
            }
        }
        if !self.nondeterministic {
            for ((q, o), outs) in &delta {
                if outs.len() > 1 {
                    v.push(format!(
                        "transition function not functional on ({}, {})",
                        self.states[*q], self.states[*o]
                    ));
                }
            }
        }
    }

    fn validate_delayed(&self, model: Model, v: &mut Vec<String>) {
        let mut sends: BTreeMap<StateId, BTreeSet<(MsgId, StateId)>> = BTreeMap::new();
        let mut recvs: BTreeMap<(StateId, MsgId), BTreeSet<StateId>> = BTreeMap::new();
        for t in &self.transitions {
            match t.rule {
                Rule::Send { from, to, msg } => {
                    sends.entry(from).or_default().insert((msg, to));
                    if model == Model::DO && from != to {
                        v.push(format!("transition {}: sender state changes", t.name));
                    }
                }
                Rule::Receive { from, msg, to } => {
                    recvs.entry((from, msg)).or_default().insert(to);
                }
                _ => v.push(format!("transition {} is not a send/receive, not allowed in {model}", t.name)),
            }
        }
        if !self.nondeterministic {
            for (q, outs) in &sends {
                if outs.len() > 1 {
                    v.push(format!("send function not functional on {}", self.states[*q]));
                }
            }
            for ((q, m), outs) in &recvs {
                if outs.len() > 1 {
                    v.push(format!(
                        "receive function not functional on ({}, {})",
                        self.states[*q], self.messages[*m]
                    ));
                }
            }
        }
        if matches!(model, Model::DT | Model::DO) {
            for q in 0..self.num_states() {
                for m in 0..self.num_messages() {
                    if !recvs.contains_key(&(q, m)) {
                        v.push(format!(
                            "receive function undefined on ({}, {})",
                            self.states[q], self.messages[m]
                        ));
                    }
                }
            }
        }
        if model == Model::DO {
            for q in 0..self.num_states() {
                if !sends.contains_key(&q) {
                    v.push(format!("send function undefined on {}", self.states[q]));
                }
            }
        }
    }

    /// Send transitions available from each state.
    pub fn sends_from(&self) -> Vec<Vec<TransId>> {
        let mut out = vec![Vec::new(); self.num_states()];
        for (i, t) in self.transitions.iter().enumerate() {
            if let Rule::Send { from, .. } = t.rule {
                out[from].push(i);
            }
        }
        out
    }

    /// Receive transitions indexed by (state, message).
    pub fn receives_at(&self) -> HashMap<(StateId, MsgId), Vec<TransId>> {
        let mut out: HashMap<(StateId, MsgId), Vec<TransId>> = HashMap::new();
        for (i, t) in self.transitions.iter().enumerate() {
            if let Rule::Receive { from, msg, .. } = t.rule {
                out.entry((from, msg)).or_default().push(i);
            }
        }
        out
    }

    /// The message sent by `q` in a DO protocol (δ_s(q) = (m, q)).
    pub fn do_message_of(&self, q: StateId) -> Option<MsgId> {
        self.transitions.iter().find_map(|t| match t.rule {
            Rule::Send { from, msg, .. } if from == q => Some(msg),
            _ => None,
        })
    }

    /// The receive successor δ_r(q, m), if defined (first matching transition).
    pub fn do_receive(&self, q: StateId, m: MsgId) -> Option<(TransId, StateId)> {
        self.transitions.iter().enumerate().find_map(|(i, t)| match t.rule {
            Rule::Receive { from, msg, to } if from == q && msg == m => Some((i, to)),
            _ => None,
        })
    }

    /// Observation triples `(from, obs, to)` of an IO or MFDO protocol, in transition order.
    pub fn observations(&self) -> Vec<(TransId, StateId, StateId, StateId)> {
        self.transitions
            .iter()
            .enumerate()
            .filter_map(|(i, t)| match t.rule {
                Rule::Observe { from, obs, to } => Some((i, from, obs, to)),
                Rule::Pair { q1, q2, q3, q4 } if q1 == q3 => Some((i, q2, q1, q4)),
                _ => None,
            })
            .collect()
    }

    /// Reverses every observation `q ->^o q'` into `q' ->^o q`.
    /// Reachability in the reversed protocol is the inverse relation.
    pub fn reversed(&self) -> Result<Protocol> {
        let mut r = self.clone();
        for t in &mut r.transitions {
            t.rule = match t.rule {
                Rule::Observe { from, obs, to } => Rule::Observe { from: to, obs, to: from },
                Rule::Pair { q1, q2, q3, q4 } if q1 == q3 => Rule::Observe { from: q4, obs: q1, to: q2 },
                _ => return Err(Error::Model("only observation protocols can be reversed".into())),
            };
        }
        Ok(r)
    }

    /// The output bits of a multiset of states: `Some(b)` iff every present state outputs b.
    pub fn consensus_of(&self, agents: &crate::Multiset) -> Option<u8> {
        let mut val = None;
        for q in agents.support() {
            match val {
                None => val = Some(self.output[q]),
                Some(b) if b != self.output[q] => return None,
                _ => {}
            }
        }
        val
    }
}

/// The MFDO protocol corresponding to a DO protocol, with the link back to receives.
#[derive(Clone, Debug)]
pub struct MfdoView {
    pub mfdo: Protocol,
    /// For each MFDO transition, the DO receive transition it stands for.
    pub receive_of: Vec<TransId>,
    /// For each DO state, the message it sends.
    pub message_of: Vec<MsgId>,
}

impl Protocol {
    /// Builds the corresponding MFDO protocol: `q ->^o q'` iff `q' = δ_r(q, m)` and `δ_s(o) = (m, o)`.
    /// Self-loops are omitted since they never change a configuration.
    pub fn to_mfdo(&self) -> Result<MfdoView> {
        if self.model != Model::DO {
            return Err(Error::Model(format!("expected a DO protocol, got {}", self.model)));
        }
        let n = self.num_states();
        let mut message_of = Vec::with_capacity(n);
        for q in 0..n {
            message_of.push(
                self.do_message_of(q)
                    .ok_or_else(|| Error::Model(format!("state {} sends no message", self.states[q])))?,
            );
        }
        let mut mfdo = Protocol::new(Model::MFDO, self.states.clone(), Vec::new());
        mfdo.inputs = self.inputs.clone();
        mfdo.init = self.init.clone();
        mfdo.output = self.output.clone();
        mfdo.nondeterministic = self.nondeterministic;
        let mut receive_of = Vec::new();
        for (ti, t) in self.transitions.iter().enumerate() {
            if let Rule::Receive { from, msg, to } = t.rule {
                if from == to {
                    continue;
                }
                for o in 0..n {
                    if message_of[o] == msg {
                        mfdo.transitions.push(Transition {
                            name: format!("{}@{}", t.name, self.states[o]),
                            rule: Rule::Observe { from, obs: o, to },
                            implicit: false,
                        });
                        receive_of.push(ti);
                    }
                }
            }
        }
        Ok(MfdoView { mfdo, receive_of, message_of })
    }
}
