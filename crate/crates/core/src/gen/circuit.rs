//! Boolean circuits with quantified inputs and their DO evaluation protocol.

use super::lines;
use crate::error::{Error, Result};
use crate::format::valid_ident;
use crate::multiset::Multiset;
use crate::protocol::{Model, MsgId, Protocol, Rule, StateId};
use crate::semantics::Configuration;
use std::collections::BTreeMap;

/// Maximal gate arity.
pub const MAX_ARITY: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantifier {
    Exists,
    Forall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    And,
    Or,
    Not,
}

impl Op {
    /// Strict evaluation: unknown if any argument is unknown.
    pub fn apply(self, args: &[Option<bool>]) -> Option<bool> {
        let vals: Option<Vec<bool>> = args.iter().copied().collect();
        let vals = vals?;
        Some(match self {
            Op::And => vals.iter().all(|&b| b),
            Op::Or => vals.iter().any(|&b| b),
            Op::Not => !vals[0],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gate {
    pub name: String,
    pub op: Op,
    /// Argument node ids; inputs come first in the node numbering, then gates.
    pub args: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Circuit {
    pub inputs: Vec<(String, Quantifier)>,
    pub gates: Vec<Gate>,
    /// Node id of the output gate.
    pub output: usize,
}

impl Circuit {
    pub fn num_nodes(&self) -> usize {
        self.inputs.len() + self.gates.len()
    }

    pub fn node_name(&self, n: usize) -> &str {
        if n < self.inputs.len() {
            &self.inputs[n].0
        } else {
            &self.gates[n - self.inputs.len()].name
        }
    }

    pub fn is_input(&self, n: usize) -> bool {
        n < self.inputs.len()
    }

    pub fn args(&self, n: usize) -> &[usize] {
        if self.is_input(n) {
            &[]
        } else {
            &self.gates[n - self.inputs.len()].args
        }
    }

    /// Checks arities, acyclicity (arguments precede their gate), and that every
    /// node reaches the output gate.
    pub fn validate(&self) -> Result<()> {
        let ni = self.inputs.len();
        if self.output < ni || self.output >= self.num_nodes() {
            return Err(Error::Invalid("the output must be a gate".into()));
        }
        for (i, g) in self.gates.iter().enumerate() {
            let arity_ok = match g.op {
                Op::Not => g.args.len() == 1,
                Op::And | Op::Or => (1..=MAX_ARITY).contains(&g.args.len()),
            };
            if !arity_ok {
                return Err(Error::Invalid(format!("gate {} has a bad arity", g.name)));
            }
            if g.args.iter().any(|&a| a >= ni + i) {
                return Err(Error::Invalid(format!("gate {} uses a later node", g.name)));
            }
        }
        let mut reaches = vec![false; self.num_nodes()];
        reaches[self.output] = true;
        for n in (0..self.num_nodes()).rev() {
            if reaches[n] {
                for &a in self.args(n) {
                    reaches[a] = true;
                }
            }
        }
        if let Some(n) = reaches.iter().position(|&r| !r) {
            return Err(Error::Invalid(format!("node {} is not connected to the output", self.node_name(n))));
        }
        Ok(())
    }

    /// The output value on an assignment of the inputs.
    pub fn eval(&self, inputs: &[bool]) -> bool {
        let mut val: Vec<Option<bool>> = inputs.iter().map(|&b| Some(b)).collect();
        for g in &self.gates {
            let args: Vec<Option<bool>> = g.args.iter().map(|&a| val[a]).collect();
            val.push(g.op.apply(&args));
        }
        val[self.output].expect("all inputs assigned")
    }
}

/// `∃x ∀y Γ(x, y) = 1`, by enumeration.
pub fn qbf_holds(c: &Circuit) -> bool {
    let ex: Vec<usize> = (0..c.inputs.len()).filter(|&i| c.inputs[i].1 == Quantifier::Exists).collect();
    let un: Vec<usize> = (0..c.inputs.len()).filter(|&i| c.inputs[i].1 == Quantifier::Forall).collect();
    (0..1u64 << ex.len()).any(|xm| {
        (0..1u64 << un.len()).all(|ym| {
            let mut v = vec![false; c.inputs.len()];
            for (j, &i) in ex.iter().enumerate() {
                v[i] = xm >> j & 1 == 1;
            }
            for (j, &i) in un.iter().enumerate() {
                v[i] = ym >> j & 1 == 1;
            }
            c.eval(&v)
        })
    })
}

/// Parses a circuit file: `in x exists|forall`, `gate g AND|OR|NOT a b`, `out g`.
pub fn parse_circuit(text: &str) -> Result<Circuit> {
    let mut inputs = Vec::new();
    let mut gates: Vec<Gate> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut output = None;
    for line in lines(text) {
        let fresh = |i: usize, names: &[String]| -> Result<String> {
            let t = line.tok(i)?;
            if !valid_ident(t) || names.iter().any(|n| n == t) {
                return Err(line.err(i, format!("invalid or duplicate node `{t}`")));
            }
            Ok(t.to_string())
        };
        match line.tok(0)? {
            "in" => {
                if !gates.is_empty() {
                    return Err(line.err(0, "inputs must be declared before gates"));
                }
                let name = fresh(1, &names)?;
                let q = match line.tok(2)? {
                    "exists" => Quantifier::Exists,
                    "forall" => Quantifier::Forall,
                    t => return Err(line.err(2, format!("expected exists or forall, found `{t}`"))),
                };
                names.push(name.clone());
                inputs.push((name, q));
            }
            "gate" => {
                let name = fresh(1, &names)?;
                let op = match line.tok(2)?.to_ascii_uppercase().as_str() {
                    "AND" => Op::And,
                    "OR" => Op::Or,
                    "NOT" => Op::Not,
                    t => return Err(line.err(2, format!("unknown operation `{t}`"))),
                };
                let mut args = Vec::new();
                for i in 3..line.toks.len() {
                    let t = line.toks[i].1;
                    let a = names.iter().position(|n| n == t).ok_or_else(|| line.err(i, format!("unknown node `{t}`")))?;
                    args.push(a);
                }
                names.push(name.clone());
                gates.push(Gate { name, op, args });
            }
            "out" => {
                let t = line.tok(1)?;
                output = Some(names.iter().position(|n| n == t).ok_or_else(|| line.err(1, format!("unknown node `{t}`")))?);
            }
            t => return Err(line.err(0, format!("unknown keyword `{t}`"))),
        }
    }
    let output = output.ok_or_else(|| Error::parse(1, 1, "missing `out` line"))?;
    let c = Circuit { inputs, gates, output };
    c.validate()?;
    Ok(c)
}

fn val_char(v: Option<bool>) -> char {
    match v {
        None => 'u',
        Some(false) => '0',
        Some(true) => '1',
    }
}

const VALUES: [Option<bool>; 3] = [None, Some(false), Some(true)];

/// A non-failure state of the evaluation protocol.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct NodeState {
    pub node: usize,
    pub value: Option<bool>,
    pub args: Vec<Option<bool>>,
    pub out: Option<bool>,
}

/// The generated DO protocol and its state/message layout.
#[derive(Clone, Debug)]
pub struct CircuitProtocol {
    pub circuit: Circuit,
    pub protocol: Protocol,
    pub states: Vec<NodeState>,
    pub index: BTreeMap<NodeState, StateId>,
    /// The failure state.
    pub bot: StateId,
    /// `message[node][v]` with `v` indexed as unknown, 0, 1.
    pub message: Vec<[MsgId; 3]>,
    pub m_bot: MsgId,
}

fn vidx(v: Option<bool>) -> usize {
    match v {
        None => 0,
        Some(false) => 1,
        Some(true) => 2,
    }
}

/// Builds the DO protocol that guesses input values, evaluates the circuit, and
/// adds the failure state, existential-conflict and universal-flip rules.
///
/// Gate states only carry values consistent with their argument opinions. When
/// several rules apply to one receive they are combined: the node-value update
/// happens first and the opinion about the output is updated after it.
pub fn circuit_to_do(c: &Circuit) -> Result<CircuitProtocol> {
    c.validate()?;
    let mut states = Vec::new();
    for n in 0..c.num_nodes() {
        if c.is_input(n) {
            for v in VALUES {
                for o in VALUES {
                    states.push(NodeState { node: n, value: v, args: Vec::new(), out: o });
                }
            }
        } else {
            let k = c.args(n).len();
            let op = c.gates[n - c.inputs.len()].op;
            for code in 0..3usize.pow(k as u32) {
                let args: Vec<Option<bool>> = (0..k).map(|i| VALUES[code / 3usize.pow((k - 1 - i) as u32) % 3]).collect();
                for o in VALUES {
                    states.push(NodeState { node: n, value: op.apply(&args), args: args.clone(), out: o });
                }
            }
        }
    }
    let name = |s: &NodeState| -> String {
        let args: String = s.args.iter().map(|&a| val_char(a)).collect();
        if c.is_input(s.node) {
            format!("{}.{}.{}", c.node_name(s.node), val_char(s.value), val_char(s.out))
        } else {
            format!("{}.{}.{}.{}", c.node_name(s.node), val_char(s.value), args, val_char(s.out))
        }
    };
    let mut names: Vec<String> = states.iter().map(name).collect();
    names.push("bot".into());
    let bot = states.len();
    let mut msgs = Vec::new();
    let mut message = Vec::new();
    for n in 0..c.num_nodes() {
        let mut ids = [0; 3];
        for v in VALUES {
            ids[vidx(v)] = msgs.len();
            msgs.push(format!("{}.{}", c.node_name(n), val_char(v)));
        }
        message.push(ids);
    }
    let m_bot = msgs.len();
    msgs.push("m_bot".into());
    let index: BTreeMap<NodeState, StateId> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let mut p = Protocol::new(Model::DO, names, msgs);
    for (q, s) in states.iter().enumerate() {
        p.add("", Rule::Send { from: q, to: q, msg: message[s.node][vidx(s.value)] });
    }
    p.add("", Rule::Send { from: bot, to: bot, msg: m_bot });
    let go = c.output;
    for (q, s) in states.iter().enumerate() {
        p.add("", Rule::Receive { from: q, msg: m_bot, to: bot });
        for mn in 0..c.num_nodes() {
            for mv in VALUES {
                let m = message[mn][vidx(mv)];
                let mut t = s.clone();
                let mut fail = false;
                if c.is_input(s.node) {
                    match s.value {
                        None if mn == s.node => t.value = Some(false),
                        None if mn == go => t.value = Some(true),
                        None => {}
                        Some(v) => {
                            let quant = c.inputs[s.node].1;
                            if quant == Quantifier::Exists && mn == s.node && mv.is_some_and(|x| x != v) {
                                fail = true;
                            }
                            if quant == Quantifier::Forall && mn == go && mv == Some(true) {
                                t.value = Some(!v);
                            }
                        }
                    }
                } else {
                    let op = c.gates[s.node - c.inputs.len()].op;
                    for (i, &a) in c.args(s.node).iter().enumerate() {
                        if a == mn {
                            t.args[i] = mv;
                        }
                    }
                    t.value = op.apply(&t.args);
                }
                if mn == go && mv.is_some() {
                    t.out = mv;
                }
                let to = if fail { bot } else { index[&t] };
                if to != q {
                    p.add("", Rule::Receive { from: q, msg: m, to });
                }
            }
        }
    }
    p.complete_receives();
    for n in 0..c.num_nodes() {
        let init = NodeState { node: n, value: None, args: vec![None; c.args(n).len()], out: None };
        p.add_input(c.node_name(n), index[&init]);
    }
    p.output = states.iter().map(|s| u8::from(s.out == Some(true))).chain([0]).collect();
    Ok(CircuitProtocol { circuit: c.clone(), protocol: p, states, index, bot, message, m_bot })
}

impl CircuitProtocol {
    /// One agent per node, all values unknown.
    pub fn one_per_node(&self) -> Configuration {
        let d = Multiset::from_counts(vec![1; self.circuit.num_nodes()]);
        crate::verify::input_config(&self.protocol, &d)
    }

    /// The node of a non-failure state.
    pub fn node_of(&self, q: StateId) -> Option<usize> {
        self.states.get(q).map(|s| s.node)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reach::reach_graph;
    use crate::verify::{check_instance, Status};

    fn not_circuit() -> Circuit {
        parse_circuit("in x exists\ngate g NOT x\nout g\n").unwrap()
    }

    #[test]
    fn parse_and_eval() {
        let c = parse_circuit("in x exists\nin y forall\ngate g AND x y\nout g\n").unwrap();
        assert!(c.eval(&[true, true]));
        assert!(!c.eval(&[true, false]));
        assert!(!qbf_holds(&c));
        let c = parse_circuit("in x exists\nin y forall\ngate g OR x y\nout g\n").unwrap();
        assert!(qbf_holds(&c));
        assert!(qbf_holds(&not_circuit()));
        let e = parse_circuit("in x exists\nin y exists\ngate g NOT x\nout g\n").unwrap_err();
        assert!(matches!(e, Error::Invalid(_)));
        let e = parse_circuit("in x exists\ngate g AND z\nout g\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, col: 12, .. }), "{e:?}");
    }

    #[test]
    fn protocol_shape() {
        let cp = circuit_to_do(&parse_circuit("in x exists\nin y forall\ngate g AND x y\nout g\n").unwrap()).unwrap();
        assert_eq!(cp.protocol.num_states(), 9 + 9 + 27 + 1);
        assert_eq!(cp.protocol.num_messages(), 3 * 3 + 1);
        assert!(cp.protocol.validate().is_empty(), "{:?}", cp.protocol.validate());
    }

    /// From one agent per node, a universal input that makes the output 1 is
    /// flipped, so the protocol settles on 0; an existential input can keep it at 1.
    #[test]
    fn single_not_instances() {
        let mut c = not_circuit();
        let cp = circuit_to_do(&c).unwrap();
        assert_eq!(check_instance(&cp.protocol, &cp.one_per_node(), 0).unwrap().status, Status::Incorrect);
        c.inputs[0].1 = Quantifier::Forall;
        let cp = circuit_to_do(&c).unwrap();
        assert!(check_instance(&cp.protocol, &cp.one_per_node(), 0).unwrap().is_correct());
    }

    #[test]
    fn conflicting_existential_agents_fail() {
        let c = parse_circuit("in x exists\ngate g AND x\nout g\n").unwrap();
        let cp = circuit_to_do(&c).unwrap();
        let mut start = cp.one_per_node();
        start.agents.add(cp.protocol.init[0], 1);
        let g = reach_graph(&cp.protocol, &[start.clone()], Some(4)).unwrap();
        let all_bot = g.nodes.iter().any(|n| n.config.agents.get(cp.bot) == 3 && n.config.is_zero_message());
        assert!(all_bot);
    }

    #[test]
    fn nodes_never_change() {
        let c = parse_circuit("in x exists\nin y forall\ngate g OR x y\nout g\n").unwrap();
        let cp = circuit_to_do(&c).unwrap();
        for t in &cp.protocol.transitions {
            if let Rule::Receive { from, to, .. } = t.rule {
                if to != cp.bot {
                    assert_eq!(cp.node_of(from), cp.node_of(to));
                }
            }
        }
    }
}
