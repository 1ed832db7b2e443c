//! Small named protocols used throughout tests, benches and the command line.

use crate::protocol::{Model, Protocol, Rule};

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// The three-state IO protocol with `t1 = q1 ->^{q1} q2`, `t2 = q2 ->^{q2} q3`,
/// `t3 = q1 ->^{q3} q3`, `t4 = q2 ->^{q3} q3`; output 1 only on `q3`.
pub fn io_example() -> Protocol {
    let mut p = Protocol::new(Model::IO, names(&["q1", "q2", "q3"]), Vec::new());
    p.add("t1", Rule::Observe { from: 0, obs: 0, to: 1 });
    p.add("t2", Rule::Observe { from: 1, obs: 1, to: 2 });
    p.add("t3", Rule::Observe { from: 0, obs: 2, to: 2 });
    p.add("t4", Rule::Observe { from: 1, obs: 2, to: 2 });
    p.add_input("s1", 0);
    p.add_input("s2", 1);
    p.add_input("s3", 2);
    p.output = vec![0, 0, 1];
    p
}

/// Two-state IO protocol `q0 ->^{q1} q1` computing "σ1 ≥ 1".
pub fn two_state() -> Protocol {
    let mut p = Protocol::new(Model::IO, names(&["q0", "q1"]), Vec::new());
    p.add("t1", Rule::Observe { from: 0, obs: 1, to: 1 });
    p.add_input("s0", 0);
    p.add_input("s1", 1);
    p.output = vec![0, 1];
    p
}

/// The MFDO protocol `t1 = a ->^b ab`, `t2 = b ->^a ab`.
pub fn mfdo_ab() -> Protocol {
    let mut p = Protocol::new(Model::MFDO, names(&["a", "b", "ab"]), Vec::new());
    p.add("t1", Rule::Observe { from: 0, obs: 1, to: 2 });
    p.add("t2", Rule::Observe { from: 1, obs: 0, to: 2 });
    p.add_input("a", 0);
    p.add_input("b", 1);
    p.output = vec![0, 0, 1];
    p
}

/// The DO protocol where every state broadcasts its own name,
/// `a ? b -> ab` and `b ? a -> ab`; the other receives are the identity.
pub fn do_ab() -> Protocol {
    let mut p = Protocol::new(Model::DO, names(&["a", "b", "ab"]), names(&["a", "b", "ab"]));
    for q in 0..3 {
        let name = format!("s_{}", p.states[q]);
        p.add(&name, Rule::Send { from: q, to: q, msg: q });
    }
    p.add("t1", Rule::Receive { from: 0, msg: 1, to: 2 });
    p.add("t2", Rule::Receive { from: 1, msg: 0, to: 2 });
    p.complete_receives();
    p.add_input("a", 0);
    p.add_input("b", 1);
    p.output = vec![0, 0, 1];
    p
}

/// The three-state delayed protocol whose state index plus the number of `b`
/// messages is invariant, extended with an inert spectator state `sp`.
///
/// The spectator neither sends nor receives, so the receive function is partial
/// and the protocol is tagged QT.
pub fn more_than_half() -> Protocol {
    let mut p = Protocol::new(Model::QT, names(&["q0", "q1", "q2", "sp"]), names(&["a", "b"]));
    p.add("s0", Rule::Send { from: 0, to: 0, msg: 0 });
    p.add("s1", Rule::Send { from: 1, to: 0, msg: 1 });
    p.add("s2", Rule::Send { from: 2, to: 1, msg: 1 });
    p.add("r0a", Rule::Receive { from: 0, msg: 0, to: 0 });
    p.add("r0b", Rule::Receive { from: 0, msg: 1, to: 1 });
    p.add("r1a", Rule::Receive { from: 1, msg: 0, to: 1 });
    p.add("r1b", Rule::Receive { from: 1, msg: 1, to: 2 });
    p.add("r2a", Rule::Receive { from: 2, msg: 0, to: 2 });
    p.add("r2b", Rule::Receive { from: 2, msg: 1, to: 2 });
    p.add_input("x", 2);
    p.add_input("spectator", 3);
    p.output = vec![0, 0, 1, 0];
    p
}

/// Queued protocol `q0 -a+-> q0`, `q0 -a−-> q1` with an inert spectator; output 1 on `q1`.
pub fn qt_example() -> Protocol {
    let mut p = Protocol::new(Model::QT, names(&["q0", "q1", "sp"]), names(&["a"]));
    p.add("send", Rule::Send { from: 0, to: 0, msg: 0 });
    p.add("recv", Rule::Receive { from: 0, msg: 0, to: 1 });
    p.add_input("x", 0);
    p.add_input("spectator", 2);
    p.output = vec![0, 1, 1];
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_protocols_validate() {
        for p in [io_example(), two_state(), mfdo_ab(), do_ab(), more_than_half(), qt_example()] {
            assert!(p.validate().is_empty(), "{:?}: {:?}", p.model, p.validate());
        }
    }

    #[test]
    fn model_containment() {
        let io = io_example();
        assert!(io.validate_as(Model::IT).is_empty());
        assert!(io.validate_as(Model::PP).is_empty());
        let d = do_ab();
        assert!(d.validate_as(Model::DT).is_empty());
        assert!(d.validate_as(Model::QT).is_empty());
    }

    #[test]
    fn wrong_model_is_reported() {
        let mut io = io_example();
        io.model = Model::DO;
        assert!(!io.validate().is_empty());
    }

    #[test]
    fn do_sender_change_is_a_violation() {
        let mut p = do_ab();
        p.transitions[0].rule = Rule::Send { from: 0, to: 1, msg: 0 };
        let v = p.validate();
        assert_eq!(v.iter().filter(|s| s.contains("sender state changes")).count(), 1);
    }
}
