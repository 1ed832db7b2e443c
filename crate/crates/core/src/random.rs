//! Seeded random protocols, configurations, runs and constraints for testing and benchmarks.

use crate::counting::{Constraint, Cube, INF};
use crate::multiset::Multiset;
use crate::protocol::{Model, Protocol, Rule};
use crate::semantics::{support_set, Configuration, Run};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere randomness is needed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn state_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("q{i}")).collect()
}

fn random_outputs(p: &mut Protocol, rng: &mut impl Rng) {
    p.output = (0..p.num_states()).map(|_| rng.random_range(0..2u8)).collect();
    for q in 0..p.num_states() {
        p.add_input(&format!("x{q}"), q);
    }
}

/// An observation protocol (IO or MFDO) with at most one transition per
/// (state, observed state) pair, each present with probability `density`.
pub fn random_observation(model: Model, n: usize, density: f64, rng: &mut impl Rng) -> Protocol {
    assert!(matches!(model, Model::IO | Model::MFDO));
    let mut p = Protocol::new(model, state_names(n), Vec::new());
    for q in 0..n {
        for o in 0..n {
            if n > 1 && rng.random_bool(density) {
                let mut to = rng.random_range(0..n - 1);
                if to >= q {
                    to += 1;
                }
                p.add("", Rule::Observe { from: q, obs: o, to });
            }
        }
    }
    random_outputs(&mut p, rng);
    p
}

/// A DO protocol: each state broadcasts one of `m` messages, and each
/// (state, message) pair moves to a random state (often itself).
pub fn random_do(n: usize, m: usize, rng: &mut impl Rng) -> Protocol {
    let msgs: Vec<String> = (0..m).map(|i| format!("m{i}")).collect();
    let mut p = Protocol::new(Model::DO, state_names(n), msgs);
    for q in 0..n {
        let msg = rng.random_range(0..m);
        p.add("", Rule::Send { from: q, to: q, msg });
    }
    for q in 0..n {
        for msg in 0..m {
            let to = if rng.random_bool(0.5) { q } else { rng.random_range(0..n) };
            p.add("", Rule::Receive { from: q, msg, to });
        }
    }
    random_outputs(&mut p, rng);
    p
}

/// A DT protocol with total send and receive functions.
pub fn random_dt(n: usize, m: usize, rng: &mut impl Rng) -> Protocol {
    let msgs: Vec<String> = (0..m).map(|i| format!("m{i}")).collect();
    let mut p = Protocol::new(Model::DT, state_names(n), msgs);
    for q in 0..n {
        let msg = rng.random_range(0..m);
        let to = rng.random_range(0..n);
        p.add("", Rule::Send { from: q, to, msg });
    }
    for q in 0..n {
        for msg in 0..m {
            let to = rng.random_range(0..n);
            p.add("", Rule::Receive { from: q, msg, to });
        }
    }
    random_outputs(&mut p, rng);
    p
}

/// A uniformly random agent multiset of the given size.
pub fn random_agents(n: usize, size: u64, rng: &mut impl Rng) -> Multiset {
    let mut m = Multiset::zeros(n);
    for _ in 0..size {
        m.add(rng.random_range(0..n), 1);
    }
    m
}

/// A run of up to `len` uniformly chosen enabled transitions.
pub fn random_run(p: &Protocol, start: Configuration, len: usize, rng: &mut impl Rng) -> Run {
    let mut c = start.clone();
    let mut seen = (p.model == Model::MFDO).then(|| support_set(&c.agents));
    let mut run = Run::new(start);
    for _ in 0..len {
        let steps = p.enabled_steps(&c, seen.as_ref()).expect("dimensions match");
        let Some((t, _)) = steps.choose(rng) else { break };
        p.fire(*t, &mut c, seen.as_mut());
        run.push(*t, 1);
    }
    run
}

/// A random cube with lower norm at most `lmax` and upper norm at most `umax`.
pub fn random_cube(n: usize, lmax: u64, umax: u64, rng: &mut impl Rng) -> Cube {
    let mut c = Cube::top(n);
    let mut lbudget = rng.random_range(0..=lmax);
    let mut ubudget = rng.random_range(0..=umax);
    for q in 0..n {
        if lbudget > 0 && rng.random_bool(0.5) {
            let l = rng.random_range(1..=lbudget);
            c.lower[q] = l;
            lbudget -= l;
        }
        if rng.random_bool(0.4) {
            let lo = c.lower[q];
            if lo <= ubudget {
                let u = rng.random_range(lo..=ubudget);
                c.upper[q] = u;
                ubudget -= u;
            }
        }
    }
    debug_assert!(c.upper.iter().zip(&c.lower).all(|(u, l)| *u == INF || u >= l));
    c
}

/// A random constraint of up to `k` cubes.
pub fn random_constraint(n: usize, k: usize, lmax: u64, umax: u64, rng: &mut impl Rng) -> Constraint {
    let count = rng.random_range(1..=k);
    let cubes = (0..count).map(|_| random_cube(n, lmax, umax, rng)).collect();
    Constraint::from_cubes(n, cubes).expect("dimensions match")
}
