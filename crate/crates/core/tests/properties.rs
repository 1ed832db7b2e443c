mod common;

use popv_core::counting::{pre_star, Method};
use popv_core::gen::{tm_to_io, TuringMachine};
use popv_core::histories::{deanonymize, prune, prune_mfdo_linear, realize, shorten};
use popv_core::multiset::{multisets_of_size, Multiset};
use popv_core::random::{random_agents, random_constraint, random_do, random_dt, random_observation, random_run, rng};
use popv_core::stochastic::{mc_run_observed, Scheduler};
use popv_core::verify::{check_instance, check_instance_do_sigma2, check_saturation, flow_check, saturate, stable_set};
use popv_core::{reach_graph, Configuration, Model, Protocol};
use proptest::prelude::*;
use rand::Rng;
use std::collections::BTreeMap;

fn obs_model() -> impl Strategy<Value = Model> {
    prop_oneof![Just(Model::IO), Just(Model::MFDO)]
}

fn any_protocol(kind: u8, n: usize, seed: u64) -> Protocol {
    let mut r = rng(seed);
    match kind % 4 {
        0 => random_observation(Model::IO, n, 0.5, &mut r),
        1 => random_observation(Model::MFDO, n, 0.5, &mut r),
        2 => random_do(n, 2, &mut r),
        _ => random_dt(n, 2, &mut r),
    }
}

fn sub(m: &Multiset, r: &mut impl Rng) -> Multiset {
    Multiset::from_counts(m.counts().iter().map(|&k| r.random_range(0..=k)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn runs_conserve_agents(kind in 0u8..4, n in 2usize..5, size in 1u64..8, seed: u64) {
        let p = any_protocol(kind, n, seed);
        let mut r = rng(seed ^ 1);
        let start = Configuration::of_agents(&p, random_agents(n, size, &mut r));
        let run = random_run(&p, start, 40, &mut r);
        for c in p.trace(&run).unwrap() {
            prop_assert_eq!(c.num_agents(), size);
        }
    }

    #[test]
    fn reach_graph_is_closed(kind in 0u8..4, n in 2usize..4, size in 1u64..4, seed: u64) {
        let p = any_protocol(kind, n, seed);
        let mut r = rng(seed ^ 2);
        let start = Configuration::of_agents(&p, random_agents(n, size, &mut r));
        let g = reach_graph(&p, &[start], Some(3)).unwrap();
        for (i, node) in g.nodes.iter().enumerate() {
            for (t, _) in p.enabled_steps(&node.config, node.seen.as_ref()).unwrap() {
                let mut c = node.config.clone();
                let mut seen = node.seen.clone();
                p.fire(t, &mut c, seen.as_mut());
                if c.messages.size() > 3 {
                    continue;
                }
                let j = g.edges[i].iter().find(|e| e.0 == t).map(|e| e.1);
                prop_assert!(j.is_some(), "edge {t} missing at node {i}");
                prop_assert_eq!(&g.nodes[j.unwrap()].config, &c);
            }
        }
    }

    #[test]
    fn mfdo_seen_sets_grow(n in 2usize..5, size in 1u64..8, seed: u64) {
        let mut r = rng(seed);
        let p = random_observation(Model::MFDO, n, 0.6, &mut r);
        let start = Configuration::of_agents(&p, random_agents(n, size, &mut r));
        let run = random_run(&p, start, 30, &mut r);
        let h = deanonymize(&p, &run).unwrap();
        let seen = h.seen_sets(n);
        for w in seen.windows(2) {
            prop_assert!(w[0].is_subset(&w[1]));
        }
    }

    #[test]
    fn histories_round_trip(model in obs_model(), n in 2usize..5, size in 1u64..10, seed: u64) {
        let mut r = rng(seed);
        let p = random_observation(model, n, 0.5, &mut r);
        let start = Configuration::of_agents(&p, random_agents(n, size, &mut r));
        let run = random_run(&p, start, 30, &mut r);
        let h = deanonymize(&p, &run).unwrap();
        prop_assert!(h.is_well_structured());
        prop_assert_eq!(h.width() as u64, size);
        let back = realize(&p, &h).unwrap();
        prop_assert_eq!(p.apply_run(&back).unwrap(), p.apply_run(&run).unwrap());
        prop_assert_eq!(&back.start, &run.start);
        prop_assert_eq!(&h.first_config(n), &run.start.agents);
        prop_assert_eq!(&h.last_config(n), &p.apply_run(&run).unwrap().agents);
    }

    #[test]
    fn prune_is_sound(model in obs_model(), n in 2usize..5, size in 1u64..30, seed: u64) {
        let mut r = rng(seed);
        let p = random_observation(model, n, 0.5, &mut r);
        let start = Configuration::of_agents(&p, random_agents(n, size, &mut r));
        let run = random_run(&p, start, 50, &mut r);
        let end = p.apply_run(&run).unwrap();
        let (li, lf) = (sub(&run.start.agents, &mut r), sub(&end.agents, &mut r));
        let q = n as u64;
        let mut outs = vec![(prune(&p, &run, &li, &lf).unwrap(), q.pow(3))];
        if model == Model::MFDO {
            outs.push((prune_mfdo_linear(&p, &run, &li, &lf).unwrap(), q));
        }
        for (out, extra) in outs {
            let e = p.apply_run(&out).unwrap();
            prop_assert!(out.start.num_agents() <= li.size() + lf.size() + extra);
            prop_assert!(li.le(&out.start.agents) && lf.le(&e.agents));
            prop_assert!(out.start.agents.le(&run.start.agents));
        }
    }

    #[test]
    fn shorten_is_sound(n in 2usize..5, size in 1u64..8, seed: u64) {
        let mut r = rng(seed);
        let p = random_observation(Model::MFDO, n, 0.6, &mut r);
        let start = Configuration::of_agents(&p, random_agents(n, size, &mut r));
        let run = random_run(&p, start, 40, &mut r);
        let s = shorten(&p, &run).unwrap();
        prop_assert_eq!(&s.start, &run.start);
        prop_assert_eq!(p.apply_run(&s).unwrap(), p.apply_run(&run).unwrap());
        prop_assert!(s.aggregated_len() as u64 <= (n as u64).pow(4));
    }

    #[test]
    fn boolean_ops_are_pointwise(n in 1usize..4, seed: u64) {
        let mut r = rng(seed);
        let a = random_constraint(n, 3, 4, 4, &mut r);
        let b = random_constraint(n, 3, 4, 4, &mut r);
        let (u, x, c) = (a.union(&b).unwrap(), a.intersect(&b).unwrap(), a.complement());
        let cc = c.complement();
        for s in 0..=9 {
            for m in multisets_of_size(n, s) {
                let (ia, ib) = (a.contains(&m), b.contains(&m));
                prop_assert_eq!(u.contains(&m), ia || ib);
                prop_assert_eq!(x.contains(&m), ia && ib);
                prop_assert_eq!(c.contains(&m), !ia);
                prop_assert_eq!(cc.contains(&m), ia);
            }
        }
    }

    #[test]
    fn pre_star_contains_its_argument(model in obs_model(), n in 2usize..4, seed: u64) {
        let mut r = rng(seed);
        let p = random_observation(model, n, 0.4, &mut r);
        let g = random_constraint(n, 2, 3, 3, &mut r);
        let pre = pre_star(&p, &g, Method::Fixpoint).unwrap();
        for s in 0..=7 {
            for m in multisets_of_size(n, s) {
                prop_assert!(!g.contains(&m) || pre.contains(&m));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stable_sets_are_forward_closed(n in 2usize..4, b in 0u8..2, seed: u64) {
        let mut r = rng(seed);
        let p = random_observation(Model::IO, n, 0.4, &mut r);
        let stab = stable_set(&p, b).unwrap();
        for s in 1..=6 {
            for m in multisets_of_size(n, s) {
                if !stab.contains(&m) {
                    continue;
                }
                for c in common::reachable(&p, m.counts()) {
                    let c = Multiset::from_counts(c);
                    prop_assert!(stab.contains(&c));
                    prop_assert!((0..n).all(|q| c.get(q) == 0 || p.output[q] == b));
                }
            }
        }
    }

    #[test]
    fn sigma2_agrees_with_explicit_check(n in 2usize..4, m in 1usize..3, size in 1u64..4, b in 0u8..2, seed: u64) {
        let mut r = rng(seed);
        let p = random_do(n, m, &mut r);
        let c0 = Configuration::of_agents(&p, random_agents(n, size, &mut r));
        let explicit = check_instance(&p, &c0, b).unwrap();
        let sigma2 = check_instance_do_sigma2(&p, &c0, b).unwrap();
        prop_assert_eq!(explicit.is_correct(), sigma2.is_correct());
    }

    #[test]
    fn saturation_and_flow(n in 2usize..5, m in 1usize..4, size in 1u64..5, seed: u64) {
        let mut r = rng(seed);
        let p = random_do(n, m, &mut r);
        let z = Configuration::of_agents(&p, random_agents(n, size, &mut r));
        let s = saturate(&p, &z).unwrap();
        prop_assert!(check_saturation(&p, &s).is_ok());
        prop_assert_eq!(s.result.num_agents(), size);
        prop_assert!(flow_check(&p, &s, &s.result.agents).unwrap());
    }

    #[test]
    fn tm_simulation_matches_interpreter(nq in 1usize..4, ns in 1usize..3, k in 1usize..5, seed: u64) {
        let mut r = rng(seed);
        let mut states: Vec<String> = (0..nq).map(|i| format!("s{i}")).collect();
        states.extend(["acc".to_string(), "rej".to_string()]);
        let symbols = ["_", "a", "b"];
        let alphabet: Vec<String> = symbols[..=ns].iter().map(|s| s.to_string()).collect();
        let mut delta = BTreeMap::new();
        for q in 0..nq {
            for s in 0..alphabet.len() {
                if r.random_bool(0.85) {
                    let d = if r.random_bool(0.5) { 1 } else { -1 };
                    delta.insert((q, s), (r.random_range(0..nq + 2), r.random_range(0..alphabet.len()), d));
                }
            }
        }
        let tm = TuringMachine { states, alphabet, init: 0, accept: nq, reject: nq + 1, delta, k };
        let enc = tm_to_io(&tm).unwrap();
        let (_, trace) = tm.run();
        let mut c = enc.encode(&trace[0]);
        prop_assert!(enc.validate_modelling(&c));
        for next in &trace[1..] {
            let Some(d) = enc.simulate_tm_step(&c).unwrap() else {
                return Err(TestCaseError::fail("simulation stopped before the interpreter"));
            };
            prop_assert!(enc.validate_modelling(&d));
            let decoded = enc.decode(&d);
            prop_assert_eq!(decoded.as_ref(), Some(next));
            c = d;
        }
    }

    #[test]
    fn stochastic_runs_conserve_agents(kind in prop_oneof![Just(0u8), Just(2), Just(3)], n in 2usize..5, size in 2u64..8, seed: u64) {
        let p = any_protocol(kind, n, seed);
        let mut r = rng(seed ^ 3);
        let c0 = Configuration::of_agents(&p, random_agents(n, size, &mut r));
        let sched = Scheduler::for_model(p.model, 0.5, seed).unwrap();
        let mut ok = true;
        mc_run_observed(&p, &c0, &sched, 0, 2000, |_, c| ok &= c.num_agents() == size).unwrap();
        prop_assert!(ok);
    }
}
