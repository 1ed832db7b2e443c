mod common;

use popv_core::counting::{post_star, pre_star, pre_star_zm, Constraint, Cube, Method, INF};
use popv_core::multiset::multisets_of_size;
use popv_core::{catalog, random, Model, Multiset, Protocol};

const MAX: u64 = 8;

fn assert_matches(p: &Protocol, got: &Constraint, oracle: &std::collections::BTreeSet<Vec<u64>>, what: &str) {
    for s in 0..=MAX {
        for m in multisets_of_size(p.num_states(), s) {
            assert_eq!(got.contains(&m), oracle.contains(m.counts()), "{what}: {m:?}");
        }
    }
}

fn check_norms(p: &Protocol, input: &Constraint, out: &Constraint) {
    let n = p.num_states() as u64;
    assert!(out.unorm() <= input.unorm(), "unorm grew: {input:?} -> {out:?}");
    assert!(out.lnorm() <= input.lnorm() + n.pow(3), "lnorm beyond bound");
}

#[test]
fn io_closures_agree_with_oracle_and_each_other() {
    let mut rng = random::rng(11);
    for i in 0..30 {
        let n = 2 + i % 2;
        let p = random::random_observation(Model::IO, n, 0.4, &mut rng);
        let g = random::random_constraint(n, 2, 3, 3, &mut rng);
        let opre = common::explicit_pre(&p, |m| g.contains(m), MAX);
        let opost = common::explicit_post(&p, |m| g.contains(m), MAX);
        for method in [Method::Fixpoint, Method::Witness] {
            let pre = pre_star(&p, &g, method).unwrap();
            let post = post_star(&p, &g, method).unwrap();
            assert_matches(&p, &pre, &opre, &format!("pre #{i} {method:?}"));
            assert_matches(&p, &post, &opost, &format!("post #{i} {method:?}"));
            check_norms(&p, &g, &pre);
            check_norms(&p, &g, &post);
        }
    }
}

#[test]
fn mfdo_closures_agree_with_oracle() {
    let mut rng = random::rng(12);
    for i in 0..30 {
        let n = 2 + i % 2;
        let p = random::random_observation(Model::MFDO, n, 0.4, &mut rng);
        let g = random::random_constraint(n, 2, 2, 2, &mut rng);
        let opre = common::explicit_pre(&p, |m| g.contains(m), MAX);
        let opost = common::explicit_post(&p, |m| g.contains(m), MAX);
        for method in [Method::Fixpoint, Method::Witness] {
            let pre = pre_star(&p, &g, method).unwrap();
            let post = post_star(&p, &g, method).unwrap();
            assert_matches(&p, &pre, &opre, &format!("pre #{i} {method:?}"));
            assert_matches(&p, &post, &opost, &format!("post #{i} {method:?}"));
        }
    }
}

#[test]
fn top_is_closed() {
    let p = catalog::io_example();
    let top = Constraint::top(3);
    for method in [Method::Fixpoint, Method::Witness] {
        let pre = pre_star(&p, &top, method).unwrap();
        assert!(pre.contains(&Multiset::zeros(3)));
        assert!(pre.contains(&Multiset::from_counts(vec![5, 2, 9])));
    }
}

#[test]
fn empty_population_post_is_empty() {
    let p = catalog::io_example();
    let zero = Constraint::from_cubes(3, vec![Cube::new(vec![0; 3], vec![0; 3])]).unwrap();
    let post = post_star(&p, &zero, Method::Fixpoint).unwrap();
    assert!(post.is_empty_population());
}

#[test]
fn io_example_norm_bounds() {
    let p = catalog::io_example();
    let g = Constraint::from_cubes(3, vec![Cube::new(vec![0, 0, 2], vec![INF; 3])]).unwrap();
    let pre = pre_star(&p, &g, Method::Fixpoint).unwrap();
    assert!(pre.lnorm() <= 2 + 27);
    assert_eq!(pre.unorm(), 0);
    let w = pre_star(&p, &g, Method::Witness).unwrap();
    let oracle = common::explicit_pre(&p, |m| g.contains(m), MAX);
    assert_matches(&p, &pre, &oracle, "fixpoint");
    assert_matches(&p, &w, &oracle, "witness");
}

#[test]
fn do_zero_message_pre() {
    let p = catalog::do_ab();
    let g = Constraint::from_cubes(3, vec![Cube::new(vec![0, 0, 2], vec![INF; 3])]).unwrap();
    let pre = pre_star_zm(&p, &g, Method::Fixpoint).unwrap();
    assert!(pre.contains(&Multiset::from_counts(vec![1, 1, 0])));
    let mfdo = catalog::mfdo_ab();
    let direct = pre_star(&mfdo, &g, Method::Witness).unwrap();
    for s in 0..=MAX {
        for m in multisets_of_size(3, s) {
            assert_eq!(pre.contains(&m), direct.contains(&m), "{m:?}");
        }
    }
    let top = pre_star_zm(&p, &Constraint::top(3), Method::Fixpoint).unwrap();
    assert!(top.contains(&Multiset::from_counts(vec![3, 0, 4])));
}
