//! Seeded probabilistic schedulers and Monte Carlo estimates of convergence.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`; run `r` of an
//! estimate uses stream `r` of that generator, and a single `mc_run` uses stream 0.
//! Traces are therefore reproducible from `(ChaCha8, seed, run index)`.

use crate::error::{Error, Result};
use crate::protocol::{Model, MsgId, Protocol, StateId, TransId};
use crate::semantics::Configuration;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SchedulerKind {
    /// Two distinct agents chosen uniformly at random interact (PP, IT, IO).
    UniformPair,
    /// A uniform agent sends with probability `p`, otherwise receives a message
    /// drawn uniformly from the messages it can receive (QT, DT, DO).
    SendReceive(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scheduler {
    pub kind: SchedulerKind,
    pub seed: u64,
}

impl Scheduler {
    pub fn uniform_pair(seed: u64) -> Scheduler {
        Scheduler { kind: SchedulerKind::UniformPair, seed }
    }

    pub fn send_receive(p: f64, seed: u64) -> Result<Scheduler> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Invalid(format!("send probability must lie strictly between 0 and 1, got {p}")));
        }
        Ok(Scheduler { kind: SchedulerKind::SendReceive(p), seed })
    }

    /// The scheduler matching a model, with send probability `p` for delayed models.
    pub fn for_model(model: Model, p: f64, seed: u64) -> Result<Scheduler> {
        if model.is_delayed() {
            Scheduler::send_receive(p, seed)
        } else {
            Ok(Scheduler::uniform_pair(seed))
        }
    }

    fn check(&self, model: Model) -> Result<()> {
        let ok = match self.kind {
            SchedulerKind::UniformPair => model.is_pairwise(),
            SchedulerKind::SendReceive(p) => model.is_delayed() && p > 0.0 && p < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Model(format!("scheduler {self} does not apply to {model} protocols")))
        }
    }

    /// The generator for run `stream`.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SchedulerKind::UniformPair => write!(f, "uniform-pair(seed={})", self.seed),
            SchedulerKind::SendReceive(p) => write!(f, "s:{p}/r:{}(seed={})", 1.0 - p, self.seed),
        }
    }
}

/// Per-step record of one simulated run. Index `i` of the series describes the
/// configuration after `i` steps, so both series have `steps + 1` entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub steps: u64,
    pub noops: u64,
    pub consensus: Vec<Option<u8>>,
    pub message_counts: Vec<u64>,
    pub zero_message_visits: u64,
    pub final_config: Configuration,
}

impl McSummary {
    /// The message-count series as CSV with a header line.
    pub fn messages_csv(&self) -> String {
        let mut s = String::from("step,messages\n");
        for (i, m) in self.message_counts.iter().enumerate() {
            s.push_str(&format!("{i},{m}\n"));
        }
        s
    }
}

/// Transition tables used by the step sampler.
struct Tables {
    sends: Vec<Vec<TransId>>,
    receives: HashMap<(StateId, MsgId), Vec<TransId>>,
    pairs: HashMap<(StateId, StateId), Vec<TransId>>,
}

impl Tables {
    fn new(p: &Protocol) -> Tables {
        let mut pairs: HashMap<(StateId, StateId), Vec<TransId>> = HashMap::new();
        for (i, t) in p.transitions.iter().enumerate() {
            if let Some((q1, q2, _, _)) = t.rule.as_pair() {
                pairs.entry((q1, q2)).or_default().push(i);
            }
        }
        Tables { sends: p.sends_from(), receives: p.receives_at(), pairs }
    }
}

/// The state of the `k`-th agent in a fixed enumeration of the configuration.
fn agent_state(c: &Configuration, mut k: u64) -> StateId {
    for (q, &n) in c.agents.counts().iter().enumerate() {
        if k < n {
            return q;
        }
        k -= n;
    }
    unreachable!("agent index out of range")
}

/// One scheduler step; returns the fired transition or `None` for a no-op.
fn step(p: &Protocol, tables: &Tables, kind: SchedulerKind, c: &mut Configuration, rng: &mut impl Rng) -> Option<TransId> {
    let n = c.num_agents();
    if n == 0 {
        return None;
    }
    let t = match kind {
        SchedulerKind::UniformPair => {
            if n < 2 {
                return None;
            }
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let cands = tables.pairs.get(&(agent_state(c, a), agent_state(c, b)))?;
            cands[rng.random_range(0..cands.len())]
        }
        SchedulerKind::SendReceive(prob) => {
            let q = agent_state(c, rng.random_range(0..n));
            if rng.random_bool(prob) {
                let cands = &tables.sends[q];
                if cands.is_empty() {
                    return None;
                }
                cands[rng.random_range(0..cands.len())]
            } else {
                let avail: Vec<(MsgId, u64)> = (0..p.num_messages())
                    .filter(|&m| tables.receives.contains_key(&(q, m)))
                    .map(|m| (m, c.messages.get(m)))
                    .filter(|&(_, k)| k > 0)
                    .collect();
                let total: u64 = avail.iter().map(|x| x.1).sum();
                if total == 0 {
                    return None;
                }
                let mut k = rng.random_range(0..total);
                let m = avail
                    .iter()
                    .find(|&&(_, cnt)| {
                        if k < cnt {
                            true
                        } else {
                            k -= cnt;
                            false
                        }
                    })
                    .map(|x| x.0)
                    .expect("weighted choice within total");
                let cands = &tables.receives[&(q, m)];
                cands[rng.random_range(0..cands.len())]
            }
        }
    };
    let fired = p.fire(t, c, None);
    debug_assert!(fired, "sampled transition must be enabled");
    Some(t)
}

/// Simulates `max_steps` steps on stream `stream`, calling `observe(i, C_i)` on
/// every configuration including the initial one.
pub fn mc_run_observed(
    p: &Protocol,
    c0: &Configuration,
    sched: &Scheduler,
    stream: u64,
    max_steps: u64,
    mut observe: impl FnMut(u64, &Configuration),
) -> Result<McSummary> {
    sched.check(p.model)?;
    if c0.agents.dim() != p.num_states() || c0.messages.dim() != p.num_messages() {
        return Err(Error::Invalid("configuration dimensions do not match the protocol".into()));
    }
    let tables = Tables::new(p);
    let mut rng = sched.rng(stream);
    let mut c = c0.clone();
    let cap = max_steps as usize + 1;
    let mut consensus = Vec::with_capacity(cap);
    let mut message_counts = Vec::with_capacity(cap);
    let mut zero = 0;
    let mut noops = 0;
    let mut record = |i: u64, c: &Configuration| {
        consensus.push(p.consensus_of(&c.agents));
        message_counts.push(c.messages.size());
        if c.is_zero_message() {
            zero += 1;
        }
        observe(i, c);
    };
    record(0, &c);
    for i in 1..=max_steps {
        if step(p, &tables, sched.kind, &mut c, &mut rng).is_none() {
            noops += 1;
        }
        record(i, &c);
    }
    Ok(McSummary { steps: max_steps, noops, consensus, message_counts, zero_message_visits: zero, final_config: c })
}

/// Simulates `max_steps` steps on stream 0.
pub fn mc_run(p: &Protocol, c0: &Configuration, sched: &Scheduler, max_steps: u64) -> Result<McSummary> {
    mc_run_observed(p, c0, sched, 0, max_steps, |_, _| {})
}

/// A proportion with its 95% normal-approximation confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub samples: u64,
}

impl Estimate {
    pub fn proportion(hits: u64, samples: u64) -> Estimate {
        if samples == 0 {
            return Estimate { value: 0.0, lo: 0.0, hi: 1.0, samples };
        }
        let v = hits as f64 / samples as f64;
        let half = 1.96 * (v * (1.0 - v) / samples as f64).sqrt();
        Estimate { value: v, lo: (v - half).max(0.0), hi: (v + half).min(1.0), samples }
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} [{:.6}, {:.6}] n={}", self.value, self.lo, self.hi, self.samples)
    }
}

/// Raw statistics over independent runs; nothing is asserted here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStats {
    pub runs: u64,
    pub max_steps: u64,
    pub window: u64,
    /// Runs whose last `window` configurations are all `b`-consensuses, per `b`.
    pub stable: [Estimate; 2],
    /// Configurations (over all runs, initial ones excluded) with no message in transit.
    pub zero_message_rate: Estimate,
    /// Disjoint windows of `window` steps (initial configuration excluded, partial
    /// trailing windows dropped) containing a zero-message configuration.
    pub windows_with_zero: Estimate,
    /// Longest stretch of consecutive configurations with messages in transit.
    pub max_zero_gap: u64,
    pub noop_rate: Estimate,
}

/// Runs `runs` independent simulations (run `r` on stream `r`) and summarizes them.
pub fn estimate_convergence(
    p: &Protocol,
    c0: &Configuration,
    sched: &Scheduler,
    runs: u64,
    max_steps: u64,
    window: u64,
) -> Result<ConvergenceStats> {
    if runs == 0 {
        return Err(Error::Invalid("at least one run is required".into()));
    }
    if window == 0 || window > max_steps {
        return Err(Error::Invalid("the window must lie between 1 and the number of steps".into()));
    }
    let mut stable = [0u64; 2];
    let (mut zero, mut noops, mut win_hits, mut wins, mut gap) = (0, 0, 0, 0, 0);
    for r in 0..runs {
        let s = mc_run_observed(p, c0, sched, r, max_steps, |_, _| {})?;
        noops += s.noops;
        let tail = &s.consensus[(max_steps - window + 1) as usize..];
        for b in 0..2u8 {
            if tail.iter().all(|&x| x == Some(b)) {
                stable[b as usize] += 1;
            }
        }
        let counts = &s.message_counts[1..];
        zero += counts.iter().filter(|&&m| m == 0).count() as u64;
        for w in counts.chunks_exact(window as usize) {
            wins += 1;
            if w.contains(&0) {
                win_hits += 1;
            }
        }
        let mut run_len = 0;
        for &m in counts {
            run_len = if m == 0 { 0 } else { run_len + 1 };
            gap = gap.max(run_len);
        }
    }
    let total = runs * max_steps;
    Ok(ConvergenceStats {
        runs,
        max_steps,
        window,
        stable: [Estimate::proportion(stable[0], runs), Estimate::proportion(stable[1], runs)],
        zero_message_rate: Estimate::proportion(zero, total),
        windows_with_zero: Estimate::proportion(win_hits, wins),
        max_zero_gap: gap,
        noop_rate: Estimate::proportion(noops, total),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{io_example, more_than_half, qt_example};
    use crate::multiset::Multiset;

    fn mth_start(p: &Protocol) -> Configuration {
        Configuration::from_counts(p, &[0, 0, 1, 1])
    }

    #[test]
    fn invariant_index_plus_b() {
        let p = more_than_half();
        let b = p.msg_id("b").unwrap();
        let s = Scheduler::send_receive(0.5, 3).unwrap();
        mc_run_observed(&p, &mth_start(&p), &s, 0, 5000, |i, c| {
            let idx: u64 = (0..3).map(|q| q as u64 * c.agents.get(q)).sum();
            assert_eq!(idx + c.messages.get(b), 2, "step {i}");
        })
        .unwrap();
    }

    #[test]
    fn conservation_and_message_deltas() {
        let p = more_than_half();
        let s = Scheduler::send_receive(0.6, 11).unwrap();
        let r = mc_run_observed(&p, &mth_start(&p), &s, 0, 2000, |_, c| assert_eq!(c.num_agents(), 2)).unwrap();
        for w in r.message_counts.windows(2) {
            assert!(w[0].abs_diff(w[1]) <= 1);
        }
        assert_eq!(r.consensus.len(), 2001);
    }

    #[test]
    fn zero_transitions_keep_initial() {
        let mut p = io_example();
        p.transitions.clear();
        let c = Configuration::from_counts(&p, &[2, 1, 1]);
        let r = mc_run(&p, &c, &Scheduler::uniform_pair(5), 100).unwrap();
        assert_eq!(r.final_config, c);
        assert_eq!(r.noops, 100);
    }

    #[test]
    fn seeds_reproduce() {
        let p = io_example();
        let c = Configuration::from_counts(&p, &[4, 0, 1]);
        let s = Scheduler::uniform_pair(42);
        assert_eq!(mc_run(&p, &c, &s, 300).unwrap(), mc_run(&p, &c, &s, 300).unwrap());
        let a = mc_run_observed(&p, &c, &s, 1, 300, |_, _| {}).unwrap();
        let b = mc_run_observed(&p, &c, &s, 2, 300, |_, _| {}).unwrap();
        assert_ne!(a.consensus, b.consensus);
    }

    #[test]
    fn io_example_converges_to_one() {
        let p = io_example();
        let c = Configuration::from_counts(&p, &[4, 0, 1]);
        let r = mc_run(&p, &c, &Scheduler::uniform_pair(1), 500).unwrap();
        assert_eq!(r.final_config.agents, Multiset::from_counts(vec![0, 0, 5]));
    }

    #[test]
    fn scheduler_model_mismatch() {
        let p = io_example();
        let c = Configuration::from_counts(&p, &[1, 0, 1]);
        assert!(mc_run(&p, &c, &Scheduler::send_receive(0.5, 0).unwrap(), 1).is_err());
        assert!(Scheduler::send_receive(1.0, 0).is_err());
    }

    #[test]
    fn qt_example_reaches_one() {
        let p = qt_example();
        let c = Configuration::from_counts(&p, &[1, 0, 1]);
        let st = estimate_convergence(&p, &c, &Scheduler::send_receive(0.5, 9).unwrap(), 20, 2000, 100).unwrap();
        assert_eq!(st.stable[1].value, 1.0);
    }
}
