//! Counting constraints (finite unions of cubes) and their reachability closures.

use crate::error::{Error, Result};
use crate::histories::{deanonymize, prune};
use crate::multiset::{count_multisets, multisets_of_size, Multiset};
use crate::protocol::{Model, Protocol, StateId};
use crate::reach::{node_budget, reach_graph_with_budget, ReachGraph};
use crate::semantics::{Configuration, Run, Seen};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt::Write as _;

/// The unbounded upper bound.
pub const INF: u64 = u64::MAX;

fn add_inf(a: u64, k: u64) -> u64 {
    if a == INF {
        INF
    } else {
        a.saturating_add(k).min(INF - 1)
    }
}

/// A cube `{C : L ≤ C ≤ U}`; upper bounds may be [`INF`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cube {
    pub lower: Vec<u64>,
    pub upper: Vec<u64>,
}

impl Cube {
    pub fn new(lower: Vec<u64>, upper: Vec<u64>) -> Cube {
        assert_eq!(lower.len(), upper.len());
        Cube { lower, upper }
    }

    /// All configurations.
    pub fn top(dim: usize) -> Cube {
        Cube { lower: vec![0; dim], upper: vec![INF; dim] }
    }

    /// The single configuration `m`.
    pub fn point(m: &Multiset) -> Cube {
        Cube { lower: m.counts().to_vec(), upper: m.counts().to_vec() }
    }

    /// Configurations `C ≥ m`.
    pub fn above(m: &Multiset) -> Cube {
        Cube { lower: m.counts().to_vec(), upper: vec![INF; m.dim()] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| l > u)
    }

    pub fn contains(&self, m: &Multiset) -> bool {
        m.counts().iter().enumerate().all(|(q, &c)| self.lower[q] <= c && c <= self.upper[q])
    }

    /// Whether `other ⊆ self` (for nonempty `other`).
    pub fn subsumes(&self, other: &Cube) -> bool {
        (0..self.dim()).all(|q| self.lower[q] <= other.lower[q] && other.upper[q] <= self.upper[q])
    }

    pub fn intersect(&self, other: &Cube) -> Cube {
        Cube {
            lower: self.lower.iter().zip(&other.lower).map(|(a, b)| *a.max(b)).collect(),
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| *a.min(b)).collect(),
        }
    }

    pub fn lnorm(&self) -> u64 {
        self.lower.iter().sum()
    }

    pub fn unorm(&self) -> u64 {
        self.upper.iter().filter(|&&u| u != INF).sum()
    }

    /// Raises the lower bound of `q` to at least `v`.
    pub fn at_least(mut self, q: StateId, v: u64) -> Cube {
        self.lower[q] = self.lower[q].max(v);
        self
    }

    /// Lowers the upper bound of `q` to at most `v`.
    pub fn at_most(mut self, q: StateId, v: u64) -> Cube {
        self.upper[q] = self.upper[q].min(v);
        self
    }

    /// Largest member size, or `None` if unbounded.
    pub fn max_size(&self) -> Option<u64> {
        if self.upper.contains(&INF) {
            None
        } else {
            Some(self.upper.iter().sum())
        }
    }

    /// The complement as a union of half-space cubes.
    pub fn complement(&self) -> Vec<Cube> {
        let n = self.dim();
        let mut out = Vec::new();
        for q in 0..n {
            if self.lower[q] > 0 {
                out.push(Cube::top(n).at_most(q, self.lower[q] - 1));
            }
            if self.upper[q] != INF {
                out.push(Cube::top(n).at_least(q, self.upper[q] + 1));
            }
        }
        out
    }
}

/// A finite union of cubes over a fixed dimension.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    dim: usize,
    cubes: Vec<Cube>,
}

impl Constraint {
    pub fn empty(dim: usize) -> Constraint {
        Constraint { dim, cubes: Vec::new() }
    }

    pub fn top(dim: usize) -> Constraint {
        Constraint { dim, cubes: vec![Cube::top(dim)] }
    }

    /// A canonical constraint from cubes, all of dimension `dim`.
    pub fn from_cubes(dim: usize, cubes: Vec<Cube>) -> Result<Constraint> {
        if cubes.iter().any(|c| c.dim() != dim) {
            return Err(Error::Invalid("cube dimension mismatch".into()));
        }
        let mut g = Constraint { dim, cubes };
        g.canonicalize();
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    /// True iff the constraint denotes the empty set.
    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn member(&self, m: &Multiset) -> Result<bool> {
        if m.dim() != self.dim {
            return Err(Error::Invalid(format!("configuration has dimension {}, expected {}", m.dim(), self.dim)));
        }
        Ok(self.contains(m))
    }

    /// Membership without the dimension check.
    pub fn contains(&self, m: &Multiset) -> bool {
        self.cubes.iter().any(|c| c.contains(m))
    }

    /// First cube containing `m`.
    pub fn cube_of(&self, m: &Multiset) -> Option<&Cube> {
        self.cubes.iter().find(|c| c.contains(m))
    }

    pub fn lnorm(&self) -> u64 {
        self.cubes.iter().map(Cube::lnorm).max().unwrap_or(0)
    }

    pub fn unorm(&self) -> u64 {
        self.cubes.iter().map(Cube::unorm).max().unwrap_or(0)
    }

    /// Removes empty and subsumed cubes; the result is sorted.
    pub fn canonicalize(&mut self) {
        let mut cubes: Vec<Cube> = std::mem::take(&mut self.cubes).into_iter().filter(|c| !c.is_empty()).collect();
        cubes.sort();
        cubes.dedup();
        // Cubes with small lower norms tend to subsume others; test them first.
        cubes.sort_by_key(|c| (c.lnorm(), std::cmp::Reverse(c.upper.iter().filter(|&&u| u == INF).count())));
        let mut kept: Vec<Cube> = Vec::with_capacity(cubes.len());
        for c in cubes {
            if !kept.iter().any(|k| k.subsumes(&c)) {
                kept.retain(|k| !c.subsumes(k));
                kept.push(c);
            }
        }
        kept.sort();
        self.cubes = kept;
    }

    /// Whether `c` is contained in the union of the cubes.
    pub fn covers(&self, c: &Cube) -> bool {
        covered(c, &self.cubes)
    }

    /// Enlarges every cube as far as the denotation allows: finite upper bounds are
    /// raised to infinity and lower bounds lowered whenever the grown cube stays
    /// inside the union. The denotation is unchanged; norms can only shrink.
    pub fn expand(&mut self) {
        let cubes = self.cubes.clone();
        let mut out = Vec::with_capacity(cubes.len());
        for mut c in cubes {
            for q in 0..self.dim {
                if c.upper[q] != INF {
                    let mut d = c.clone();
                    d.upper[q] = INF;
                    if covered(&d, &self.cubes) {
                        c = d;
                    }
                }
            }
            for q in 0..self.dim {
                // Containment is monotone in the lower bound; find the least feasible one.
                let (mut lo, mut hi) = (0, c.lower[q]);
                while lo < hi {
                    let mid = lo + (hi - lo) / 2;
                    let mut d = c.clone();
                    d.lower[q] = mid;
                    if covered(&d, &self.cubes) {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                c.lower[q] = lo;
            }
            out.push(c);
        }
        self.cubes = out;
        self.canonicalize();
    }

    /// Adds a cube unless it is subsumed; drops cubes it subsumes.
    pub fn insert(&mut self, c: Cube) -> bool {
        if c.is_empty() || self.cubes.iter().any(|k| k.subsumes(&c)) {
            return false;
        }
        self.cubes.retain(|k| !c.subsumes(k));
        self.cubes.push(c);
        true
    }

    fn check_dim(&self, other: &Constraint) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::Invalid(format!("dimension mismatch: {} vs {}", self.dim, other.dim)));
        }
        Ok(())
    }

    pub fn union(&self, other: &Constraint) -> Result<Constraint> {
        self.check_dim(other)?;
        let mut cubes = self.cubes.clone();
        cubes.extend(other.cubes.iter().cloned());
        Constraint::from_cubes(self.dim, cubes)
    }

    pub fn intersect(&self, other: &Constraint) -> Result<Constraint> {
        self.check_dim(other)?;
        let mut cubes = Vec::new();
        for a in &self.cubes {
            for b in &other.cubes {
                let c = a.intersect(b);
                if !c.is_empty() {
                    cubes.push(c);
                }
            }
        }
        Constraint::from_cubes(self.dim, cubes)
    }

    /// Intersection with a single cube.
    pub fn intersect_cube(&self, c: &Cube) -> Constraint {
        let cubes = self.cubes.iter().map(|a| a.intersect(c)).filter(|x| !x.is_empty()).collect();
        let mut g = Constraint { dim: self.dim, cubes };
        g.canonicalize();
        g
    }

    /// Complement by minterm expansion: the intersection over all cubes of the
    /// union of their half-space complements, canonicalized after every factor.
    pub fn complement(&self) -> Constraint {
        let mut acc = vec![Cube::top(self.dim)];
        for c in &self.cubes {
            let halves = c.complement();
            let mut next = Constraint::empty(self.dim);
            for a in &acc {
                for h in &halves {
                    next.insert(a.intersect(h));
                }
            }
            next.canonicalize();
            acc = next.cubes;
            if acc.is_empty() {
                break;
            }
        }
        Constraint { dim: self.dim, cubes: acc }
    }

    /// True iff no configuration with at least two agents satisfies the constraint.
    pub fn is_empty_population(&self) -> bool {
        self.cubes.iter().all(|c| c.is_empty() || c.max_size().is_some_and(|s| s < 2))
    }

    /// A member with at least two agents, if any (smallest lower bound first).
    pub fn population_member(&self) -> Option<Multiset> {
        let mut best: Option<Multiset> = None;
        for c in &self.cubes {
            if c.is_empty() || c.max_size().is_some_and(|s| s < 2) {
                continue;
            }
            let mut m = Multiset::from_counts(c.lower.clone());
            let mut q = 0;
            while m.size() < 2 {
                if m.get(q) < c.upper[q] {
                    m.add(q, 1);
                } else {
                    q += 1;
                }
            }
            if best.as_ref().is_none_or(|b| m.size() < b.size()) {
                best = Some(m);
            }
        }
        best
    }
}

/// Whether `c ⊆ ⋃ ds`, by subtracting one cube at a time.
fn covered(c: &Cube, ds: &[Cube]) -> bool {
    if c.is_empty() {
        return true;
    }
    let Some(i) = ds.iter().position(|d| !c.intersect(d).is_empty()) else { return false };
    let d = &ds[i];
    if d.subsumes(c) {
        return true;
    }
    // c ∖ d as disjoint pieces: agree with d on coordinates before q, leave d's range at q.
    let mut rest = c.clone();
    for q in 0..c.dim() {
        if rest.lower[q] < d.lower[q] {
            let piece = rest.clone().at_most(q, d.lower[q] - 1);
            if !covered(&piece, &ds[i + 1..]) {
                return false;
            }
        }
        if d.upper[q] != INF && rest.upper[q] > d.upper[q] {
            let piece = rest.clone().at_least(q, d.upper[q] + 1);
            if !covered(&piece, &ds[i + 1..]) {
                return false;
            }
        }
        rest = rest.at_least(q, d.lower[q]).at_most(q, d.upper[q]);
    }
    true
}

/// True iff no configuration with at least two agents satisfies the constraint.
pub fn is_empty_population(g: &Constraint) -> bool {
    g.is_empty_population()
}

/// Parses a constraint file: one `cube:` line per cube with `q in [lo, hi|inf]` clauses.
pub fn parse_constraint(p: &Protocol, text: &str) -> Result<Constraint> {
    parse_constraint_over(&p.states, text)
}

/// Parses a constraint whose coordinates are named by `names` (states or input symbols).
pub fn parse_constraint_over(names: &[String], text: &str) -> Result<Constraint> {
    let n = names.len();
    let mut cubes = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("");
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let body = trimmed
            .strip_prefix("cube:")
            .ok_or_else(|| Error::parse(line_no, 1, "expected `cube:`"))?;
        let offset = line.len() - line.trim_start().len() + "cube:".len();
        let mut cube = Cube::top(n);
        let mut rest = body;
        let mut col = offset + 1;
        loop {
            let lead = rest.len() - rest.trim_start().len();
            rest = rest.trim_start();
            col += lead;
            if rest.is_empty() {
                break;
            }
            let close = rest.find(']').ok_or_else(|| Error::parse(line_no, col, "missing `]`"))?;
            let clause = &rest[..=close];
            let (name, range) = clause
                .split_once(" in ")
                .ok_or_else(|| Error::parse(line_no, col, "expected `STATE in [lo, hi]`"))?;
            let name = name.trim();
            let q = names
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::parse(line_no, col, format!("unknown name `{name}`")))?;
            let range = range.trim();
            let inner = range
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(|| Error::parse(line_no, col, "expected `[lo, hi]`"))?;
            let (lo, hi) = inner.split_once(',').ok_or_else(|| Error::parse(line_no, col, "expected `lo, hi`"))?;
            let lo: u64 = lo.trim().parse().map_err(|_| Error::parse(line_no, col, "bad lower bound"))?;
            let hi = match hi.trim() {
                "inf" | "∞" => INF,
                s => s.parse().map_err(|_| Error::parse(line_no, col, "bad upper bound"))?,
            };
            cube.lower[q] = lo;
            cube.upper[q] = hi;
            col += close + 1;
            rest = &rest[close + 1..];
            let lead = rest.len() - rest.trim_start().len();
            rest = rest.trim_start();
            col += lead;
            if let Some(r) = rest.strip_prefix(',') {
                rest = r;
                col += 1;
            } else if !rest.is_empty() {
                return Err(Error::parse(line_no, col, "expected `,` between clauses"));
            }
        }
        cubes.push(cube);
    }
    Constraint::from_cubes(n, cubes)
}

/// Prints a constraint in the format read by [`parse_constraint`].
pub fn print_constraint(p: &Protocol, g: &Constraint) -> String {
    print_constraint_over(&p.states, g)
}

/// Prints a constraint whose coordinates are named by `names`.
pub fn print_constraint_over(names: &[String], g: &Constraint) -> String {
    let mut s = String::new();
    for c in g.cubes() {
        let clauses: Vec<String> = (0..c.dim())
            .filter(|&q| c.lower[q] != 0 || c.upper[q] != INF)
            .map(|q| {
                let hi = if c.upper[q] == INF { "inf".to_string() } else { c.upper[q].to_string() };
                format!("{} in [{},{}]", names[q], c.lower[q], hi)
            })
            .collect();
        if clauses.is_empty() {
            let _ = writeln!(s, "cube:");
        } else {
            let _ = writeln!(s, "cube: {}", clauses.join(", "));
        }
    }
    s
}

/// `⋃_{k≥1} (c + k·e_a − k·e_b) ∩ ℕ^Q` for `a ≠ b`, as cubes.
fn shift_union(c: &Cube, a: StateId, b: StateId, out: &mut Vec<Cube>) {
    let (la, ua, lb, ub) = (c.lower[a], c.upper[a], c.lower[b], c.upper[b]);
    let shifted = |k: u64| {
        let mut d = c.clone();
        d.lower[a] = la + k;
        d.upper[a] = add_inf(ua, k);
        d.lower[b] = lb.saturating_sub(k);
        d.upper[b] = if ub == INF { INF } else { ub - k };
        d
    };
    if ub != INF {
        for k in 1..=ub {
            out.push(shifted(k));
        }
    } else {
        let k0 = lb.max(1);
        for k in 1..k0 {
            out.push(shifted(k));
        }
        let mut d = c.clone();
        d.lower[a] = la + k0;
        d.upper[a] = INF;
        d.lower[b] = 0;
        d.upper[b] = INF;
        out.push(d);
    }
}

fn check_io(p: &Protocol) -> Result<()> {
    if p.model != Model::IO {
        return Err(Error::Model(format!("expected an IO protocol, got {}", p.model)));
    }
    Ok(())
}

/// Exact one-step predecessors under IO transitions.
pub fn onestep_pre_io(p: &Protocol, g: &Constraint) -> Result<Constraint> {
    check_io(p)?;
    let mut out = Vec::new();
    for (_, q, o, q2) in p.observations() {
        for c in g.cubes() {
            if q == q2 {
                let need = if o == q { 2 } else { 1 };
                out.push(c.clone().at_least(q, 1).at_least(o, need));
                continue;
            }
            if c.upper[q2] == 0 {
                continue;
            }
            let mut d = c.clone();
            d.lower[q] = c.lower[q] + 1;
            d.upper[q] = add_inf(c.upper[q], 1);
            d.lower[q2] = c.lower[q2].saturating_sub(1);
            d.upper[q2] = if c.upper[q2] == INF { INF } else { c.upper[q2] - 1 };
            let need = if o == q { 2 } else { 1 };
            out.push(d.at_least(o, need));
        }
    }
    Constraint::from_cubes(g.dim(), out)
}

/// Exact predecessors under `t^k` for some `k ≥ 1`, for one IO observation.
fn accelerated_pre_io(c: &Cube, q: StateId, o: StateId, q2: StateId, out: &mut Vec<Cube>) {
    if q == q2 {
        return;
    }
    let target = if o == q || o != q2 { c.clone().at_least(o, 1) } else { c.clone() };
    if target.is_empty() {
        return;
    }
    let start = out.len();
    shift_union(&target, q, q2, out);
    if o == q2 {
        for d in &mut out[start..] {
            d.lower[q2] = d.lower[q2].max(1);
        }
    }
}

/// Closure computation method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Symbolic saturation with accelerated one-step images.
    Fixpoint,
    /// Bounded enumeration of small witnesses, each turned into a cube by pruning.
    Witness,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Method> {
        match s {
            "fixpoint" => Ok(Method::Fixpoint),
            "witness" => Ok(Method::Witness),
            _ => Err(Error::Invalid(format!("unknown method `{s}`"))),
        }
    }
}

/// A closure result; `exact` is false when saturation stopped at its cap, in
/// which case the constraint is a sound under-approximation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Closure {
    pub constraint: Constraint,
    pub exact: bool,
    pub generated: usize,
}

/// Saturation cap: the number of lower-bound vectors within the norm envelope
/// times the number of finite upper-bound patterns, with slack 10, capped by the node budget.
pub fn fixpoint_cap(dim: usize, lnorm: u64, unorm: u64) -> usize {
    let n = dim as u64;
    let lbound = lnorm.saturating_add(n.saturating_pow(3));
    let ls = count_multisets(dim + 1, lbound);
    // Σ_k C(n,k)·#{vectors over k states with sum ≤ unorm}
    let mut us: u128 = 0;
    let mut binom: u128 = 1;
    for k in 0..=dim {
        us = us.saturating_add(binom.saturating_mul(count_multisets(k + 1, unorm)));
        binom = binom.saturating_mul((dim - k) as u128) / (k as u128 + 1);
    }
    let cap = ls.saturating_mul(us).saturating_mul(10);
    cap.min(node_budget() as u128) as usize
}

/// A cube with a set tag: a seen requirement (backward) or an exact seen set (forward).
#[derive(Clone, Debug, PartialEq, Eq)]
struct Tagged {
    cube: Cube,
    tag: Seen,
}

/// Worklist saturation with subsumption. `le(x, y)` must imply that `x` denotes a subset of `y`,
/// and `succ` must be monotone with respect to `le`.
fn saturate(
    init: Vec<Tagged>,
    succ: impl Fn(&Tagged, &mut Vec<Tagged>),
    le: impl Fn(&Tagged, &Tagged) -> bool,
    cap: usize,
) -> (Vec<Tagged>, bool, usize) {
    let mut items: Vec<Option<Tagged>> = Vec::new();
    let mut queue = VecDeque::new();
    let mut generated = 0usize;
    let insert = |x: Tagged, items: &mut Vec<Option<Tagged>>, queue: &mut VecDeque<usize>| -> bool {
        if x.cube.is_empty() || items.iter().flatten().any(|y| le(&x, y)) {
            return false;
        }
        for slot in items.iter_mut() {
            if slot.as_ref().is_some_and(|y| le(y, &x)) {
                *slot = None;
            }
        }
        items.push(Some(x));
        queue.push_back(items.len() - 1);
        true
    };
    for x in init {
        insert(x, &mut items, &mut queue);
    }
    let mut buf = Vec::new();
    while let Some(i) = queue.pop_front() {
        let Some(x) = items[i].clone() else { continue };
        buf.clear();
        succ(&x, &mut buf);
        for y in buf.drain(..) {
            if insert(y, &mut items, &mut queue) {
                generated += 1;
                if generated > cap {
                    return (items.into_iter().flatten().collect(), false, generated);
                }
            }
        }
    }
    (items.into_iter().flatten().collect(), true, generated)
}

fn io_pre_fixpoint(p: &Protocol, g: &Constraint) -> Closure {
    let n = p.num_states();
    let obs = p.observations();
    let cap = fixpoint_cap(n, g.lnorm(), g.unorm());
    let init = g.cubes().iter().map(|c| Tagged { cube: c.clone(), tag: Seen::with_capacity(n) }).collect();
    let (items, exact, generated) = saturate(
        init,
        |x, out| {
            let mut cubes = Vec::new();
            for &(_, q, o, q2) in &obs {
                accelerated_pre_io(&x.cube, q, o, q2, &mut cubes);
            }
            out.extend(cubes.into_iter().map(|cube| Tagged { cube, tag: x.tag.clone() }));
        },
        |x, y| y.cube.subsumes(&x.cube),
        cap,
    );
    let mut c = Constraint { dim: n, cubes: items.into_iter().map(|t| t.cube).collect() };
    c.expand();
    Closure { constraint: c, exact, generated }
}

/// Backward MFDO saturation over pairs (cube, seen requirement R), denoting all
/// (C, S) with C in the cube and S ⊇ R.
fn mfdo_pre_fixpoint(p: &Protocol, g: &Constraint) -> Closure {
    let n = p.num_states();
    let obs = p.observations();
    let cap = fixpoint_cap(n, g.lnorm(), g.unorm());
    let init = g.cubes().iter().map(|c| Tagged { cube: c.clone(), tag: Seen::with_capacity(n) }).collect();
    let (items, exact, generated) = saturate(
        init,
        |x, out| {
            for &(_, q, o, q2) in &obs {
                if q == q2 {
                    continue;
                }
                let mut tag = x.tag.clone();
                tag.set(q2, false);
                tag.insert(o);
                tag.insert(q);
                let mut cubes = Vec::new();
                shift_union(&x.cube, q, q2, &mut cubes);
                out.extend(cubes.into_iter().map(|cube| Tagged { cube, tag: tag.clone() }));
            }
        },
        |x, y| y.cube.subsumes(&x.cube) && y.tag.is_subset(&x.tag),
        cap,
    );
    let mut c = Constraint::empty(n);
    for t in items {
        let mut cube = t.cube;
        for r in t.tag.ones() {
            cube = cube.at_least(r, 1);
        }
        c.cubes.push(cube);
    }
    c.expand();
    Closure { constraint: c, exact, generated }
}

/// Splits a cube by the support of its members.
fn split_by_support(c: &Cube) -> Vec<(Cube, Seen)> {
    let n = c.dim();
    let mut out = vec![(c.clone(), Seen::with_capacity(n))];
    for q in 0..n {
        let mut next = Vec::with_capacity(out.len());
        for (cube, s) in out {
            if cube.upper[q] >= 1 {
                let mut s2 = s.clone();
                s2.insert(q);
                next.push((cube.clone().at_least(q, 1), s2));
            }
            if cube.lower[q] == 0 {
                next.push((cube.at_most(q, 0), s));
            }
        }
        out = next;
    }
    out
}

/// Forward MFDO saturation over pairs (cube, exact seen set).
fn mfdo_post_fixpoint(p: &Protocol, g: &Constraint) -> Closure {
    let n = p.num_states();
    let obs = p.observations();
    let cap = fixpoint_cap(n, g.lnorm(), g.unorm());
    let init = g
        .cubes()
        .iter()
        .flat_map(split_by_support)
        .map(|(cube, tag)| Tagged { cube, tag })
        .collect();
    let (items, exact, generated) = saturate(
        init,
        |x, out| {
            for &(_, q, o, q2) in &obs {
                if q == q2 || !x.tag.contains(o) || x.cube.upper[q] == 0 {
                    continue;
                }
                let mut tag = x.tag.clone();
                tag.insert(q2);
                let mut cubes = Vec::new();
                shift_union(&x.cube, q2, q, &mut cubes);
                out.extend(cubes.into_iter().map(|cube| Tagged { cube, tag: tag.clone() }));
            }
        },
        |x, y| x.tag == y.tag && y.cube.subsumes(&x.cube),
        cap,
    );
    let mut c = Constraint { dim: n, cubes: items.into_iter().map(|t| t.cube).collect() };
    c.expand();
    Closure { constraint: c, exact, generated }
}

fn into_result(c: Closure, what: &str) -> Result<Constraint> {
    if c.exact {
        Ok(c.constraint)
    } else {
        Err(Error::SoundUnderapprox(format!(
            "{what} saturation stopped after {} cubes; partial result has {} cubes",
            c.generated,
            c.constraint.len()
        )))
    }
}

fn check_closure_model(p: &Protocol, g: &Constraint) -> Result<()> {
    if !matches!(p.model, Model::IO | Model::MFDO) {
        return Err(Error::Model(format!("closures need an IO or MFDO protocol, got {}", p.model)));
    }
    if g.dim() != p.num_states() {
        return Err(Error::Invalid("constraint dimension does not match the protocol".into()));
    }
    Ok(())
}

/// Fixpoint closure that reports a capped saturation instead of failing.
pub fn pre_star_bounded(p: &Protocol, g: &Constraint) -> Result<Closure> {
    check_closure_model(p, g)?;
    Ok(match p.model {
        Model::IO => io_pre_fixpoint(p, g),
        _ => mfdo_pre_fixpoint(p, g),
    })
}

/// Forward counterpart of [`pre_star_bounded`].
pub fn post_star_bounded(p: &Protocol, g: &Constraint) -> Result<Closure> {
    check_closure_model(p, g)?;
    Ok(match p.model {
        Model::IO => io_pre_fixpoint(&p.reversed()?, g),
        _ => mfdo_post_fixpoint(p, g),
    })
}

/// The configurations that can reach the constraint (reflexively).
pub fn pre_star(p: &Protocol, g: &Constraint, method: Method) -> Result<Constraint> {
    check_closure_model(p, g)?;
    match method {
        Method::Fixpoint => into_result(pre_star_bounded(p, g)?, "backward"),
        Method::Witness => witness_closure(p, g, Direction::Backward),
    }
}

/// The configurations reachable from the constraint (reflexively).
pub fn post_star(p: &Protocol, g: &Constraint, method: Method) -> Result<Constraint> {
    check_closure_model(p, g)?;
    match (method, p.model) {
        (Method::Fixpoint, _) => into_result(post_star_bounded(p, g)?, "forward"),
        (Method::Witness, Model::IO) => witness_closure(&p.reversed()?, g, Direction::Backward),
        (Method::Witness, _) => witness_closure(p, g, Direction::Forward),
    }
}

/// Zero-message predecessors of a DO protocol, computed on the corresponding MFDO protocol.
pub fn pre_star_zm(p: &Protocol, g: &Constraint, method: Method) -> Result<Constraint> {
    if p.model != Model::DO {
        return Err(Error::Model(format!("expected a DO protocol, got {}", p.model)));
    }
    pre_star(&p.to_mfdo()?.mfdo, g, method)
}

/// Zero-message successors of a DO protocol, computed on the corresponding MFDO protocol.
pub fn post_star_zm(p: &Protocol, g: &Constraint, method: Method) -> Result<Constraint> {
    if p.model != Model::DO {
        return Err(Error::Model(format!("expected a DO protocol, got {}", p.model)));
    }
    post_star(&p.to_mfdo()?.mfdo, g, method)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Backward,
    Forward,
}

/// Shortest path from `from` to any node satisfying `goal`.
fn path_to_any(g: &ReachGraph, from: usize, goal: impl Fn(usize) -> bool) -> Option<(usize, Vec<usize>)> {
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; g.len()];
    let mut visited = vec![false; g.len()];
    let mut queue = VecDeque::from([from]);
    visited[from] = true;
    while let Some(u) = queue.pop_front() {
        if goal(u) {
            let mut path = Vec::new();
            let mut cur = u;
            while let Some((p, t)) = prev[cur] {
                path.push(t);
                cur = p;
            }
            path.reverse();
            return Some((u, path));
        }
        for &(t, v) in &g.edges[u] {
            if !visited[v] {
                visited[v] = true;
                prev[v] = Some((u, t));
                queue.push_back(v);
            }
        }
    }
    None
}

fn run_of(p: &Protocol, start: &Configuration, path: &[usize]) -> Run {
    let mut r = Run::new(Configuration::of_agents(p, start.agents.clone()));
    for &t in path {
        r.push(t, 1);
    }
    r
}

/// The small cube around a witness run.
///
/// Backward: the run goes from `C'` to a member of `target`; the cube has the
/// pruned start as lower bound and, per state, an infinite upper bound if some
/// trajectory from it ends where `target` is unbounded, `C'` otherwise.
/// Forward is symmetric with the roles of start and end swapped.
fn witness_cube(p: &Protocol, run: &Run, target: &Cube, dir: Direction) -> Result<Cube> {
    let n = p.num_states();
    let zero = Multiset::zeros(n);
    if run.start.agents.is_empty() {
        return Ok(Cube::point(&zero));
    }
    let target_lower = Multiset::from_counts(target.lower.clone());
    let h = deanonymize(p, run)?;
    let last = h.len() - 1;
    let (pruned, anchor, here, there) = match dir {
        Direction::Backward => {
            let pr = prune(p, run, &zero, &target_lower)?;
            (pr.start.agents.clone(), h.first_config(n), 0, last)
        }
        Direction::Forward => {
            let pr = prune(p, run, &target_lower, &zero)?;
            (p.apply_run(&pr)?.agents, h.last_config(n), last, 0)
        }
    };
    let mut upper: Vec<u64> = anchor.counts().to_vec();
    for t in &h.trajectories {
        if target.upper[t[there]] == INF {
            upper[t[here]] = INF;
        }
    }
    Ok(Cube::new(pruned.counts().to_vec(), upper))
}

/// Largest dense index space used by the IO witness enumeration.
const DENSE_LIMIT: u128 = 1 << 26;

/// Witness enumeration for one population size of an IO protocol, over a dense
/// mixed-radix index of configurations. Returns false if the index space is too large.
fn dense_io_witness(p: &Protocol, g: &Constraint, size: u64, acc: &mut Constraint) -> Result<bool> {
    let n = p.num_states();
    if n == 0 {
        return Ok(false);
    }
    let base = size as u128 + 1;
    let total = base.checked_pow(n as u32 - 1).unwrap_or(u128::MAX);
    if total > DENSE_LIMIT {
        return Ok(false);
    }
    let total = total as usize;
    let base = base as usize;
    let encode = |c: &[u64]| c[..n - 1].iter().rev().fold(0usize, |a, &x| a * base + x as usize);
    let decode = |mut idx: usize, out: &mut Vec<u64>| -> bool {
        out.clear();
        let mut sum = 0u64;
        for _ in 0..n - 1 {
            let x = (idx % base) as u64;
            idx /= base;
            sum += x;
            out.push(x);
        }
        if sum > size {
            return false;
        }
        out.push(size - sum);
        true
    };
    let obs: Vec<(usize, usize, usize, usize)> =
        p.observations().into_iter().filter(|&(_, q, _, q2)| q != q2).collect();
    // next[idx] = (transition, successor) on a shortest path to a target.
    const NONE: (u32, u32) = (u32::MAX, u32::MAX);
    let mut next: Vec<(u32, u32)> = vec![NONE; total];
    let mut good = vec![false; total];
    let mut queue = VecDeque::new();
    let mut buf = Vec::with_capacity(n);
    for (idx, slot) in good.iter_mut().enumerate() {
        if decode(idx, &mut buf) && g.contains(&Multiset::from_counts(buf.clone())) {
            *slot = true;
            queue.push_back(idx);
        }
    }
    let mut pred = Vec::with_capacity(n);
    while let Some(v) = queue.pop_front() {
        decode(v, &mut buf);
        for &(t, q, o, q2) in &obs {
            if buf[q2] == 0 {
                continue;
            }
            pred.clear();
            pred.extend_from_slice(&buf);
            pred[q2] -= 1;
            pred[q] += 1;
            if pred[o] < if o == q { 2 } else { 1 } {
                continue;
            }
            let u = encode(&pred);
            if !good[u] {
                good[u] = true;
                next[u] = (t as u32, v as u32);
                queue.push_back(u);
            }
        }
    }
    for m in multisets_of_size(n, size) {
        let idx = encode(m.counts());
        if !good[idx] || acc.contains(&m) {
            continue;
        }
        let mut run = Run::new(Configuration::of_agents(p, m.clone()));
        let mut cur = idx;
        while next[cur] != NONE {
            run.push(next[cur].0 as usize, 1);
            cur = next[cur].1 as usize;
        }
        decode(cur, &mut buf);
        let target = g.cube_of(&Multiset::from_counts(buf.clone())).expect("target member");
        acc.insert(witness_cube(p, &run, target, Direction::Backward)?);
    }
    Ok(true)
}

fn witness_closure(p: &Protocol, g: &Constraint, dir: Direction) -> Result<Constraint> {
    let n = p.num_states();
    let bound = g.lnorm() + (n as u64).pow(3) + g.unorm();
    let budget = node_budget();
    let mut acc = Constraint::empty(n);
    for size in 0..=bound {
        let count = count_multisets(n, size);
        if count > budget as u128 {
            return Err(Error::Budget { budget });
        }
        if p.model == Model::IO && dir == Direction::Backward && dense_io_witness(p, g, size, &mut acc)? {
            continue;
        }
        let all = multisets_of_size(n, size);
        let roots: Vec<Configuration> = match dir {
            Direction::Backward => all.iter().map(|m| Configuration::of_agents(p, m.clone())).collect(),
            Direction::Forward => {
                all.iter().filter(|m| g.contains(m)).map(|m| Configuration::of_agents(p, m.clone())).collect()
            }
        };
        if roots.is_empty() {
            continue;
        }
        let graph = reach_graph_with_budget(p, &roots, None, budget)?;
        match dir {
            Direction::Backward => {
                let mut rev: Vec<Vec<usize>> = vec![Vec::new(); graph.len()];
                for (u, es) in graph.edges.iter().enumerate() {
                    for &(_, v) in es {
                        rev[v].push(u);
                    }
                }
                let is_target: Vec<bool> = graph.nodes.iter().map(|nd| g.contains(&nd.config.agents)).collect();
                let mut good = is_target.clone();
                let mut queue: VecDeque<usize> = (0..graph.len()).filter(|&u| good[u]).collect();
                while let Some(v) = queue.pop_front() {
                    for &u in &rev[v] {
                        if !good[u] {
                            good[u] = true;
                            queue.push_back(u);
                        }
                    }
                }
                for &root in &graph.roots {
                    let c = &graph.nodes[root].config;
                    if !good[root] || acc.contains(&c.agents) {
                        continue;
                    }
                    let (end, path) = path_to_any(&graph, root, |u| is_target[u]).expect("root can reach a target");
                    let run = run_of(p, c, &path);
                    let target = g.cube_of(&graph.nodes[end].config.agents).expect("target member");
                    acc.insert(witness_cube(p, &run, target, dir)?);
                }
            }
            Direction::Forward => {
                // Multi-source BFS: every node gets a shortest path from some root.
                let mut prev: Vec<Option<(usize, usize)>> = vec![None; graph.len()];
                let mut visited = vec![false; graph.len()];
                let mut queue: VecDeque<usize> = graph.roots.iter().copied().collect();
                for &r in &graph.roots {
                    visited[r] = true;
                }
                let mut order = Vec::with_capacity(graph.len());
                while let Some(u) = queue.pop_front() {
                    order.push(u);
                    for &(t, v) in &graph.edges[u] {
                        if !visited[v] {
                            visited[v] = true;
                            prev[v] = Some((u, t));
                            queue.push_back(v);
                        }
                    }
                }
                for u in order {
                    if acc.contains(&graph.nodes[u].config.agents) {
                        continue;
                    }
                    let mut path = Vec::new();
                    let mut cur = u;
                    while let Some((x, t)) = prev[cur] {
                        path.push(t);
                        cur = x;
                    }
                    path.reverse();
                    let start = &graph.nodes[cur].config;
                    let run = run_of(p, start, &path);
                    let source = g.cube_of(&start.agents).expect("root is a member");
                    acc.insert(witness_cube(p, &run, source, dir)?);
                }
            }
        }
    }
    acc.canonicalize();
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn one_dim(l: u64, u: u64) -> Cube {
        Cube::new(vec![l], vec![u])
    }

    #[test]
    fn interval_membership() {
        let g = Constraint::from_cubes(1, vec![one_dim(1, 3)]).unwrap();
        assert!(g.member(&Multiset::from_counts(vec![2])).unwrap());
        assert!(!g.member(&Multiset::from_counts(vec![4])).unwrap());
        assert!(g.member(&Multiset::from_counts(vec![1, 1])).is_err());
        assert!(!Constraint::empty(1).contains(&Multiset::from_counts(vec![0])));
    }

    #[test]
    fn overlapping_intervals_define_the_same_set() {
        let a = Constraint::from_cubes(1, vec![one_dim(1, 3), one_dim(2, 4)]).unwrap();
        let b = Constraint::from_cubes(1, vec![one_dim(1, 4)]).unwrap();
        for c in 0..=6 {
            let m = Multiset::from_counts(vec![c]);
            assert_eq!(a.contains(&m), b.contains(&m));
        }
    }

    #[test]
    fn complement_of_interval() {
        let g = Constraint::from_cubes(1, vec![one_dim(1, 3)]).unwrap();
        let c = g.complement();
        assert_eq!(c.cubes(), &[one_dim(0, 0), one_dim(4, INF)]);
        for x in 0..=10 {
            let m = Multiset::from_counts(vec![x]);
            assert_ne!(g.contains(&m), c.contains(&m));
        }
    }

    #[test]
    fn interval_intersection() {
        let a = Constraint::from_cubes(1, vec![one_dim(1, 3)]).unwrap();
        let b = Constraint::from_cubes(1, vec![one_dim(2, 4)]).unwrap();
        assert_eq!(a.intersect(&b).unwrap().cubes(), &[one_dim(2, 3)]);
    }

    #[test]
    fn empty_population() {
        assert!(Constraint::from_cubes(2, vec![Cube::new(vec![0, 0], vec![0, 0])]).unwrap().is_empty_population());
        assert!(Constraint::from_cubes(1, vec![one_dim(0, 1)]).unwrap().is_empty_population());
        assert!(!Constraint::from_cubes(1, vec![one_dim(0, INF)]).unwrap().is_empty_population());
    }

    #[test]
    fn constraint_format_round_trip() {
        let p = catalog::io_example();
        let g = parse_constraint(&p, "cube: q1 in [1,inf], q2 in [0,3]\n# comment\ncube:\n").unwrap();
        assert_eq!(g.len(), 1);
        let text = "cube: q1 in [1,inf], q2 in [0,3]\ncube: q3 in [2,2]\n";
        let g = parse_constraint(&p, text).unwrap();
        assert_eq!(parse_constraint(&p, &print_constraint(&p, &g)).unwrap(), g);
        let err = parse_constraint(&p, "cube: q9 in [1,2]").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, col: 7, .. }), "{err:?}");
    }

    #[test]
    fn onestep_pre_of_t4() {
        let mut p = catalog::io_example();
        p.transitions.retain(|t| t.name == "t4");
        let g = Constraint::from_cubes(3, vec![Cube::new(vec![0, 0, 2], vec![INF; 3])]).unwrap();
        let pre = onestep_pre_io(&p, &g).unwrap();
        assert_eq!(pre.cubes(), &[Cube::new(vec![0, 1, 1], vec![INF; 3])]);
    }

    #[test]
    fn two_state_pre_star() {
        let p = catalog::two_state();
        let g = Constraint::from_cubes(2, vec![Cube::new(vec![0, 0], vec![0, INF])]).unwrap();
        let pre = pre_star(&p, &g, Method::Fixpoint).unwrap();
        let expected = Constraint::from_cubes(2, vec![Cube::new(vec![0, 1], vec![INF; 2]), Cube::new(vec![0, 0], vec![0, INF])])
            .unwrap();
        for s in 0..=8 {
            for m in multisets_of_size(2, s) {
                assert_eq!(pre.contains(&m), expected.contains(&m), "{m:?}");
            }
        }
        let w = pre_star(&p, &g, Method::Witness).unwrap();
        for s in 0..=8 {
            for m in multisets_of_size(2, s) {
                assert_eq!(w.contains(&m), expected.contains(&m), "{m:?}");
            }
        }
    }

    #[test]
    fn two_state_post_star() {
        let p = catalog::two_state();
        let g = Constraint::from_cubes(2, vec![Cube::new(vec![1, 1], vec![INF; 2])]).unwrap();
        for method in [Method::Fixpoint, Method::Witness] {
            let post = post_star(&p, &g, method).unwrap();
            for s in 0..=8 {
                for m in multisets_of_size(2, s) {
                    assert_eq!(post.contains(&m), m.get(1) >= 1 && s >= 2, "{method:?} {m:?}");
                }
            }
        }
    }

    #[test]
    fn support_split_is_a_partition() {
        let c = Cube::new(vec![0, 1, 0], vec![2, INF, 0]);
        let parts = split_by_support(&c);
        assert_eq!(parts.len(), 2);
    }
}
