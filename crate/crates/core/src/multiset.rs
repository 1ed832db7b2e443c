//! Dense multisets over a fixed index space.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// A multiset over elements `0..dim`, stored as a dense count vector.
///
/// Zero counts are simply zero entries; `support` skips them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Multiset {
    counts: Vec<u64>,
}

impl Multiset {
    pub fn zeros(dim: usize) -> Self {
        Multiset { counts: vec![0; dim] }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        Multiset { counts }
    }

    /// Multiset with `k` copies of each listed element.
    pub fn from_elems(dim: usize, elems: &[usize]) -> Self {
        let mut m = Multiset::zeros(dim);
        for &e in elems {
            m.counts[e] += 1;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, e: usize) -> u64 {
        self.counts[e]
    }

    pub fn set(&mut self, e: usize, v: u64) {
        self.counts[e] = v;
    }

    pub fn add(&mut self, e: usize, k: u64) {
        self.counts[e] += k;
    }

    /// Removes `k` copies of `e`; returns false (and leaves `self` untouched) if too few.
    pub fn remove(&mut self, e: usize, k: u64) -> bool {
        if self.counts[e] < k {
            return false;
        }
        self.counts[e] -= k;
        true
    }

    pub fn size(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Elements with nonzero count, in index order.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, _)| i)
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &Multiset) -> bool {
        self.counts.iter().zip(&other.counts).all(|(a, b)| a <= b)
    }

    pub fn plus(&self, other: &Multiset) -> Multiset {
        Multiset { counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect() }
    }

    /// `self - other`, defined only when `other <= self`.
    pub fn minus(&self, other: &Multiset) -> Option<Multiset> {
        if !other.le(self) {
            return None;
        }
        Some(Multiset { counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a - b).collect() })
    }

    pub fn max(&self, other: &Multiset) -> Multiset {
        Multiset { counts: self.counts.iter().zip(&other.counts).map(|(a, b)| *a.max(b)).collect() }
    }

    /// Partial order comparison; `None` when incomparable.
    pub fn partial_cmp_le(&self, other: &Multiset) -> Option<Ordering> {
        match (self.le(other), other.le(self)) {
            (true, true) => Some(Ordering::Equal),
            (true, false) => Some(Ordering::Less),
            (false, true) => Some(Ordering::Greater),
            (false, false) => None,
        }
    }

    /// Expands into a sorted list of elements with repetition.
    pub fn elems(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.size() as usize);
        for (i, &c) in self.counts.iter().enumerate() {
            for _ in 0..c {
                v.push(i);
            }
        }
        v
    }
}

/// Enumerates every multiset of exactly `size` elements over `dim` elements,
/// in lexicographic order of count vectors (descending in the first entry).
pub fn multisets_of_size(dim: usize, size: u64) -> Vec<Multiset> {
    let mut out = Vec::new();
    if dim == 0 {
        if size == 0 {
            out.push(Multiset::zeros(0));
        }
        return out;
    }
    let mut cur = vec![0u64; dim];
    fn rec(i: usize, left: u64, cur: &mut Vec<u64>, out: &mut Vec<Multiset>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(Multiset::from_counts(cur.clone()));
            return;
        }
        for c in (0..=left).rev() {
            cur[i] = c;
            rec(i + 1, left - c, cur, out);
        }
        cur[i] = 0;
    }
    rec(0, size, &mut cur, &mut out);
    out
}

/// Number of multisets of the given size over `dim` elements, saturating.
pub fn count_multisets(dim: usize, size: u64) -> u128 {
    if dim == 0 {
        return u128::from(size == 0);
    }
    // C(size + dim - 1, dim - 1)
    let n = size as u128 + dim as u128 - 1;
    let k = (dim as u128 - 1).min(size as u128);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let a = Multiset::from_counts(vec![2, 0, 1]);
        let b = Multiset::from_counts(vec![1, 0, 1]);
        assert!(b.le(&a));
        assert!(!a.le(&b));
        assert_eq!(a.minus(&b).unwrap().counts(), &[1, 0, 0]);
        assert_eq!(b.minus(&a), None);
        assert_eq!(a.plus(&b).size(), 5);
        assert_eq!(a.support().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(a.elems(), vec![0, 0, 2]);
    }

    #[test]
    fn enumeration_matches_count() {
        for dim in 1..5 {
            for size in 0..7 {
                let all = multisets_of_size(dim, size);
                assert_eq!(all.len() as u128, count_multisets(dim, size));
                assert!(all.iter().all(|m| m.size() == size));
            }
        }
    }
}
