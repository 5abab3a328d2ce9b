//! Rooted-tree canonical codes, empirical distributions and total variation.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{invalid, Result};
use crate::exploration::RootedNeighborhood;

/// Parenthesised canonical form of a rooted tree shape: a leaf is `()`, an
/// internal node is `(` + its children's codes in sorted order + `)`. Two
/// rooted trees are isomorphic exactly when their codes are equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalCode(pub String);

impl CanonicalCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CanonicalCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Shape code of a neighbourhood; ages, labels and fitness are ignored.
pub fn canonical_code(nb: &RootedNeighborhood) -> CanonicalCode {
    let children: Vec<&[usize]> = nb.nodes().iter().map(|n| n.children.as_slice()).collect();
    CanonicalCode(ahu_code(&children, 0))
}

/// Shape code of the sub-ball of radius `depth`, for comparing several radii
/// from one sample.
pub fn canonical_code_to_depth(nb: &RootedNeighborhood, depth: usize) -> CanonicalCode {
    let children: Vec<&[usize]> = nb
        .nodes()
        .iter()
        .map(|n| if n.depth() < depth { n.children.as_slice() } else { &[][..] })
        .collect();
    CanonicalCode(ahu_code(&children, 0))
}

/// Canonical code of the tree rooted at `root` given child lists.
pub fn ahu_code<C: AsRef<[usize]>>(children: &[C], root: usize) -> String {
    let mut codes: Vec<Option<String>> = vec![None; children.len()];
    let mut stack = vec![(root, false)];
    while let Some((v, expanded)) = stack.pop() {
        let kids = children[v].as_ref();
        if !expanded {
            stack.push((v, true));
            stack.extend(kids.iter().map(|&c| (c, false)));
            continue;
        }
        let mut parts: Vec<String> = kids.iter().map(|&c| codes[c].take().expect("child coded")).collect();
        parts.sort_unstable();
        let mut s = String::with_capacity(2 + parts.iter().map(String::len).sum::<usize>());
        s.push('(');
        for p in &parts {
            s.push_str(p);
        }
        s.push(')');
        codes[v] = Some(s);
    }
    codes[root].take().expect("root coded")
}

/// Counts over an ordered key set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalDistribution<K: Ord> {
    counts: BTreeMap<K, u64>,
    total: u64,
}

impl<K: Ord> Default for EmpiricalDistribution<K> {
    fn default() -> Self {
        Self {
            counts: BTreeMap::new(),
            total: 0,
        }
    }
}

impl<K: Ord> EmpiricalDistribution<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, key: K) {
        self.add_count(key, 1);
    }

    pub fn add_count(&mut self, key: K, count: u64) {
        if count == 0 {
            return;
        }
        *self.counts.entry(key).or_insert(0) += count;
        self.total += count;
    }

    /// Adds every count of `other`; merging is associative and commutative.
    pub fn merge(&mut self, other: Self) {
        for (k, c) in other.counts {
            self.add_count(k, c);
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, key: &K) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn prob(&self, key: &K) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(key) as f64 / self.total as f64
        }
    }

    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, u64)> {
        self.counts.iter().map(|(k, c)| (k, *c))
    }

    pub fn max_key(&self) -> Option<&K> {
        self.counts.keys().next_back()
    }
}

impl EmpiricalDistribution<u64> {
    pub fn mean(&self) -> f64 {
        let s: f64 = self.iter().map(|(k, c)| *k as f64 * c as f64).sum();
        s / self.total as f64
    }
}

impl<K: Ord + fmt::Display> EmpiricalDistribution<K> {
    /// `key,count` rows under a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("key,count\n");
        for (k, c) in self.iter() {
            out.push_str(&format!("{k},{c}\n"));
        }
        out
    }
}

impl<K: Ord> FromIterator<K> for EmpiricalDistribution<K> {
    fn from_iter<I: IntoIterator<Item = K>>(iter: I) -> Self {
        let mut d = Self::new();
        for k in iter {
            d.add(k);
        }
        d
    }
}

impl<K: Ord> Extend<K> for EmpiricalDistribution<K> {
    fn extend<I: IntoIterator<Item = K>>(&mut self, iter: I) {
        for k in iter {
            self.add(k);
        }
    }
}

/// Half the L1 distance between the two normalised histograms.
pub fn tv_distance<K: Ord>(a: &EmpiricalDistribution<K>, b: &EmpiricalDistribution<K>) -> Result<f64> {
    if a.total == 0 || b.total == 0 {
        return Err(invalid("distribution", "empty sample"));
    }
    let (na, nb) = (a.total as f64, b.total as f64);
    let mut ia = a.counts.iter().peekable();
    let mut ib = b.counts.iter().peekable();
    let mut l1 = 0.0;
    loop {
        let step = match (ia.peek(), ib.peek()) {
            (None, None) => break,
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (Some((ka, _)), Some((kb, _))) => ka.cmp(kb),
        };
        match step {
            std::cmp::Ordering::Less => l1 += *ia.next().unwrap().1 as f64 / na,
            std::cmp::Ordering::Greater => l1 += *ib.next().unwrap().1 as f64 / nb,
            std::cmp::Ordering::Equal => {
                let pa = *ia.next().unwrap().1 as f64 / na;
                let pb = *ib.next().unwrap().1 as f64 / nb;
                l1 += (pa - pb).abs();
            }
        }
    }
    Ok((0.5 * l1).min(1.0))
}

/// Total variation between an integer histogram and a pmf, summing k = 0..=k_max
/// and charging all pmf mass beyond `k_max` (and any sample mass there) in
/// full, so the result bounds the true distance from above.
pub fn tv_to_pmf(emp: &EmpiricalDistribution<u64>, pmf: impl Fn(u64) -> f64, k_max: u64) -> f64 {
    let n = emp.total.max(1) as f64;
    let mut l1 = 0.0;
    let mut covered = 0.0;
    for k in 0..=k_max {
        let p = pmf(k);
        covered += p;
        l1 += (emp.count(&k) as f64 / n - p).abs();
    }
    let emp_tail: u64 = emp.counts.range(k_max.saturating_add(1)..).map(|(_, c)| *c).sum();
    (0.5 * (l1 + (1.0 - covered).max(0.0) + emp_tail as f64 / n)).min(1.0)
}

/// Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) − F_b(x)|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of [`ks_statistic`] at level `alpha`.
pub fn ks_critical(alpha: f64, na: usize, nb: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((na + nb) as f64 / (na as f64 * nb as f64)).sqrt()
}
