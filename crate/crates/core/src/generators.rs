//! Three constructions of the (x, n)-sequential tree, plus the exact and
//! classical-urn oracles used to test them against each other.
//!
//! * [`generate_sequential`]: vertex m attaches to k < m with probability
//!   (W_{k,m-1} + x_k) / (m - 2 + T_{m-1}).
//! * [`generate_urn_tree`]: stick-breaking betas B_j ~ Beta(x_j, T_{j-1}+j-1),
//!   partial products S_{k,n}, and uniform draws U_k ~ U[0, S_{k-1,n}].
//! * [`generate_embellished_urn_tree`]: the same with corrected betas, equal in
//!   law to the sequential tree conditioned on a finite set of edges.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fitness::FitnessSequence;
use crate::rng;

mod degrees;
mod fenwick;

pub use degrees::{uniform_vertex_degrees, PointMassDegreeSampler, VertexDegrees};
use fenwick::Fenwick;

/// Largest n accepted by the exhaustive oracle.
pub const EXACT_ORACLE_MAX_N: usize = 12;

/// A recursive tree on {1..n}: every k ≥ 2 has one outgoing edge to parent[k] < k.
#[derive(Debug, Clone, PartialEq)]
pub struct PATree {
    parent: Vec<usize>,
    in_degree: Vec<usize>,
    fitness: FitnessSequence,
}

impl PATree {
    /// Builds a tree from `parents[k]` for k = 2..n (entries 0 and 1 ignored).
    pub fn from_parents(parents: Vec<usize>, fitness: FitnessSequence) -> Result<Self> {
        let n = fitness.n();
        if parents.len() != n + 1 {
            return Err(invalid("parents", format!("expected {} entries, got {}", n + 1, parents.len())));
        }
        let mut in_degree = vec![0; n + 1];
        for k in 2..=n {
            let p = parents[k];
            if p < 1 || p >= k {
                return Err(invalid("parents", format!("parent[{k}] = {p} is not in [1, {}]", k - 1)));
            }
            in_degree[p] += 1;
        }
        let mut parent = parents;
        parent[0] = 0;
        if n >= 1 {
            parent[1] = 0;
        }
        Ok(Self {
            parent,
            in_degree,
            fitness,
        })
    }

    pub fn n(&self) -> usize {
        self.fitness.n()
    }

    /// parent[k] for k ≥ 2; 0 for the root.
    #[inline]
    pub fn parent(&self, k: usize) -> usize {
        self.parent[k]
    }

    /// Parent array indexed 0..=n; entries 0 and 1 are 0.
    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    /// W_{j,n}.
    #[inline]
    pub fn in_degree(&self, j: usize) -> usize {
        self.in_degree[j]
    }

    /// Undirected degree: in-degree plus the outgoing edge for j ≥ 2.
    #[inline]
    pub fn degree(&self, j: usize) -> usize {
        self.in_degree[j] + usize::from(j >= 2)
    }

    pub fn fitness(&self) -> &FitnessSequence {
        &self.fitness
    }

    /// Children lists in compressed form: the children of j are
    /// `list[offsets[j]..offsets[j+1]]`, in increasing order.
    pub fn children(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.n();
        let mut offsets = vec![0usize; n + 2];
        for j in 1..=n {
            offsets[j + 1] = offsets[j] + self.in_degree[j];
        }
        let mut fill = offsets.clone();
        let mut list = vec![0usize; n.saturating_sub(1)];
        for k in 2..=n {
            let p = self.parent[k];
            list[fill[p]] = k;
            fill[p] += 1;
        }
        (offsets, list)
    }

    /// Checks parent[k] < k and Σ W = n − 1.
    pub fn check(&self) -> bool {
        let n = self.n();
        let ok_parents = (2..=n).all(|k| self.parent[k] >= 1 && self.parent[k] < k);
        let total: usize = self.in_degree[1..].iter().sum();
        ok_parents && total == n.saturating_sub(1)
    }

    /// One line `k parent[k]` per vertex k ≥ 2.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(self.n() * 12);
        for k in 2..=self.n() {
            out.push_str(&format!("{} {}\n", k, self.parent[k]));
        }
        out
    }

    /// `{n, parents, fitness}` with `parents[i]` the parent of vertex i + 2.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n(),
            "parents": &self.parent[2.min(self.parent.len())..],
            "fitness": self.fitness.values(),
        })
    }
}

/// Stick-breaking state: B_1..B_n and S_{0,n}..S_{n,n}.
#[derive(Debug, Clone, PartialEq)]
pub struct UrnState {
    beta: Vec<f64>,
    s: Vec<f64>,
}

impl UrnState {
    /// Forms S_{k,n} = Π_{i>k}(1 − B_i) from betas indexed 1..n
    /// (`beta[0]` ignored, `beta[1]` forced to 1).
    pub fn from_betas(mut beta: Vec<f64>) -> Self {
        let n = beta.len() - 1;
        beta[0] = 0.0;
        if n >= 1 {
            beta[1] = 1.0;
        }
        let mut s = vec![0.0; n + 1];
        s[n] = 1.0;
        for k in (1..n).rev() {
            s[k] = s[k + 1] * (1.0 - beta[k + 1]);
        }
        s[0] = 0.0;
        Self { beta, s }
    }

    /// Fresh betas B_j ~ Beta(x_j, T_{j-1} + j − 1).
    pub fn sample<R: Rng + ?Sized>(seq: &FitnessSequence, rng: &mut R) -> Self {
        let n = seq.n();
        let mut beta = vec![0.0; n + 1];
        for (j, b) in beta.iter_mut().enumerate().skip(2) {
            *b = rng::beta(rng, seq.x(j), seq.t(j - 1) + j as f64 - 1.0);
        }
        Self::from_betas(beta)
    }

    pub fn n(&self) -> usize {
        self.s.len() - 1
    }

    #[inline]
    pub fn beta(&self, j: usize) -> f64 {
        self.beta[j]
    }

    /// S_{k,n}, 0 ≤ k ≤ n.
    #[inline]
    pub fn s(&self, k: usize) -> f64 {
        self.s[k]
    }

    pub fn s_values(&self) -> &[f64] {
        &self.s
    }

    /// The j with S_{j-1} ≤ u < S_j, restricted to 1..=upper.
    pub fn locate(&self, u: f64, upper: usize) -> usize {
        let j = self.s[..=upper].partition_point(|s| *s <= u);
        j.clamp(1, upper)
    }
}

/// Draws S_{k,n} alone; only B_{k+1..n} enter the product.
pub fn sample_s<R: Rng + ?Sized>(seq: &FitnessSequence, k: usize, rng: &mut R) -> f64 {
    let n = seq.n();
    if k == 0 {
        return 0.0;
    }
    let mut s = 1.0;
    for i in (k + 1)..=n {
        s *= 1.0 - rng::beta(rng, seq.x(i), seq.t(i - 1) + i as f64 - 1.0);
    }
    s
}

/// The sequential model, one vertex at a time.
///
/// Integer weights use a ball list (one entry per unit of weight, O(n));
/// real weights use a Fenwick tree over vertex weights (O(n log n)).
pub fn generate_sequential<R: Rng + ?Sized>(seq: &FitnessSequence, rng: &mut R) -> PATree {
    let n = seq.n();
    let mut parent = vec![0usize; n + 1];
    if n >= 2 {
        parent[2] = 1;
    }
    if seq.is_integral() {
        let total = seq.t(n) as usize + n;
        let mut balls: Vec<u32> = Vec::with_capacity(total);
        let push = |balls: &mut Vec<u32>, v: usize, count: usize| {
            balls.extend(std::iter::repeat_n(v as u32, count));
        };
        push(&mut balls, 1, seq.x(1) as usize);
        if n >= 2 {
            balls.push(1);
            push(&mut balls, 2, seq.x(2) as usize);
        }
        for m in 3..=n {
            let p = balls[rng.random_range(0..balls.len())] as usize;
            parent[m] = p;
            balls.push(p as u32);
            push(&mut balls, m, seq.x(m) as usize);
        }
    } else if n >= 2 {
        let mut weights = Fenwick::new(n);
        weights.add(1, 1.0 + seq.x(1));
        weights.add(2, seq.x(2));
        for m in 3..=n {
            let total = seq.t(m - 1) + m as f64 - 2.0;
            let p = weights.find(rng::unif(rng) * total).clamp(1, m - 1);
            parent[m] = p;
            weights.add(p, 1.0);
            weights.add(m, seq.x(m));
        }
    }
    PATree::from_parents(parent, seq.clone()).expect("sequential construction yields a tree")
}

/// The (x, n)-Pólya urn tree; returns the tree and its urn state.
pub fn generate_urn_tree<R: Rng + ?Sized>(seq: &FitnessSequence, rng: &mut R) -> (PATree, UrnState) {
    let urn = UrnState::sample(seq, rng);
    let n = seq.n();
    let mut parent = vec![0usize; n + 1];
    for k in 2..=n {
        parent[k] = if k == 2 {
            1
        } else {
            urn.locate(rng::unif(rng) * urn.s(k - 1), k - 1)
        };
    }
    let tree = PATree::from_parents(parent, seq.clone()).expect("urn construction yields a tree");
    (tree, urn)
}

/// A finite set of conditioned-on edges: probed vertices 𝒱 and edges ℰ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embellishment {
    probed: BTreeSet<usize>,
    /// Edges as (child, parent) with child > parent.
    edges: Vec<(usize, usize)>,
    v_s: usize,
    v_star: usize,
    /// 𝒱*: endpoints of ℰ outside 𝒱.
    star: BTreeSet<usize>,
}

/// JSON form: `{"probed": [...], "edges": [[u, v], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbellishmentSpec {
    pub probed: Vec<usize>,
    pub edges: Vec<[usize; 2]>,
}

impl Embellishment {
    /// Validates (𝒱, ℰ) against a tree on {1..n}.
    pub fn new(probed: &[usize], edges: &[(usize, usize)], n: usize) -> Result<Self> {
        let probed: BTreeSet<usize> = probed.iter().copied().collect();
        let v_s = *probed
            .iter()
            .next()
            .ok_or_else(|| invalid("probed", "must be non-empty"))?;
        if v_s < 2 || *probed.iter().next_back().unwrap() > n {
            return Err(invalid("probed", format!("vertices must lie in [2, {n}]")));
        }
        let mut norm = Vec::with_capacity(edges.len());
        let mut out_edge: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in edges {
            let (c, p) = if a > b { (a, b) } else { (b, a) };
            if p < 1 || c > n || c == p {
                return Err(invalid("edges", format!("edge {{{a},{b}}} is not a pair in [1, {n}]")));
            }
            if !probed.contains(&c) && !probed.contains(&p) {
                return Err(invalid("edges", format!("edge {{{a},{b}}} touches no probed vertex")));
            }
            if out_edge.insert(c, p).is_some() {
                return Err(invalid("edges", format!("vertex {c} has two outgoing edges")));
            }
            norm.push((c, p));
        }
        norm.sort_unstable();
        for &u in &probed {
            if !out_edge.contains_key(&u) {
                return Err(invalid("edges", format!("probed vertex {u} has no outgoing edge")));
            }
        }
        for &u in probed.iter().skip(1) {
            if !probed.contains(&out_edge[&u]) {
                return Err(invalid(
                    "edges",
                    format!("assumption (△) fails: edge of {u} leaves the probed set"),
                ));
            }
        }
        let star: BTreeSet<usize> = norm
            .iter()
            .flat_map(|&(c, p)| [c, p])
            .filter(|v| !probed.contains(v))
            .collect();
        let v_star = out_edge[&v_s];
        debug_assert_eq!(star.iter().next(), Some(&v_star));
        for &w in star.iter().filter(|w| **w != v_star) {
            match out_edge.get(&w) {
                Some(p) if probed.contains(p) => {}
                _ => {
                    return Err(invalid(
                        "edges",
                        format!("assumption (△) fails: {w} must send its edge into the probed set"),
                    ))
                }
            }
        }
        if probed.len() + star.len() >= n {
            return Err(invalid("probed", "probed and attached vertices must not cover {1..n}"));
        }
        Ok(Self {
            probed,
            edges: norm,
            v_s,
            v_star,
            star,
        })
    }

    pub fn from_spec(spec: &EmbellishmentSpec, n: usize) -> Result<Self> {
        let edges: Vec<(usize, usize)> = spec.edges.iter().map(|e| (e[0], e[1])).collect();
        Self::new(&spec.probed, &edges, n)
    }

    pub fn from_json(text: &str, n: usize) -> Result<Self> {
        let spec: EmbellishmentSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_spec(&spec, n)
    }

    pub fn probed(&self) -> &BTreeSet<usize> {
        &self.probed
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn v_s(&self) -> usize {
        self.v_s
    }

    pub fn v_star(&self) -> usize {
        self.v_star
    }

    pub fn star(&self) -> &BTreeSet<usize> {
        &self.star
    }

    /// Beta parameters of B_j(ℐ), or `None` when B_j(ℐ) = 0 (j ∈ 𝒱).
    ///
    /// For j > v_s the second parameter counts every edge of ℰ whose larger
    /// endpoint is at most j, so the outgoing edge of j ∈ 𝒱* is included.
    pub fn beta_params(&self, seq: &FitnessSequence, j: usize) -> Option<(f64, f64)> {
        if self.probed.contains(&j) {
            return None;
        }
        let base = seq.t(j - 1) + j as f64;
        if j <= self.v_star {
            let size_bias = if j == self.v_star { 1.0 } else { 0.0 };
            Some((seq.x(j) + size_bias, base - 1.0))
        } else if j < self.v_s {
            Some((seq.x(j), base))
        } else {
            let removed: f64 = self.probed.range(..j).map(|&k| seq.x(k)).sum();
            let edges = self.edges.iter().filter(|(c, _)| *c <= j).count();
            Some((seq.x(j), base - removed - edges as f64))
        }
    }
}

/// The (x, ℐ, n)-Pólya urn tree.
pub fn generate_embellished_urn_tree<R: Rng + ?Sized>(
    seq: &FitnessSequence,
    emb: &Embellishment,
    rng: &mut R,
) -> Result<PATree> {
    let n = seq.n();
    if emb.probed.iter().chain(&emb.star).any(|v| *v > n) || emb.probed.len() + emb.star.len() >= n {
        return Err(invalid("embellishment", format!("does not fit a tree on {n} vertices")));
    }
    let mut beta = vec![0.0; n + 1];
    for (j, b) in beta.iter_mut().enumerate().skip(2) {
        *b = match emb.beta_params(seq, j) {
            Some((a, c)) => rng::beta(rng, a, c),
            None => 0.0,
        };
    }
    let urn = UrnState::from_betas(beta);
    let mut parent = vec![0usize; n + 1];
    for &(c, p) in &emb.edges {
        parent[c] = p;
    }
    for k in 2..=n {
        let fixed = emb.probed.contains(&k) || (emb.star.contains(&k) && k != emb.v_star);
        if !fixed {
            parent[k] = urn.locate(rng::unif(rng) * urn.s(k - 1), k - 1);
        }
    }
    PATree::from_parents(parent, seq.clone())
}

/// Exact marginals P(parent[k] = j), returned as `p[k][j]` for 2 ≤ k ≤ n,
/// 1 ≤ j < k, by propagating the law of the in-degree profile.
pub fn sequential_marginals_exact(seq: &FitnessSequence) -> Result<Vec<Vec<f64>>> {
    let n = seq.n();
    if n > EXACT_ORACLE_MAX_N {
        return Err(Error::Refused(format!(
            "exact recursion supports n ≤ {EXACT_ORACLE_MAX_N}, got {n}"
        )));
    }
    let mut out = vec![Vec::new(); n + 1];
    if n < 2 {
        return Ok(out);
    }
    out[2] = vec![0.0, 1.0];
    let mut states: HashMap<Vec<u8>, f64> = HashMap::new();
    states.insert(vec![1, 0], 1.0);
    for k in 3..=n {
        let denom = seq.t(k - 1) + k as f64 - 2.0;
        let mut marg = vec![0.0; k];
        let mut next: HashMap<Vec<u8>, f64> = HashMap::with_capacity(states.len() * 2);
        for (w, p) in &states {
            for j in 1..k {
                let q = p * (w[j - 1] as f64 + seq.x(j)) / denom;
                marg[j] += q;
                let mut w2 = w.clone();
                w2[j - 1] += 1;
                w2.push(0);
                *next.entry(w2).or_insert(0.0) += q;
            }
        }
        out[k] = marg;
        states = next;
    }
    Ok(out)
}

/// P(parent[k] = j) in the sequential model, summed over all histories.
pub fn sequential_edge_probability_exact(seq: &FitnessSequence, j: usize, k: usize) -> Result<f64> {
    let n = seq.n();
    if !(1 <= j && j < k && k <= n) {
        return Err(invalid("j/k", format!("need 1 ≤ j < k ≤ {n}, got j={j}, k={k}")));
    }
    Ok(sequential_marginals_exact(seq)?[k][j])
}

/// Marginal law of parent[k] in the sequential tree.
///
/// Averaging the in-degree recursion gives P(parent[k] = h) ∝ w_h on h < k
/// with w_1 = 1 + x_1 and w_h = x_h Π_{l=2}^{h-1} (T_l+l−1)/(T_l+l) for
/// h ≥ 2; the weights do not depend on k beyond the range restriction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentLaw {
    cum: Vec<f64>,
}

impl ParentLaw {
    pub fn new(seq: &FitnessSequence) -> Self {
        let n = seq.n();
        let mut cum = vec![0.0; n + 1];
        if n >= 1 {
            cum[1] = 1.0 + seq.x(1);
        }
        let mut log_g = 0.0;
        for h in 2..=n {
            if h >= 3 {
                let l = h - 1;
                let a = seq.t(l) + l as f64;
                log_g += (a / (a - 1.0)).ln();
            }
            cum[h] = cum[h - 1] + seq.x(h) * (-log_g).exp();
        }
        Self { cum }
    }

    /// P(parent[k] = h) for 1 ≤ h < k.
    pub fn prob(&self, k: usize, h: usize) -> f64 {
        (self.cum[h] - self.cum[h - 1]) / self.cum[k - 1]
    }

    /// Inverse-CDF draw of parent[k] from a uniform `u` in [0, 1).
    pub fn sample(&self, k: usize, u: f64) -> usize {
        let target = u * self.cum[k - 1];
        self.cum[..k].partition_point(|c| *c <= target).clamp(1, k - 1)
    }
}

/// Classical Pólya urn with real initial masses: returns the white mass after
/// `draws` reinforced draws.
pub fn classical_polya_urn<R: Rng + ?Sized>(black: f64, white: f64, draws: u64, rng: &mut R) -> Result<f64> {
    if !(black > 0.0) {
        return Err(invalid("black", format!("must be > 0, got {black}")));
    }
    if !(white > 0.0) {
        return Err(invalid("white", format!("must be > 0, got {white}")));
    }
    let (mut b, mut w) = (black, white);
    for _ in 0..draws {
        if rng::unif(rng) * (b + w) < w {
            w += 1.0;
        } else {
            b += 1.0;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitness::FitnessModel;
    use proptest::prelude::*;

    #[test]
    fn parent_law_matches_exact_marginals() {
        let seq = FitnessSequence::from_values(&[-0.4, 1.5, 0.5, 2.0, 1.0, 0.7, 1.2], 1.0).unwrap();
        let law = ParentLaw::new(&seq);
        let exact = sequential_marginals_exact(&seq).unwrap();
        for k in 2..=7 {
            for h in 1..k {
                assert!((law.prob(k, h) - exact[k][h]).abs() < 1e-12, "k={k} h={h}");
            }
            assert_eq!(law.sample(k, 0.0), 1);
            assert_eq!(law.sample(k, 0.999_999_999), k - 1);
        }
    }

    fn ones(n: usize) -> FitnessSequence {
        FitnessSequence::from_values(&vec![1.0; n], 1.0).unwrap()
    }

    #[test]
    fn tiny_trees() {
        let seq = ones(2);
        let mut r = rng::from_seed(1);
        assert_eq!(generate_sequential(&seq, &mut r).parent(2), 1);
        let (t, urn) = generate_urn_tree(&seq, &mut r);
        assert_eq!(t.parent(2), 1);
        assert_eq!((urn.s(0), urn.s(2)), (0.0, 1.0));
        assert_eq!(t.to_edge_list(), "2 1\n");
    }

    #[test]
    fn exact_oracle_small_cases() {
        let seq = ones(3);
        assert_eq!(sequential_edge_probability_exact(&seq, 1, 2).unwrap(), 1.0);
        let p = sequential_edge_probability_exact(&seq, 1, 3).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
        let big = ones(EXACT_ORACLE_MAX_N + 1);
        assert!(matches!(sequential_edge_probability_exact(&big, 1, 2), Err(Error::Refused(_))));
        let m = sequential_marginals_exact(&ones(8)).unwrap();
        for (k, row) in m.iter().enumerate().skip(2) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row {k} sums to {s}");
        }
    }

    #[test]
    fn sequential_frequency_matches_two_thirds() {
        let seq = ones(3);
        let reps = 200_000;
        let mut hits = 0;
        let mut r = rng::from_seed(5);
        for _ in 0..reps {
            hits += usize::from(generate_sequential(&seq, &mut r).parent(3) == 1);
        }
        let p = hits as f64 / reps as f64;
        let se = (2.0 / 9.0 / reps as f64).sqrt();
        assert!((p - 2.0 / 3.0).abs() < 4.0 * se, "{p}");
    }

    #[test]
    fn fenwick_and_ball_list_agree_in_law() {
        // x = (1, 1.5, 1.5, ...) forces the Fenwick path; compare with the oracle.
        let seq = FitnessSequence::from_values(&[0.5, 1.5, 1.5, 1.5, 1.5], 1.5).unwrap();
        assert!(!seq.is_integral());
        let exact = sequential_marginals_exact(&seq).unwrap();
        let reps = 200_000;
        let mut counts = vec![0usize; 5];
        let mut r = rng::from_seed(9);
        for _ in 0..reps {
            counts[generate_sequential(&seq, &mut r).parent(5)] += 1;
        }
        for j in 1..5 {
            let p = exact[5][j];
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((counts[j] as f64 / reps as f64 - p).abs() < 5.0 * se);
        }
    }

    #[test]
    fn embellished_forced_and_validation() {
        let seq = ones(3);
        let emb = Embellishment::new(&[2], &[(2, 1)], 3).unwrap();
        assert_eq!((emb.v_s(), emb.v_star()), (2, 1));
        let mut r = rng::from_seed(2);
        for _ in 0..100 {
            assert_eq!(generate_embellished_urn_tree(&seq, &emb, &mut r).unwrap().parent(3), 1);
        }
        // (△) violated: vertex 4 is probed but sends its edge outside 𝒱.
        assert!(Embellishment::new(&[3, 4], &[(3, 1), (4, 2)], 6).is_err());
        // 𝒱 ∪ 𝒱* covers everything.
        assert!(Embellishment::new(&[2], &[(2, 1)], 2).is_err());
        assert!(Embellishment::from_json(r#"{"probed":[2],"edges":[[2,1]]}"#, 5).is_ok());
    }

    #[test]
    fn classical_urn_examples() {
        let mut r = rng::from_seed(4);
        assert_eq!(classical_polya_urn(2.0, 1.5, 0, &mut r).unwrap(), 1.5);
        assert!(classical_polya_urn(0.0, 1.0, 3, &mut r).is_err());
        let reps = 200_000;
        let twos = (0..reps)
            .filter(|_| classical_polya_urn(2.0, 1.0, 1, &mut r).unwrap() == 2.0)
            .count();
        let se = (2.0 / 9.0 / reps as f64).sqrt();
        assert!((twos as f64 / reps as f64 - 1.0 / 3.0).abs() < 4.0 * se);
    }

    #[test]
    fn children_lists_are_consistent() {
        let m = FitnessModel::uniform(0.5, 1.5, 0.2).unwrap();
        let mut r = rng::from_seed(8);
        let seq = crate::fitness::sample_fitness_sequence(&m, 300, &mut r).unwrap();
        let t = generate_sequential(&seq, &mut r);
        let (off, list) = t.children();
        for j in 1..=t.n() {
            let kids = &list[off[j]..off[j + 1]];
            assert_eq!(kids.len(), t.in_degree(j));
            assert!(kids.iter().all(|&k| t.parent(k) == j));
            assert!(kids.windows(2).all(|w| w[0] < w[1]));
        }
    }

    proptest! {
        #[test]
        fn every_generator_yields_a_valid_tree(seed in any::<u64>(), n in 1usize..120, x1 in -0.9f64..3.0) {
            let m = FitnessModel::uniform(0.5, 2.0, x1).unwrap();
            let mut r = rng::from_seed(seed);
            let seq = crate::fitness::sample_fitness_sequence(&m, n, &mut r).unwrap();
            prop_assert!(generate_sequential(&seq, &mut r).check());
            let (t, urn) = generate_urn_tree(&seq, &mut r);
            prop_assert!(t.check());
            prop_assert!(urn.s_values().windows(2).all(|w| w[0] <= w[1]));
            let total: f64 = (1..=n).map(|j| urn.s(j) - urn.s(j - 1)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn integral_sequences_yield_valid_trees(seed in any::<u64>(), n in 1usize..200, x1 in 0u8..3, v in 1u8..4) {
            let mut vals = vec![v as f64; n];
            vals[0] = x1 as f64;
            let seq = FitnessSequence::from_values(&vals, v as f64).unwrap();
            prop_assert!(generate_sequential(&seq, &mut rng::from_seed(seed)).check());
        }
    }
}
