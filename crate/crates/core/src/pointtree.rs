//! The π-Pólya point tree, its finite-n analogue (the intermediate point
//! tree), and the degree vectors of the limit.
//!
//! Every node carries an age a ∈ (0, 1], a fitness X and a gamma variable Z.
//! A root or type-L node has one younger type-L child with age uniform on
//! [0, a]. Any node has type-R children at the points of a Poisson process on
//! (a, 1] with intensity Z y^{1/μ−1} / (μ a^{1/μ}), whose total mass is
//! Z (a^{−1/μ} − 1). Type-L nodes draw Z with shape X + 1, all others with
//! shape X.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::exploration::{RootedNeighborhood, VertexType};
use crate::fitness::{FitnessModel, FitnessSequence};
use crate::rng;

pub const DEFAULT_NODE_CAP: usize = 100_000;

/// a^{−1/μ} − 1 without forming a^{−1/μ}.
fn excess_mass(age: f64, mu: f64) -> f64 {
    (-age.ln() / mu).exp_m1()
}

/// `count` sorted points on (a, 1] with density ∝ y^{1/μ−1}.
fn poisson_ages<R: Rng + ?Sized>(age: f64, mu: f64, count: usize, rng: &mut R) -> Vec<f64> {
    let lo = (age.ln() / mu).exp();
    let mut ys: Vec<f64> = (0..count)
        .map(|_| (lo + rng::unif_open0(rng) * (1.0 - lo)).powf(mu).clamp(age, 1.0))
        .collect();
    ys.sort_by(f64::total_cmp);
    ys
}

/// Samples B_r(𝒯, 0) of the π-Pólya point tree. Generation stops, with the
/// result flagged truncated, once more than `node_cap` nodes would be needed.
pub fn sample_pi_polya_point_tree<R: Rng + ?Sized>(
    model: &FitnessModel,
    r: usize,
    node_cap: usize,
    rng: &mut R,
) -> RootedNeighborhood {
    let mu = model.mu();
    let chi = model.chi();
    let x0 = model.sample(rng);
    let a0 = rng::unif_open0(rng).powf(chi);
    let z0 = rng::gamma(rng, x0);
    let mut ball = RootedNeighborhood::new(r, None, Some(a0), x0, Some(z0));
    let mut head = 0;
    while head < ball.len() {
        let v = head;
        head += 1;
        let node = ball.node(v);
        if node.depth() >= r {
            continue;
        }
        let a = node.age.expect("point-tree nodes are aged");
        let z = node.gamma.expect("point-tree nodes carry Z");
        let ty = node.vertex_type;
        let count = rng::poisson(rng, z * excess_mass(a, mu));
        let extra = usize::from(ty != VertexType::R);
        if ball.len().saturating_add(extra).saturating_add(count as usize) > node_cap {
            ball.mark_truncated();
            return ball;
        }
        if ty != VertexType::R {
            let age = a * rng::unif_open0(rng);
            let x = model.sample(rng);
            let z = rng::gamma(rng, x + 1.0);
            ball.push_child(v, VertexType::L, None, Some(age), x, Some(z));
        }
        for y in poisson_ages(a, mu, count as usize, rng) {
            let x = model.sample(rng);
            let z = rng::gamma(rng, x);
            ball.push_child(v, VertexType::R, None, Some(y), x, Some(z));
        }
    }
    ball
}

/// ξ₀ = 1 + τ₀, the limiting degree of a uniform vertex.
pub fn sample_root_degree_limit<R: Rng + ?Sized>(model: &FitnessModel, rng: &mut R) -> u64 {
    let x = model.sample(rng);
    let a = rng::unif_open0(rng).powf(model.chi());
    let z = rng::gamma(rng, x);
    1 + rng::poisson(rng, z * excess_mass(a, model.mu()))
}

/// (τ₀ + 1, τ_{L[1]} + 2, …, τ_{L[r]} + 2): limiting degrees along the
/// chain of type-L ancestors of the root.
pub fn sample_ancestor_degree_vector<R: Rng + ?Sized>(model: &FitnessModel, r: usize, rng: &mut R) -> Vec<u64> {
    let mu = model.mu();
    let mut out = Vec::with_capacity(r + 1);
    out.push(sample_root_degree_limit(model, rng));
    if r == 0 {
        return out;
    }
    // Ages are regenerated on a fresh chain only after the root draw, so the
    // r = 0 case consumes exactly the root sampler's randomness.
    let mut a = rng::unif_open0(rng).powf(model.chi());
    for _ in 0..r {
        a *= rng::unif_open0(rng);
        let x = model.sample(rng);
        let z = rng::gamma(rng, x + 1.0);
        out.push(2 + rng::poisson(rng, z * excess_mass(a, mu)));
    }
    out
}

/// Shape of ζ̃_j[v̄] for a root or type-L node v̄ of the intermediate tree.
///
/// `k_v` is the PA label of v̄, `k_prev` that of the spine node one level up
/// (`None` for the root), `depth` = |v̄| − 1, and `earlier(j)` the total of
/// x_{k̂} + τ̂ over nodes preceding v̄ in breadth-first order whose label is
/// below j. The three regimes are j ≤ k_v, k_v < j < k_prev and j > k_prev.
pub fn zeta_tilde_shape(
    seq: &FitnessSequence,
    j: usize,
    k_v: usize,
    k_prev: Option<usize>,
    depth: usize,
    earlier: impl Fn(usize) -> f64,
) -> f64 {
    let base = seq.t(j - 1) + j as f64 - 1.0;
    match k_prev {
        None => base,
        Some(_) if j <= k_v => base,
        Some(kp) if j < kp => base + 1.0,
        Some(_) => base + 2.0 - (depth as f64 + 1.0) - earlier(j),
    }
}

/// One inverse step of the L-walk: returns h with S_{h−1} ≤ u S_{k−1} < S_h,
/// drawing β_{k−1}, β_{k−2}, … lazily. Labels in `blocked` (descending)
/// have β = 0.
fn l_step_label<R: Rng + ?Sized>(
    seq: &FitnessSequence,
    k: usize,
    u: f64,
    blocked: &[usize],
    shape: impl Fn(usize) -> f64,
    rng: &mut R,
) -> usize {
    let log_u = u.ln();
    let mut log_ratio = 0.0;
    let mut next_blocked = 0;
    for h in (2..k).rev() {
        while next_blocked < blocked.len() && blocked[next_blocked] > h {
            next_blocked += 1;
        }
        if next_blocked < blocked.len() && blocked[next_blocked] == h {
            continue;
        }
        let a = seq.x(h);
        let b = shape(h);
        // 1 − β_h ~ Beta(b, a); for a = 1 this is V^{1/b}.
        log_ratio += if a == 1.0 {
            rng::unif_open0(rng).ln() / b
        } else {
            (1.0 - rng::beta(rng, a, b)).ln()
        };
        if log_ratio <= log_u {
            return h;
        }
    }
    1
}

/// PA label of an age: the k with ((k−1)/n)^χ < y ≤ (k/n)^χ.
pub(crate) fn bin_label(y: f64, n: usize, chi: f64) -> usize {
    let nf = n as f64;
    let mut k = ((nf * y.powf(1.0 / chi)).ceil() as usize).clamp(1, n);
    while k > 1 && ((k - 1) as f64 / nf).powf(chi) >= y {
        k -= 1;
    }
    while k < n && (k as f64 / nf).powf(chi) < y {
        k += 1;
    }
    assert!(
        (k == 1 || ((k - 1) as f64 / nf).powf(chi) < y) && y <= (k as f64 / nf).powf(chi) * (1.0 + 1e-15),
        "age {y} outside the bin of label {k}"
    );
    k
}

/// Samples B_r of the intermediate Pólya point tree for the fitness sequence
/// `seq`. The construction stops (flagged truncated, and flagged as
/// containing vertex 1) as soon as a node receives PA label 1.
pub fn sample_intermediate_point_tree<R: Rng + ?Sized>(
    seq: &FitnessSequence,
    r: usize,
    node_cap: usize,
    rng: &mut R,
) -> Result<RootedNeighborhood> {
    let n = seq.n();
    if n < 2 {
        return Err(invalid("n", "the intermediate tree needs n ≥ 2"));
    }
    let mu = seq.mu();
    let chi = seq.chi();
    let u0 = rng::unif_open0(rng);
    let k0 = ((n as f64 * u0).ceil() as usize).clamp(1, n);
    let a0 = u0.powf(chi);
    let mut ball = RootedNeighborhood::new(r, Some(k0), Some(a0), seq.x(k0), None);
    if k0 == 1 {
        ball.mark_truncated();
        return Ok(ball);
    }
    ball.set_gamma(0, rng::gamma(rng, seq.x(k0)));
    let mut used: HashSet<usize> = HashSet::new();
    let mut spine_prev: Option<usize> = None;
    let mut head = 0;
    while head < ball.len() {
        let v = head;
        head += 1;
        if v > 0 {
            used.insert(ball.node(v - 1).pa_label.expect("labelled"));
        }
        let node = ball.node(v);
        if node.depth() >= r {
            continue;
        }
        let a = node.age.expect("aged");
        let k = node.pa_label.expect("labelled");
        let zeta = node.gamma.expect("gamma drawn");
        let ty = node.vertex_type;
        let depth = node.depth();
        let count = rng::poisson(rng, zeta * excess_mass(a, mu));
        let extra = usize::from(ty != VertexType::R);
        if ball.len().saturating_add(extra).saturating_add(count as usize) > node_cap {
            ball.mark_truncated();
            return Ok(ball);
        }

        if ty != VertexType::R {
            let u = rng::unif_open0(rng);
            let mut blocked: Vec<usize> = used.iter().copied().filter(|&l| l < k).collect();
            blocked.sort_unstable_by(|a, b| b.cmp(a));
            let earlier = |j: usize| -> f64 {
                ball.nodes()[..v]
                    .iter()
                    .filter_map(|x| x.pa_label.map(|l| (l, x.child_count_r)))
                    .filter(|(l, _)| *l < j)
                    .map(|(l, tau)| seq.x(l) + tau as f64)
                    .sum()
            };
            let shape = |j: usize| zeta_tilde_shape(seq, j, k, spine_prev, depth, &earlier);
            let h = l_step_label(seq, k, u, &blocked, shape, rng);
            let child = ball.push_child(v, VertexType::L, Some(h), Some(a * u), seq.x(h), None);
            if h == 1 {
                ball.mark_truncated();
                return Ok(ball);
            }
            ball.set_gamma(child, rng::gamma(rng, seq.x(h) + 1.0));
            spine_prev = Some(k);
        }
        for y in poisson_ages(a, mu, count as usize, rng) {
            let h = bin_label(y, n, chi);
            let child = ball.push_child(v, VertexType::R, Some(h), Some(y), seq.x(h), None);
            if h == 1 {
                ball.mark_truncated();
                return Ok(ball);
            }
            ball.set_gamma(child, rng::gamma(rng, seq.x(h)));
        }
    }
    Ok(ball)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{degree_pmf_ancestor, degree_pmf_root};
    use crate::generators::ParentLaw;
    use crate::rng::from_seed;
    use crate::stats::{tv_distance, EmpiricalDistribution};
    use proptest::prelude::*;

    fn unit() -> FitnessModel {
        FitnessModel::point_mass(1.0, 1.0).unwrap()
    }

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn radius_zero_is_the_root() {
        let t = sample_pi_polya_point_tree(&unit(), 0, DEFAULT_NODE_CAP, &mut from_seed(1));
        assert_eq!(t.len(), 1);
        let a = t.root().age.unwrap();
        assert!(a > 0.0 && a <= 1.0);
    }

    #[test]
    fn root_offspring_has_mean_one() {
        let mut rng = from_seed(2);
        let taus: Vec<f64> = (0..100_000)
            .map(|_| sample_pi_polya_point_tree(&unit(), 1, DEFAULT_NODE_CAP, &mut rng).root().child_count_r as f64)
            .collect();
        let (m, se) = mean_se(&taus);
        assert!((m - 1.0).abs() < 4.0 * se, "{m} ± {se}");
    }

    #[test]
    fn root_offspring_is_conditionally_poisson() {
        let mut rng = from_seed(3);
        let (mut first, mut second) = (Vec::new(), Vec::new());
        while first.len() < 100_000 {
            let t = sample_pi_polya_point_tree(&unit(), 1, DEFAULT_NODE_CAP, &mut rng);
            let root = t.root();
            let m = root.gamma.unwrap() * excess_mass(root.age.unwrap(), 1.0);
            if m > 5.0 {
                continue;
            }
            let tau = root.child_count_r as f64;
            first.push(tau - m);
            second.push((tau - m).powi(2) - tau);
        }
        let (m1, s1) = mean_se(&first);
        let (m2, s2) = mean_se(&second);
        assert!(m1.abs() < 4.0 * s1, "{m1} ± {s1}");
        assert!(m2.abs() < 4.0 * s2, "{m2} ± {s2}");
    }

    #[test]
    fn root_degree_limit_frequencies() {
        let mut rng = from_seed(4);
        let reps = 1_000_000;
        let mut counts = [0u64; 7];
        let mut total = 0.0;
        for _ in 0..reps {
            let d = sample_root_degree_limit(&unit(), &mut rng);
            assert!(d >= 1);
            total += d as f64;
            if d < 7 {
                counts[d as usize] += 1;
            }
        }
        for k in 1..=5u64 {
            let p = degree_pmf_root(&unit(), k).unwrap();
            let f = counts[k as usize] as f64 / reps as f64;
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((f - p).abs() < 4.0 * se, "k={k}: {f} vs {p}");
        }
        // The degree has infinite variance at μ = 1; only a loose check of the mean.
        assert!((total / reps as f64 - 2.0).abs() < 0.05);
    }

    #[test]
    fn ancestor_vector_frequencies() {
        let mut rng = from_seed(5);
        let reps = 1_000_000;
        let mut counts = [0u64; 8];
        for _ in 0..reps {
            let v = sample_ancestor_degree_vector(&unit(), 2, &mut rng);
            assert_eq!(v.len(), 3);
            assert!(v[1] >= 2 && v[2] >= 2);
            if v[1] < 8 {
                counts[v[1] as usize] += 1;
            }
        }
        for k in 2..=6u64 {
            let q = degree_pmf_ancestor(&unit(), k).unwrap();
            let f = counts[k as usize] as f64 / reps as f64;
            let se = (q * (1.0 - q) / reps as f64).sqrt();
            assert!((f - q).abs() < 4.0 * se, "k={k}: {f} vs {q}");
        }
    }

    #[test]
    fn ancestor_vector_at_radius_zero_is_root_degree() {
        for seed in 0..50 {
            let a = sample_ancestor_degree_vector(&unit(), 0, &mut from_seed(seed));
            let b = sample_root_degree_limit(&unit(), &mut from_seed(seed));
            assert_eq!(a, vec![b]);
        }
    }

    #[test]
    fn old_roots_are_leaves() {
        let mut rng = from_seed(6);
        let (mut seen, mut leaves) = (0, 0);
        while seen < 2000 {
            let t = sample_pi_polya_point_tree(&unit(), 1, DEFAULT_NODE_CAP, &mut rng);
            if t.root().age.unwrap() > 0.999 {
                seen += 1;
                leaves += usize::from(t.root().child_count_r == 0);
            }
        }
        assert!(leaves as f64 / seen as f64 > 0.99);
    }

    #[test]
    fn node_cap_truncates() {
        let mut rng = from_seed(7);
        let t = (0..10_000)
            .map(|_| sample_pi_polya_point_tree(&unit(), 3, 5, &mut rng))
            .find(|t| t.truncated())
            .expect("some ball exceeds five nodes");
        assert!(t.len() <= 5);
    }

    #[test]
    fn intermediate_root_label_is_uniform() {
        let seq = FitnessSequence::constant(&unit(), 5, 1.0).unwrap();
        let mut rng = from_seed(8);
        let reps = 100_000;
        let mut counts = [0u64; 6];
        for _ in 0..reps {
            let t = sample_intermediate_point_tree(&seq, 0, DEFAULT_NODE_CAP, &mut rng).unwrap();
            counts[t.root().pa_label.unwrap()] += 1;
        }
        for c in &counts[1..] {
            let f = *c as f64 / reps as f64;
            assert!((f - 0.2).abs() < 4.0 * (0.16 / reps as f64).sqrt());
        }
    }

    #[test]
    fn intermediate_l_step_follows_parent_law() {
        let seq = FitnessSequence::from_values(&[1.0, 0.5, 2.0, 1.0, 1.5, 0.7, 3.0, 1.0], 1.2).unwrap();
        let law = ParentLaw::new(&seq);
        let mut rng = from_seed(9);
        let mut joint = vec![vec![0u64; 9]; 9];
        let reps = 400_000;
        for _ in 0..reps {
            let t = sample_intermediate_point_tree(&seq, 1, DEFAULT_NODE_CAP, &mut rng).unwrap();
            if t.len() >= 2 {
                let k = t.root().pa_label.unwrap();
                let h = t.node(1).pa_label.unwrap();
                assert_eq!(t.node(1).vertex_type, VertexType::L);
                joint[k][h] += 1;
            }
        }
        for k in 2..=8 {
            let total: u64 = joint[k].iter().sum();
            for h in 1..k {
                let p = law.prob(k, h);
                let f = joint[k][h] as f64 / total as f64;
                let se = (p * (1.0 - p) / total as f64).sqrt();
                assert!((f - p).abs() <= 5.0 * se + 1e-12, "k={k} h={h}: {f} vs {p}");
            }
        }
    }

    #[test]
    fn intermediate_root_degree_matches_limit() {
        let seq = FitnessSequence::constant(&unit(), 10_000, 1.0).unwrap();
        let mut rng = from_seed(10);
        let mut a = EmpiricalDistribution::new();
        let mut b = EmpiricalDistribution::new();
        for _ in 0..100_000 {
            let t = sample_intermediate_point_tree(&seq, 1, DEFAULT_NODE_CAP, &mut rng).unwrap();
            if !t.truncated() {
                a.add(t.root_degree() as u64);
            }
            let p = sample_pi_polya_point_tree(&unit(), 1, DEFAULT_NODE_CAP, &mut rng);
            b.add(p.root_degree() as u64);
        }
        let tv = tv_distance(&a, &b).unwrap();
        assert!(tv < 0.02, "{tv}");
    }

    #[test]
    fn tilde_shapes_by_regime() {
        let seq = FitnessSequence::from_values(&[1.0, 2.0, 0.5, 1.5, 1.0, 3.0], 1.0).unwrap();
        let base = |j: usize| seq.t(j - 1) + j as f64 - 1.0;
        assert_eq!(zeta_tilde_shape(&seq, 5, 3, None, 0, |_| 9.0), base(5));
        assert_eq!(zeta_tilde_shape(&seq, 3, 3, Some(5), 1, |_| 9.0), base(3));
        assert_eq!(zeta_tilde_shape(&seq, 4, 3, Some(5), 1, |_| 9.0), base(4) + 1.0);
        assert_eq!(zeta_tilde_shape(&seq, 6, 3, Some(5), 1, |_| 1.5), base(6) + 2.0 - 2.0 - 1.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn point_tree_ages_are_ordered(seed in any::<u64>(), r in 0usize..4) {
            let t = sample_pi_polya_point_tree(&unit(), r, 5_000, &mut from_seed(seed));
            let mut l_per_depth = vec![0usize; r + 1];
            for node in t.nodes() {
                let a = node.age.unwrap();
                prop_assert!(a > 0.0 && a <= 1.0);
                if let Some(p) = node.parent {
                    let pa = t.node(p).age.unwrap();
                    match node.vertex_type {
                        VertexType::L => {
                            prop_assert!(a <= pa);
                            prop_assert_eq!(*node.label.last().unwrap(), 1);
                            l_per_depth[node.depth()] += 1;
                        }
                        VertexType::R => prop_assert!(a >= pa),
                        VertexType::Root => prop_assert!(false),
                    }
                }
                let ages: Vec<f64> = node.children.iter().map(|&c| t.node(c)).filter(|c| c.vertex_type == VertexType::R).map(|c| c.age.unwrap()).collect();
                prop_assert!(ages.windows(2).all(|w| w[0] <= w[1]));
            }
            if !t.truncated() {
                prop_assert!(l_per_depth[1..].iter().all(|&c| c == 1));
            }
        }

        #[test]
        fn intermediate_labels_match_bins(seed in any::<u64>(), n in 2usize..2000) {
            let seq = FitnessSequence::constant(&unit(), n, 1.0).unwrap();
            let t = sample_intermediate_point_tree(&seq, 2, 5_000, &mut from_seed(seed)).unwrap();
            let chi = seq.chi();
            for node in t.nodes().iter().filter(|x| x.vertex_type == VertexType::R) {
                let (k, y) = (node.pa_label.unwrap() as f64, node.age.unwrap());
                prop_assert!(((k - 1.0) / n as f64).powf(chi) < y);
                prop_assert!(y <= (k / n as f64).powf(chi) * (1.0 + 1e-12));
            }
            for node in t.nodes().iter().filter(|x| x.vertex_type == VertexType::L) {
                let parent = t.node(node.parent.unwrap());
                prop_assert!(node.pa_label.unwrap() < parent.pa_label.unwrap());
            }
        }
    }
}
