//! Bernoulli/Poisson couplings of the type-R neighbour process.
//!
//! For a probe k the harness lines up four vectors over the indices
//! k*, …, n: the Bernoulli process Y (means P), an intermediate Bernoulli
//! process Ŷ (means P̂), an intermediate Poisson process V̂ (means P̂) and the
//! discretised mixed Poisson process V (means λ). Index by index, Y and Ŷ share
//! one uniform, Ŷ and V̂ are maximally coupled, and V̂ and V are coupled
//! monotonically. Each replicate records which of the three links broke.

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::exploration::{conditional_urn_state, ExplorationState, VertexType};
use crate::fitness::{check_concentration_event, default_phi, FitnessSequence};
use crate::pointtree::bin_label;
use crate::rng::{self, substream};

/// (1[u < p], 1[u < p̂]): the pair disagrees exactly when u falls between
/// the two means.
pub fn couple_bernoulli_pair(p: f64, p_hat: f64, u: f64) -> (u64, u64) {
    (u64::from(u < p), u64::from(u < p_hat))
}

/// Poisson(mean) by sequential inversion; cheap for the small means that
/// dominate the coupling vectors.
fn poisson_small<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean > 10.0 {
        return rng::poisson(rng, mean);
    }
    let mut target = rng::unif(rng);
    let mut pmf = (-mean).exp();
    let mut k = 0u64;
    while target >= pmf && pmf > 0.0 {
        target -= pmf;
        k += 1;
        pmf *= mean / k as f64;
    }
    k
}

/// Draws the Poisson(q) partner of a Bernoulli(q) outcome under the maximal
/// coupling: P(1, 1) = q e^{−q}, P(1, 0) = e^{−q} − (1 − q), P(0, 0) = 1 − q
/// and P(1, j) = e^{−q} q^j / j! for j ≥ 2.
pub fn poisson_given_bernoulli<R: Rng + ?Sized>(q: f64, bernoulli: u64, rng: &mut R) -> u64 {
    if bernoulli == 0 || !(q > 0.0) {
        return 0;
    }
    let e = (-q).exp();
    let w = rng::unif(rng) * q;
    if w < q * e {
        return 1;
    }
    if w < q * e + (e - 1.0 + q) {
        return 0;
    }
    // Poisson(q) conditioned on ≥ 2.
    let tail = -(-q).exp_m1() - q * e;
    let mut target = rng::unif(rng) * tail;
    let mut pmf = e * q * q / 2.0;
    let mut k = 2u64;
    while target >= pmf && pmf > 0.0 {
        target -= pmf;
        k += 1;
        pmf *= q / k as f64;
    }
    k
}

/// (Bernoulli(p), Poisson(p)) maximally coupled; they differ with
/// probability p (1 − e^{−p}) ≤ p².
pub fn couple_bernoulli_poisson<R: Rng + ?Sized>(p: f64, rng: &mut R) -> (u64, u64) {
    let b = u64::from(rng::unif(rng) < p);
    (b, poisson_given_bernoulli(p, b, rng))
}

/// Poisson(λ) partner of a Poisson(q) value `v`: adds independent
/// Poisson(λ − q) noise when λ ≥ q and thins `v` with retention λ/q
/// otherwise. Either way the pair differs with probability 1 − e^{−|λ−q|}.
pub fn poisson_given_poisson<R: Rng + ?Sized>(q: f64, lambda: f64, v: u64, rng: &mut R) -> u64 {
    if lambda >= q {
        v + poisson_small(rng, lambda - q)
    } else {
        let keep = lambda / q;
        (0..v).filter(|_| rng::unif(rng) < keep).count() as u64
    }
}

/// The additive coupling: V' ~ Poisson(min λ), V'' ~ Poisson(|λ₁ − λ₂|), and
/// the larger mean gets V' + V''.
pub fn couple_poisson_pair<R: Rng + ?Sized>(lambda1: f64, lambda2: f64, rng: &mut R) -> Result<(u64, u64)> {
    for (name, l) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(invalid(name, format!("intensity must be finite and ≥ 0, got {l}")));
        }
    }
    let base = poisson_small(rng, lambda1.min(lambda2));
    let extra = poisson_small(rng, (lambda1 - lambda2).abs());
    Ok(if lambda1 <= lambda2 {
        (base, base + extra)
    } else {
        (base + extra, base)
    })
}

/// Where the first Poisson bin M sits relative to the probe k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// M ≤ k.
    Below,
    /// M = k + 1.
    Aligned,
    /// M ≥ k + 2.
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Root,
    TypeL,
    TypeR,
}

impl ProbeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeKind::Root => "root",
            ProbeKind::TypeL => "typeL",
            ProbeKind::TypeR => "typeR",
        }
    }
}

/// What the harness couples around.
#[derive(Debug, Clone)]
pub enum ProbeContext {
    /// The uniform root k₀ = ⌈n U₀⌉ with age U₀^χ. `None` draws a fresh U₀
    /// for every replicate.
    Root { u0: Option<f64> },
    /// The next probe of a prepared exploration state, with the age â of the
    /// matching point-tree node.
    General { state: ExplorationState, age: f64 },
}

/// Means of the four aligned vectors; entry i refers to vertex `start + i`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CouplingMeans {
    pub probe: usize,
    pub first_bin: usize,
    pub start: usize,
    pub zeta: f64,
    pub p: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl CouplingMeans {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn boundary(&self) -> Boundary {
        let (m, k) = (self.first_bin, self.probe);
        if m <= k {
            Boundary::Below
        } else if m == k + 1 {
            Boundary::Aligned
        } else {
            Boundary::Above
        }
    }

    /// Checks the zero patterns of the boundary columns: for M ≥ k + 2 the
    /// indices k+1..M−1 have λ = 0 < P̂, and for M ≤ k the indices M..k have
    /// P = P̂ = 0 < λ (λ_M may vanish only if â sits exactly on a bin edge).
    pub fn check_structure(&self) -> std::result::Result<(), String> {
        let (m, k) = (self.first_bin, self.probe);
        let at = |v: usize| v - self.start;
        for (i, ((&p, &ph), &l)) in self.p.iter().zip(&self.p_hat).zip(&self.lambda).enumerate() {
            if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&ph) || !(l >= 0.0) {
                return Err(format!("means out of range at vertex {}", self.start + i));
            }
        }
        match self.boundary() {
            Boundary::Above => {
                for v in (k + 1)..m {
                    if self.lambda[at(v)] != 0.0 || !(self.p_hat[at(v)] > 0.0) {
                        return Err(format!("vertex {v}: expected λ = 0 < P̂"));
                    }
                }
            }
            Boundary::Below => {
                for v in m..=k {
                    let i = at(v);
                    if self.p[i] != 0.0 || self.p_hat[i] != 0.0 {
                        return Err(format!("vertex {v}: expected P = P̂ = 0"));
                    }
                    if v > m && !(self.lambda[i] > 0.0) {
                        return Err(format!("vertex {v}: expected λ > 0"));
                    }
                }
            }
            Boundary::Aligned => {}
        }
        Ok(())
    }
}

/// ζ a^{−1/μ} (hi^{1/μ} − lo^{1/μ}) written with bin edges (j/n)^χ, for
/// which (·)^{1/μ} = (j/n)^{1−χ}.
fn bin_mass(zeta: f64, age_pow: f64, lo_pow: f64, hi_pow: f64) -> f64 {
    (zeta / age_pow * (hi_pow - lo_pow)).max(0.0)
}

fn p_hat(k: usize, h: usize, zeta: f64, mu: f64, chi: f64) -> f64 {
    ((k as f64 / h as f64).powf(chi) * zeta / ((mu + 1.0) * k as f64)).min(1.0)
}

/// 1 − Beta(a, b); Beta(b, 1) draws for a = 1 need a single uniform.
fn one_minus_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    if a == 1.0 {
        rng::unif_open0(rng).powf(1.0 / b)
    } else {
        1.0 - rng::beta(rng, a, b)
    }
}

/// Root-case means for the root k₀ = ⌈n u₀⌉. Only the urn variables with
/// index ≥ k₀ are drawn; the first Poisson bin is stretched down to â₀.
pub fn root_means<R: Rng + ?Sized>(seq: &FitnessSequence, u0: f64, out: &mut CouplingMeans, rng: &mut R) -> Result<()> {
    if !(u0 > 0.0 && u0 <= 1.0) {
        return Err(invalid("u0", format!("must lie in (0, 1], got {u0}")));
    }
    let n = seq.n();
    let (mu, chi) = (seq.mu(), seq.chi());
    let k0 = ((n as f64 * u0).ceil() as usize).clamp(1, n);
    let zeta = rng::gamma(rng, seq.x(k0));
    let b_k0 = if k0 == 1 {
        1.0
    } else {
        let zt = rng::gamma(rng, seq.t(k0 - 1) + k0 as f64 - 1.0);
        if zeta + zt > 0.0 { zeta / (zeta + zt) } else { 0.0 }
    };
    out.probe = k0;
    out.first_bin = k0 + 1;
    out.start = k0 + 1;
    out.zeta = zeta;
    out.p.clear();
    out.p_hat.clear();
    out.lambda.clear();
    let nf = n as f64;
    let age_pow = u0.powf(1.0 - chi);
    let mut lo_pow = age_pow;
    let mut ratio = 1.0;
    for k in (k0 + 1)..=n {
        if k > k0 + 1 {
            let j = k - 1;
            ratio *= one_minus_beta(rng, seq.x(j), seq.t(j - 1) + j as f64 - 1.0);
        }
        let hi_pow = (k as f64 / nf).powf(1.0 - chi);
        out.p.push((b_k0 * ratio).min(1.0));
        out.p_hat.push(p_hat(k0, k, zeta, mu, chi));
        out.lambda.push(bin_mass(zeta, age_pow, lo_pow, hi_pow));
        lo_pow = hi_pow;
    }
    Ok(())
}

/// General-probe means from the conditional urn family of `state` and the
/// age `age` of the matching point-tree node.
pub fn general_means<R: Rng + ?Sized>(
    seq: &FitnessSequence,
    state: &ExplorationState,
    age: f64,
    out: &mut CouplingMeans,
    rng: &mut R,
) -> Result<()> {
    if !(age > 0.0 && age <= 1.0) {
        return Err(invalid("age", format!("must lie in (0, 1], got {age}")));
    }
    let cond = conditional_urn_state(seq, state, rng)?;
    let k = cond.probe().ok_or_else(|| invalid("state", "no active vertex to probe"))?;
    let n = seq.n();
    let (mu, chi) = (seq.mu(), seq.chi());
    let zeta = cond.z(k);
    let m = bin_label(age, n, chi);
    let start = m.min(k + 1);
    out.probe = k;
    out.first_bin = m;
    out.start = start;
    out.zeta = zeta;
    out.p.clear();
    out.p_hat.clear();
    out.lambda.clear();
    let nf = n as f64;
    let age_pow = age.powf(1.0 / mu);
    for h in start..=n {
        let (p, ph) = if h <= k {
            (0.0, 0.0)
        } else {
            let p = if cond.is_neutral(h) {
                (cond.s(k) / cond.s(h - 1) * cond.beta(k)).min(1.0)
            } else {
                0.0
            };
            (p, p_hat(k, h, zeta, mu, chi))
        };
        let lambda = if h < m {
            0.0
        } else {
            let hi = (h as f64 / nf).powf(1.0 - chi);
            let lo = if h == m { age_pow } else { ((h - 1) as f64 / nf).powf(1.0 - chi) };
            bin_mass(zeta, age_pow, lo, hi)
        };
        out.p.push(p);
        out.p_hat.push(ph);
        out.lambda.push(lambda);
    }
    Ok(())
}

/// One realisation of the four vectors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoupledVectors {
    pub y: Vec<u64>,
    pub y_hat: Vec<u64>,
    pub v_hat: Vec<u64>,
    pub v: Vec<u64>,
}

impl CoupledVectors {
    /// Which links (Y–Ŷ, Ŷ–V̂, V̂–V) disagree somewhere, and whether Y ≠ V.
    pub fn failures(&self) -> ([bool; 3], bool) {
        let differs = |a: &[u64], b: &[u64]| a.iter().zip(b).any(|(x, y)| x != y);
        (
            [
                differs(&self.y, &self.y_hat),
                differs(&self.y_hat, &self.v_hat),
                differs(&self.v_hat, &self.v),
            ],
            differs(&self.y, &self.v),
        )
    }
}

/// Couples index by index: one uniform from `bern` for the Bernoulli pair,
/// the Poisson side from `pois`.
pub fn couple_vectors<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    means: &CouplingMeans,
    out: &mut CoupledVectors,
    bern: &mut R1,
    pois: &mut R2,
) {
    out.y.clear();
    out.y_hat.clear();
    out.v_hat.clear();
    out.v.clear();
    for i in 0..means.len() {
        let (p, q, l) = (means.p[i], means.p_hat[i], means.lambda[i]);
        let (y, yh) = couple_bernoulli_pair(p, q, rng::unif(bern));
        let vh = poisson_given_bernoulli(q, yh, pois);
        let v = poisson_given_poisson(q, l, vh, pois);
        out.y.push(y);
        out.y_hat.push(yh);
        out.v_hat.push(vh);
        out.v.push(v);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StageFailures {
    pub y_vs_y_hat: u64,
    pub y_hat_vs_v_hat: u64,
    pub v_hat_vs_v: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BoundaryCounts {
    pub below: u64,
    pub aligned: u64,
    pub above: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub n: usize,
    pub probe_kind: ProbeKind,
    pub replicates: u64,
    pub stage_failures: StageFailures,
    pub total_failures: u64,
    pub total_failure_rate: f64,
    pub boundary_case: BoundaryCounts,
    /// Replicates whose probe age exceeds (log log n)^{−χ}.
    pub old_probe_count: u64,
    /// Whether the sequence lies in the concentration event with α = 2/3;
    /// `None` when n is too small for the check.
    pub concentration_event: Option<bool>,
}

impl CouplingReport {
    pub fn stage_rates(&self) -> [f64; 3] {
        let r = self.replicates.max(1) as f64;
        let s = &self.stage_failures;
        [
            s.y_vs_y_hat as f64 / r,
            s.y_hat_vs_v_hat as f64 / r,
            s.v_hat_vs_v as f64 / r,
        ]
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serialises")
    }

    pub const CSV_HEADER: &'static str = "n,probe_kind,replicates,rate_y_vs_y_hat,rate_y_hat_vs_v_hat,rate_v_hat_vs_v,total_rate";

    pub fn csv_row(&self) -> String {
        let [a, b, c] = self.stage_rates();
        format!(
            "{},{},{},{a},{b},{c},{}",
            self.n,
            self.probe_kind.as_str(),
            self.replicates,
            self.total_failure_rate
        )
    }
}

/// Runs `replicates` independent couplings; replicate i draws its urn
/// variables, Bernoulli uniforms and Poisson variables from substreams
/// 3i, 3i + 1 and 3i + 2 of `seed`.
pub fn coupling_run(seq: &FitnessSequence, ctx: &ProbeContext, replicates: u64, seed: u64) -> Result<CouplingReport> {
    let n = seq.n();
    let chi = seq.chi();
    let kind = match ctx {
        ProbeContext::Root { u0 } => {
            if let Some(u) = u0 {
                if !(*u > 0.0 && *u <= 1.0) {
                    return Err(invalid("u0", format!("must lie in (0, 1], got {u}")));
                }
            }
            ProbeKind::Root
        }
        ProbeContext::General { state, age } => {
            if state.n() != n {
                return Err(invalid("state", format!("explores {} vertices, sequence has {n}", state.n())));
            }
            if !(*age > 0.0 && *age <= 1.0) {
                return Err(invalid("age", format!("must lie in (0, 1], got {age}")));
            }
            let probe = state.next_probe().ok_or_else(|| invalid("state", "no active vertex to probe"))?;
            match state.vertex_type(probe) {
                Some(VertexType::L) => ProbeKind::TypeL,
                Some(VertexType::R) => ProbeKind::TypeR,
                _ => ProbeKind::Root,
            }
        }
    };
    let old_threshold = if n >= 16 {
        (n as f64).ln().ln().powf(-chi)
    } else {
        0.0
    };
    let concentration_event = check_concentration_event(seq, 2.0 / 3.0, default_phi(n, chi)).ok();

    let mut means = CouplingMeans::default();
    let mut vectors = CoupledVectors::default();
    let mut stages = StageFailures::default();
    let mut boundary = BoundaryCounts::default();
    let (mut total, mut old) = (0u64, 0u64);
    for i in 0..replicates {
        let mut urn = substream(seed, 3 * i);
        let mut bern = substream(seed, 3 * i + 1);
        let mut pois = substream(seed, 3 * i + 2);
        let age = match ctx {
            ProbeContext::Root { u0 } => {
                let u = u0.unwrap_or_else(|| rng::unif_open0(&mut urn));
                root_means(seq, u, &mut means, &mut urn)?;
                u.powf(chi)
            }
            ProbeContext::General { state, age } => {
                general_means(seq, state, *age, &mut means, &mut urn)?;
                *age
            }
        };
        means.check_structure().map_err(|e| invalid("means", e))?;
        match means.boundary() {
            Boundary::Below => boundary.below += 1,
            Boundary::Aligned => boundary.aligned += 1,
            Boundary::Above => boundary.above += 1,
        }
        old += u64::from(age > old_threshold);
        couple_vectors(&means, &mut vectors, &mut bern, &mut pois);
        let (stage, fail) = vectors.failures();
        debug_assert!(!fail || stage.iter().any(|&s| s));
        if !fail {
            debug_assert_eq!(vectors.y.iter().sum::<u64>(), vectors.v.iter().sum::<u64>());
        }
        stages.y_vs_y_hat += u64::from(stage[0]);
        stages.y_hat_vs_v_hat += u64::from(stage[1]);
        stages.v_hat_vs_v += u64::from(stage[2]);
        total += u64::from(fail);
    }
    Ok(CouplingReport {
        n,
        probe_kind: kind,
        replicates,
        stage_failures: stages,
        total_failures: total,
        total_failure_rate: if replicates == 0 { 0.0 } else { total as f64 / replicates as f64 },
        boundary_case: boundary,
        old_probe_count: old,
        concentration_event,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitness::FitnessModel;
    use crate::generators::generate_sequential;
    use crate::exploration::advance_exploration;
    use crate::rng::from_seed;
    use proptest::prelude::*;

    fn unit_seq(n: usize) -> FitnessSequence {
        FitnessSequence::constant(&FitnessModel::point_mass(1.0, 1.0).unwrap(), n, 1.0).unwrap()
    }

    fn within(freq: f64, p: f64, draws: f64, sigmas: f64) -> bool {
        (freq - p).abs() <= sigmas * (p * (1.0 - p) / draws).sqrt() + 1e-12
    }

    #[test]
    fn bernoulli_pair_examples() {
        assert_eq!(couple_bernoulli_pair(0.2, 0.5, 0.3), (0, 1));
        let mut rng = from_seed(1);
        for _ in 0..1000 {
            let (a, b) = couple_bernoulli_pair(0.4, 0.4, rng::unif(&mut rng));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn bernoulli_pair_disagrees_on_the_gap() {
        let mut rng = from_seed(2);
        let draws = 1_000_000;
        let diff = (0..draws)
            .filter(|_| {
                let (a, b) = couple_bernoulli_pair(0.2, 0.5, rng::unif(&mut rng));
                a != b
            })
            .count();
        assert!(within(diff as f64 / draws as f64, 0.3, draws as f64, 4.0));
    }

    #[test]
    fn bernoulli_poisson_examples() {
        let mut rng = from_seed(3);
        for _ in 0..1000 {
            assert_eq!(couple_bernoulli_poisson(0.0, &mut rng), (0, 0));
        }
        let draws = 1_000_000;
        let (mut diff, mut b_sum, mut v_sum, mut v_sq) = (0u64, 0.0, 0.0, 0.0);
        for _ in 0..draws {
            let (b, v) = couple_bernoulli_poisson(0.1, &mut rng);
            diff += u64::from(b != v);
            b_sum += b as f64;
            v_sum += v as f64;
            v_sq += (v * v) as f64;
        }
        let d = draws as f64;
        let exact = 0.1 * (1.0 - (-0.1f64).exp());
        assert!(diff as f64 / d <= 0.01 + 4.0 * (0.01 * 0.99 / d).sqrt());
        assert!(within(diff as f64 / d, exact, d, 4.0));
        assert!(within(b_sum / d, 0.1, d, 4.0));
        assert!((v_sum / d - 0.1).abs() < 4.0 * (0.1 / d).sqrt());
        // Poisson second moment: λ + λ².
        assert!((v_sq / d - 0.11).abs() < 4.0 * ((0.1 + 7.0 * 0.01 + 6.0 * 0.001 + 0.0001 - 0.0121) / d).sqrt());
    }

    #[test]
    fn poisson_given_bernoulli_tail_law() {
        let q = 0.9;
        let mut rng = from_seed(4);
        let draws = 400_000;
        let mut counts = [0u64; 6];
        for _ in 0..draws {
            let v = poisson_given_bernoulli(q, 1, &mut rng);
            if v < 6 {
                counts[v as usize] += 1;
            }
        }
        let e = (-q as f64).exp();
        let pmf = |j: u64| e * q.powi(j as i32) / (1..=j).map(|i| i as f64).product::<f64>();
        let expect = [(e - 1.0 + q) / q, e, pmf(2) / q, pmf(3) / q, pmf(4) / q];
        for (j, p) in expect.iter().enumerate() {
            assert!(within(counts[j] as f64 / draws as f64, *p, draws as f64, 4.0), "j={j}");
        }
    }

    #[test]
    fn poisson_pair_examples() {
        let mut rng = from_seed(5);
        for _ in 0..1000 {
            let (a, b) = couple_poisson_pair(0.7, 0.7, &mut rng).unwrap();
            assert_eq!(a, b);
        }
        assert!(couple_poisson_pair(-0.1, 0.2, &mut rng).is_err());
        let draws = 1_000_000;
        let (mut diff, mut s1, mut s2, mut q1, mut q2) = (0u64, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..draws {
            let (a, b) = couple_poisson_pair(0.3, 0.5, &mut rng).unwrap();
            diff += u64::from(a != b);
            s1 += a as f64;
            s2 += b as f64;
            q1 += (a * a) as f64;
            q2 += (b * b) as f64;
        }
        let d = draws as f64;
        let exact = 1.0 - (-0.2f64).exp();
        assert!(within(diff as f64 / d, exact, d, 4.0));
        for (s, q, l) in [(s1, q1, 0.3), (s2, q2, 0.5)] {
            let (m, var) = (s / d, q / d - (s / d).powi(2));
            assert!((m - l).abs() < 4.0 * (l / d).sqrt());
            // Var of the sample variance of a Poisson is about (λ + 2λ²)/d.
            assert!((var - l).abs() < 4.0 * ((l + 2.0 * l * l) / d).sqrt());
        }
    }

    #[test]
    fn thinning_preserves_the_poisson_law() {
        let mut rng = from_seed(6);
        let draws = 400_000;
        let (mut s, mut diff) = (0.0, 0u64);
        for _ in 0..draws {
            let vh = poisson_small(&mut rng, 0.8);
            let v = poisson_given_poisson(0.8, 0.5, vh, &mut rng);
            s += v as f64;
            diff += u64::from(v != vh);
        }
        let d = draws as f64;
        assert!((s / d - 0.5).abs() < 4.0 * (0.5 / d).sqrt());
        assert!(within(diff as f64 / d, 1.0 - (-0.3f64).exp(), d, 4.0));
    }

    #[test]
    fn last_vertex_probe_is_empty() {
        let seq = unit_seq(50);
        let r = coupling_run(&seq, &ProbeContext::Root { u0: Some(1.0) }, 100, 7).unwrap();
        assert_eq!(r.total_failures, 0);
        assert_eq!(r.stage_failures, StageFailures::default());
        let mut means = CouplingMeans::default();
        root_means(&seq, 1.0, &mut means, &mut from_seed(1)).unwrap();
        assert!(means.is_empty());
    }

    #[test]
    fn root_lambda_integrates_the_intensity() {
        let seq = unit_seq(1000);
        let mut means = CouplingMeans::default();
        let u0 = 0.3217;
        root_means(&seq, u0, &mut means, &mut from_seed(8)).unwrap();
        let chi = seq.chi();
        let a0 = u0.powf(chi);
        let total: f64 = means.lambda.iter().sum();
        assert!((total - means.zeta * (a0.recip() - 1.0)).abs() < 1e-9 * total.max(1.0));
        assert_eq!(means.start, means.probe + 1);
        assert_eq!(means.len(), 1000 - means.probe);
    }

    #[test]
    fn root_means_match_the_neighbour_process() {
        // With the root fixed, E[P_{k→k0}] is the sequential edge probability.
        use crate::generators::sequential_edge_probability_exact;
        let seq = FitnessSequence::from_values(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 1.0).unwrap();
        let u0 = 0.4; // k0 = 3
        let reps = 200_000;
        let mut acc = vec![0.0; 3];
        let mut means = CouplingMeans::default();
        let mut rng = from_seed(9);
        for _ in 0..reps {
            root_means(&seq, u0, &mut means, &mut rng).unwrap();
            for (a, p) in acc.iter_mut().zip(&means.p) {
                *a += p;
            }
        }
        for (i, a) in acc.iter().enumerate() {
            let k = 4 + i;
            let exact = sequential_edge_probability_exact(&seq, 3, k).unwrap();
            assert!((a / reps as f64 - exact).abs() < 0.005, "k={k}");
        }
    }

    #[test]
    fn root_failure_rate_decays() {
        let mut last = 1.0;
        for n in [100usize, 1000, 10_000] {
            let r = coupling_run(&unit_seq(n), &ProbeContext::Root { u0: None }, 2000, 11).unwrap();
            let s: u64 = [r.stage_failures.y_vs_y_hat, r.stage_failures.y_hat_vs_v_hat, r.stage_failures.v_hat_vs_v]
                .iter()
                .sum();
            assert!(r.total_failures <= s);
            assert!(r.total_failure_rate < last, "n={n}: {}", r.total_failure_rate);
            last = r.total_failure_rate;
        }
    }

    #[test]
    fn general_probe_boundary_columns() {
        let seq = unit_seq(200);
        let tree = generate_sequential(&seq, &mut from_seed(12));
        let mut state = ExplorationState::new(200, 150).unwrap();
        state = advance_exploration(&state, &tree);
        let k = state.next_probe().unwrap();
        let chi = seq.chi();
        let mut means = CouplingMeans::default();
        // Age well above the bin of k: M ≥ k + 2.
        let older = ((k as f64 + 5.5) / 200.0).powf(chi).min(1.0);
        general_means(&seq, &state, older, &mut means, &mut from_seed(13)).unwrap();
        if k + 5 < 200 {
            assert_eq!(means.boundary(), Boundary::Above);
            assert_eq!(means.start, k + 1);
        }
        means.check_structure().unwrap();
        // Age well below: M ≤ k.
        let younger = ((k as f64 - 3.5).max(0.5) / 200.0).powf(chi);
        general_means(&seq, &state, younger, &mut means, &mut from_seed(13)).unwrap();
        assert_eq!(means.boundary(), Boundary::Below);
        assert_eq!(means.start, means.first_bin);
        means.check_structure().unwrap();
        let r = coupling_run(&seq, &ProbeContext::General { state, age: younger }, 200, 14).unwrap();
        assert_eq!(r.boundary_case.below, 200);
        assert!(r.total_failure_rate > 0.0);
    }

    #[test]
    fn inconsistent_context_is_rejected() {
        let state = ExplorationState::new(30, 4).unwrap();
        let err = coupling_run(&unit_seq(20), &ProbeContext::General { state, age: 0.5 }, 10, 1);
        assert!(err.is_err());
        assert!(coupling_run(&unit_seq(20), &ProbeContext::Root { u0: Some(0.0) }, 10, 1).is_err());
    }

    #[test]
    fn report_serialises() {
        let r = coupling_run(&unit_seq(100), &ProbeContext::Root { u0: None }, 50, 3).unwrap();
        let j = r.to_json();
        assert_eq!(j["n"], 100);
        assert_eq!(j["probe_kind"], "root");
        assert!(r.csv_row().starts_with("100,root,50,"));
        assert_eq!(r, coupling_run(&unit_seq(100), &ProbeContext::Root { u0: None }, 50, 3).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn coupled_vectors_respect_union_bound(seed in any::<u64>(), n in 2usize..400, u0 in 0.001f64..1.0) {
            let seq = unit_seq(n);
            let mut means = CouplingMeans::default();
            root_means(&seq, u0, &mut means, &mut from_seed(seed)).unwrap();
            prop_assert!(means.check_structure().is_ok());
            let mut v = CoupledVectors::default();
            couple_vectors(&means, &mut v, &mut from_seed(seed ^ 1), &mut from_seed(seed ^ 2));
            let (stages, fail) = v.failures();
            prop_assert!(!fail || stages.iter().any(|&s| s));
            if !fail {
                prop_assert_eq!(v.y.iter().sum::<u64>(), v.v.iter().sum::<u64>());
            }
            prop_assert!(v.y.iter().all(|&y| y <= 1) && v.y_hat.iter().all(|&y| y <= 1));
        }

        #[test]
        fn bernoulli_pair_gap(p in 0.0f64..=1.0, q in 0.0f64..=1.0, u in 0.0f64..1.0) {
            let (a, b) = couple_bernoulli_pair(p, q, u);
            prop_assert_eq!(a != b, (p.min(q)..p.max(q)).contains(&u));
        }
    }
}
