//! Closed-form quantities: limiting degree laws and their tail constants,
//! moments of the partial products S_{k,n}, the conditional-mean identity for
//! in-degrees, and the exact finite-n degree law of a uniform vertex when all
//! fitness values after the first are equal.
//!
//! Gamma ratios are always formed as differences of `lgamma`.

use libm::lgamma;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::fitness::{FitnessModel, FitnessSequence};
use crate::generators::UrnState;
use crate::rng;

/// Gauss-Legendre order used for the uniform-interval kind.
pub const QUADRATURE_ORDER: usize = 64;

/// p_π(k) = (μ+1) ∫ Γ(x+k−1)Γ(x+μ+1) / (Γ(x)Γ(x+μ+k+1)) dπ(x), the limiting
/// degree law of a uniformly chosen vertex.
pub fn degree_pmf_root(model: &FitnessModel, k: u64) -> Result<f64> {
    degree_pmf_root_with_order(model, k, QUADRATURE_ORDER)
}

pub fn degree_pmf_root_with_order(model: &FitnessModel, k: u64, order: usize) -> Result<f64> {
    if k < 1 {
        return Err(invalid("k", "root degree is at least 1"));
    }
    let mu = model.mu();
    let k = k as f64;
    let f = |x: f64| (lgamma(x + k - 1.0) + lgamma(x + mu + 1.0) - lgamma(x) - lgamma(x + mu + k + 1.0)).exp();
    Ok((mu + 1.0) * model.integrate(order, f))
}

/// q_π(k) = μ(μ+1)(k−1) ∫ Γ(x+k−1)Γ(x+μ+1) / (Γ(x+1)Γ(x+μ+k+1)) dπ(x), the
/// limiting degree law of the parent of a uniform vertex.
pub fn degree_pmf_ancestor(model: &FitnessModel, k: u64) -> Result<f64> {
    degree_pmf_ancestor_with_order(model, k, QUADRATURE_ORDER)
}

pub fn degree_pmf_ancestor_with_order(model: &FitnessModel, k: u64, order: usize) -> Result<f64> {
    if k < 2 {
        return Err(invalid("k", "ancestor degree is at least 2"));
    }
    let mu = model.mu();
    let k = k as f64;
    let f = |x: f64| (lgamma(x + k - 1.0) + lgamma(x + mu + 1.0) - lgamma(x + 1.0) - lgamma(x + mu + k + 1.0)).exp();
    Ok(mu * (mu + 1.0) * (k - 1.0) * model.integrate(order, f))
}

/// C_π = (μ+1) ∫ Γ(x+μ+1)/Γ(x) dπ(x), so that p_π(k) ~ C_π k^{−(μ+2)}.
pub fn tail_constant_root(model: &FitnessModel) -> f64 {
    let mu = model.mu();
    (mu + 1.0) * model.integrate(QUADRATURE_ORDER, |x| (lgamma(x + mu + 1.0) - lgamma(x)).exp())
}

/// μ(μ+1) ∫ Γ(x+μ+1)/Γ(x+1) dπ(x), so that q_π(k) ~ C k^{−(μ+1)}.
pub fn tail_constant_ancestor(model: &FitnessModel) -> f64 {
    let mu = model.mu();
    mu * (mu + 1.0) * model.integrate(QUADRATURE_ORDER, |x| (lgamma(x + mu + 1.0) - lgamma(x + 1.0)).exp())
}

/// A degree law tabulated on 1..=k_max with its power-law tail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmfTable {
    pub k_max: u64,
    /// `values[k-1]` = p(k).
    pub values: Vec<f64>,
    pub tail_constant: f64,
    pub tail_exponent: f64,
}

impl PmfTable {
    pub fn root(model: &FitnessModel, k_max: u64) -> Result<Self> {
        let values = (1..=k_max).map(|k| degree_pmf_root(model, k)).collect::<Result<_>>()?;
        Ok(Self {
            k_max,
            values,
            tail_constant: tail_constant_root(model),
            tail_exponent: model.mu() + 2.0,
        })
    }

    /// Entry 1 is zero: an ancestor has degree at least 2.
    pub fn ancestor(model: &FitnessModel, k_max: u64) -> Result<Self> {
        let mut values = vec![0.0];
        for k in 2..=k_max {
            values.push(degree_pmf_ancestor(model, k)?);
        }
        Ok(Self {
            k_max,
            values,
            tail_constant: tail_constant_ancestor(model),
            tail_exponent: model.mu() + 1.0,
        })
    }

    /// p(k), zero outside 1..=k_max.
    pub fn get(&self, k: u64) -> f64 {
        if k >= 1 && k <= self.k_max {
            self.values[k as usize - 1]
        } else {
            0.0
        }
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// C ∫_{k_max}^∞ k^{−e} dk, the power-law estimate of the mass beyond k_max.
    pub fn tail_estimate(&self) -> f64 {
        let e = self.tail_exponent;
        self.tail_constant * (self.k_max as f64).powf(1.0 - e) / (e - 1.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# tail_constant={},tail_exponent={}\nk,p\n",
            self.tail_constant, self.tail_exponent
        );
        for (i, p) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, p));
        }
        out
    }
}

/// E[S_{k,n}^p] = Π_{h<p} (T_k+k+h)/(T_n+n−1+h) · Π_{h<p} Π_{i=k+1}^{n−1} (1 + 1/(T_i+i−1+h)).
pub fn s_moment_exact(seq: &FitnessSequence, k: usize, p: u32) -> Result<f64> {
    let n = seq.n();
    if k < 1 || k > n {
        return Err(invalid("k", format!("must lie in [1, {n}], got {k}")));
    }
    if p < 1 {
        return Err(invalid("p", "moment order must be at least 1"));
    }
    if k == n {
        return Ok(1.0);
    }
    let mut log = 0.0;
    for h in 0..p {
        let h = h as f64;
        log += (seq.t(k) + k as f64 + h).ln() - (seq.t(n) + n as f64 - 1.0 + h).ln();
        for i in (k + 1)..n {
            log += (1.0 / (seq.t(i) + i as f64 - 1.0 + h)).ln_1p();
        }
    }
    Ok(log.exp())
}

/// E[W_{k,m} + x_k | W_{k,l} = w] = (w + x_k) Π_{j=l}^{m−1} (T_j+j)/(T_j+j−1).
///
/// The arrival of vertex 2 is deterministic; its factor is applied as
/// +1 directly, which also covers x_1 = 0.
pub fn mori_conditional_mean(seq: &FitnessSequence, k: usize, l: usize, m: usize, w: u64) -> Result<f64> {
    let n = seq.n();
    if !(1 <= k && k <= l && l <= m && m <= n) {
        return Err(invalid("indices", format!("need 1 ≤ k ≤ l ≤ m ≤ {n}, got k={k}, l={l}, m={m}")));
    }
    let mut value = w as f64 + seq.x(k);
    let mut start = l;
    if l == 1 && m >= 2 {
        value += 1.0;
        start = 2;
    }
    for j in start..m {
        let a = seq.t(j) + j as f64;
        value *= a / (a - 1.0);
    }
    Ok(value)
}

/// Deviations of S_{k,n} from (k/n)^χ over k ∈ [⌈n^χ⌉, n].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SDeviationProfile {
    pub n: usize,
    pub k_min: usize,
    pub replicates: usize,
    /// Replicate average of max_k |S_{k,n} − (k/n)^χ|.
    pub max_abs_dev: f64,
    /// `per_k_dev[k - k_min]`: replicate average of |S_{k,n} − (k/n)^χ|.
    pub per_k_dev: Vec<f64>,
}

pub fn s_deviation_profile(seq: &FitnessSequence, replicates: usize, seed: u64) -> Result<SDeviationProfile> {
    if replicates < 1 {
        return Err(invalid("replicates", "must be at least 1"));
    }
    let n = seq.n();
    let chi = seq.chi();
    let k_min = ((n as f64).powf(chi).ceil() as usize).clamp(1, n);
    let target: Vec<f64> = (k_min..=n).map(|k| (k as f64 / n as f64).powf(chi)).collect();
    let mut per_k = vec![0.0; target.len()];
    let mut max_sum = 0.0;
    for r in 0..replicates {
        let urn = UrnState::sample(seq, &mut rng::substream(seed, r as u64));
        let mut worst = 0.0f64;
        for (i, t) in target.iter().enumerate() {
            let d = (urn.s(k_min + i) - t).abs();
            per_k[i] += d;
            worst = worst.max(d);
        }
        max_sum += worst;
    }
    let reps = replicates as f64;
    per_k.iter_mut().for_each(|d| *d /= reps);
    Ok(SDeviationProfile {
        n,
        k_min,
        replicates,
        max_abs_dev: max_sum / reps,
        per_k_dev: per_k,
    })
}

/// Exact law of the degree of a uniform vertex of the n-vertex tree with
/// x_1 given and x_j = `value` for j ≥ 2.
///
/// Tracks E[N_w(m)], the expected number of vertices 2..m of in-degree w,
/// through the linear recursion
/// E[N_w(m+1)] = E[N_w(m)](1 − (w+v)/Z_m) + E[N_{w−1}(m)](w−1+v)/Z_m + 1[w=0]
/// with Z_m = x_1 + (m−1)(v+1), and the in-degree law of vertex 1 alongside.
/// Returns P(D = d) for d = 0..=d_max; the mass of larger degrees is the
/// complement of the sum.
pub fn root_degree_law_exact(n: usize, x1: f64, value: f64, d_max: usize) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(invalid("n", "must be at least 1"));
    }
    if !(value > 0.0) || !(x1 > -1.0) {
        return Err(invalid("fitness", "need value > 0 and x1 > -1"));
    }
    let mut law = vec![0.0; d_max + 1];
    if n == 1 {
        law[0] = 1.0;
        return Ok(law);
    }
    let cap = d_max + 1;
    // Index cap is an absorbing "cap or more" bucket.
    let mut counts = vec![0.0; cap + 1];
    let mut first = vec![0.0; cap + 1];
    counts[0] = 1.0;
    first[1.min(cap)] = 1.0;
    let mut hi = 1usize;
    for m in 2..n {
        let z = x1 + (m as f64 - 1.0) * (value + 1.0);
        for w in (0..=hi.min(cap - 1)).rev() {
            let flow = counts[w] * (w as f64 + value) / z;
            counts[w] -= flow;
            counts[w + 1] += flow;
            let flow = first[w] * (w as f64 + x1) / z;
            first[w] -= flow;
            first[w + 1] += flow;
        }
        counts[0] += 1.0;
        hi = (hi + 1).min(cap);
    }
    let nf = n as f64;
    for (d, p) in law.iter_mut().enumerate() {
        let others = if d >= 1 { counts[d - 1] } else { 0.0 };
        *p = ((others + first[d]) / nf).max(0.0);
    }
    Ok(law)
}
