//! Fitness distributions π, the root attractiveness x₁, and realised fitness
//! sequences with their prefix sums T_m.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Tolerance for the discrete probabilities summing to one.
const PROB_SUM_TOL: f64 = 1e-12;

/// The shipped families of fitness laws. All have bounded support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum FitnessKind {
    PointMass { value: f64 },
    UniformInterval { lo: f64, hi: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

/// JSON form of a model: `{"kind": ..., "params": {...}, "x1": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: FitnessKind,
    pub x1: f64,
}

/// A validated fitness law π with its mean μ, essential supremum κ and the
/// root attractiveness x₁.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessModel {
    kind: FitnessKind,
    mu: f64,
    kappa: Option<f64>,
    x1: f64,
}

impl FitnessModel {
    pub fn new(kind: FitnessKind, x1: f64) -> Result<Self> {
        if !(x1 > -1.0) || !x1.is_finite() {
            return Err(invalid("x1", format!("must be finite and > -1, got {x1}")));
        }
        let (mu, kappa) = match &kind {
            FitnessKind::PointMass { value } => {
                if !(*value > 0.0) || !value.is_finite() {
                    return Err(invalid("value", format!("point mass must be > 0, got {value}")));
                }
                (*value, *value)
            }
            FitnessKind::UniformInterval { lo, hi } => {
                if !(*lo > 0.0) || !(hi > lo) || !hi.is_finite() {
                    return Err(invalid("lo/hi", format!("need 0 < lo < hi, got ({lo}, {hi})")));
                }
                (0.5 * (lo + hi), *hi)
            }
            FitnessKind::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(invalid("values/probs", "must be non-empty and of equal length"));
                }
                if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(invalid("values", "all support points must be > 0"));
                }
                if probs.iter().any(|p| !(*p >= 0.0)) {
                    return Err(invalid("probs", "probabilities must be non-negative"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > PROB_SUM_TOL {
                    return Err(invalid("probs", format!("must sum to 1, got {total}")));
                }
                let mean = values.iter().zip(probs).map(|(v, p)| v * p).sum();
                let sup = values
                    .iter()
                    .zip(probs)
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(v, _)| *v)
                    .fold(f64::MIN, f64::max);
                (mean, sup)
            }
        };
        Ok(Self {
            kind,
            mu,
            kappa: Some(kappa),
            x1,
        })
    }

    pub fn point_mass(value: f64, x1: f64) -> Result<Self> {
        Self::new(FitnessKind::PointMass { value }, x1)
    }

    pub fn uniform(lo: f64, hi: f64, x1: f64) -> Result<Self> {
        Self::new(FitnessKind::UniformInterval { lo, hi }, x1)
    }

    pub fn discrete(values: Vec<f64>, probs: Vec<f64>, x1: f64) -> Result<Self> {
        Self::new(FitnessKind::Discrete { values, probs }, x1)
    }

    pub fn from_spec(spec: ModelSpec) -> Result<Self> {
        Self::new(spec.kind, spec.x1)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.kind.clone(),
            x1: self.x1,
        }
    }

    pub fn kind(&self) -> &FitnessKind {
        &self.kind
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    /// χ = μ/(μ+1).
    pub fn chi(&self) -> f64 {
        chi(self.mu)
    }

    /// The point-mass value, if π is a point mass.
    pub fn point_mass_value(&self) -> Option<f64> {
        match self.kind {
            FitnessKind::PointMass { value } => Some(value),
            _ => None,
        }
    }

    /// One draw X ~ π.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            FitnessKind::PointMass { value } => *value,
            FitnessKind::UniformInterval { lo, hi } => lo + (hi - lo) * rng::unif(rng),
            FitnessKind::Discrete { values, probs } => {
                let u = rng::unif(rng);
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("non-empty support")
            }
        }
    }

    /// Integrates `f` against π: exact for point masses and discrete laws,
    /// Gauss-Legendre with `order` nodes for the uniform kind.
    pub fn integrate(&self, order: usize, f: impl Fn(f64) -> f64) -> f64 {
        match &self.kind {
            FitnessKind::PointMass { value } => f(*value),
            FitnessKind::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > 0.0)
                .map(|(v, p)| p * f(*v))
                .sum(),
            FitnessKind::UniformInterval { lo, hi } => {
                let (nodes, weights) = gauss_legendre(order);
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                // Density 1/(hi-lo) times the Jacobian half leaves weight/2.
                nodes
                    .iter()
                    .zip(&weights)
                    .map(|(t, w)| 0.5 * w * f(mid + half * t))
                    .sum()
            }
        }
    }
}

/// χ = μ/(μ+1).
pub fn chi(mu: f64) -> f64 {
    mu / (mu + 1.0)
}

/// Default φ(n) = ⌈n^χ⌉.
pub fn default_phi(n: usize, chi: f64) -> usize {
    ((n as f64).powf(chi).ceil() as usize).clamp(1, n.max(1))
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order.max(1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A realised sequence x = (x₁, …, x_n) with prefix sums T_m.
///
/// Indices are 1-based: `x(1)` is the root attractiveness and `t(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessSequence {
    x: Vec<f64>,
    t: Vec<f64>,
    mu: f64,
}

impl FitnessSequence {
    /// Builds a sequence from explicit values (`values[0]` is x₁). `mu` is the
    /// mean of the law the values are meant to come from.
    pub fn from_values(values: &[f64], mu: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("n", "sequence must contain at least the root"));
        }
        if !(values[0] > -1.0) {
            return Err(invalid("x1", format!("must be > -1, got {}", values[0])));
        }
        if let Some(bad) = values[1..].iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(invalid(
                "values",
                format!("x_{} = {} is not positive", bad + 2, values[bad + 1]),
            ));
        }
        let mut x = Vec::with_capacity(values.len() + 1);
        x.push(0.0);
        x.extend_from_slice(values);
        let mut t = Vec::with_capacity(x.len());
        let mut acc = 0.0;
        for v in &x {
            acc += v;
            t.push(acc);
        }
        Ok(Self { x, t, mu })
    }

    /// Sequence of length `n` with x₁ = model.x1 and every other entry equal
    /// to `value`. Only meaningful for point-mass models.
    pub fn constant(model: &FitnessModel, n: usize, value: f64) -> Result<Self> {
        if n < 1 {
            return Err(invalid("n", "must be at least 1"));
        }
        let mut v = vec![value; n];
        v[0] = model.x1();
        Self::from_values(&v, model.mu())
    }

    pub fn n(&self) -> usize {
        self.x.len() - 1
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn chi(&self) -> f64 {
        chi(self.mu)
    }

    /// x_j, 1 ≤ j ≤ n.
    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        self.x[j]
    }

    /// T_m = x₁ + … + x_m, 0 ≤ m ≤ n.
    #[inline]
    pub fn t(&self, m: usize) -> f64 {
        self.t[m]
    }

    /// Values x₁..x_n.
    pub fn values(&self) -> &[f64] {
        &self.x[1..]
    }

    /// Prefix sums T_0..T_n.
    pub fn prefix_sums(&self) -> &[f64] {
        &self.t
    }

    /// True when every weight is a non-negative integer, which enables the
    /// ball-list sequential generator.
    pub fn is_integral(&self) -> bool {
        self.x[1..].iter().all(|v| *v >= 0.0 && v.fract() == 0.0 && *v < 1e9)
    }

    /// CSV with header `index,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for (j, v) in self.values().iter().enumerate() {
            out.push_str(&format!("{},{}\n", j + 1, v));
        }
        out
    }
}

/// Draws x₂..x_n i.i.d. from π and sets x₁ = model.x1.
pub fn sample_fitness_sequence<R: Rng + ?Sized>(
    model: &FitnessModel,
    n: usize,
    rng: &mut R,
) -> Result<FitnessSequence> {
    if n < 1 {
        return Err(invalid("n", "must be at least 1"));
    }
    let mut v = Vec::with_capacity(n);
    v.push(model.x1());
    for _ in 1..n {
        v.push(model.sample(rng));
    }
    FitnessSequence::from_values(&v, model.mu())
}

/// Checks |Σ_{h=2..j} x_h − (j−1)μ| ≤ j^α for every j in [phi_n, n].
pub fn check_concentration_event(seq: &FitnessSequence, alpha: f64, phi_n: usize) -> Result<bool> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (1/2, 1), got {alpha}")));
    }
    let n = seq.n();
    if phi_n < 1 || phi_n > n {
        return Err(invalid("phi_n", format!("must lie in [1, {n}], got {phi_n}")));
    }
    let x1 = seq.x(1);
    Ok((phi_n..=n).all(|j| {
        let dev = seq.t(j) - x1 - (j as f64 - 1.0) * seq.mu();
        dev.abs() <= (j as f64).powf(alpha)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn model_constants() {
        let m = FitnessModel::point_mass(1.0, 1.0).unwrap();
        assert_eq!((m.mu(), m.kappa()), (1.0, Some(1.0)));
        let m = FitnessModel::uniform(0.5, 1.5, 0.0).unwrap();
        assert_eq!((m.mu(), m.kappa()), (1.0, Some(1.5)));
        let m = FitnessModel::discrete(vec![1.0, 3.0], vec![0.5, 0.5], 2.0).unwrap();
        assert_eq!((m.mu(), m.kappa()), (2.0, Some(3.0)));
    }

    #[test]
    fn invalid_models_name_the_field() {
        let e = FitnessModel::point_mass(0.0, 1.0).unwrap_err();
        assert!(matches!(e, Error::Invalid { field: "value", .. }));
        let e = FitnessModel::discrete(vec![1.0, 2.0], vec![0.5, 0.4], 0.0).unwrap_err();
        assert!(matches!(e, Error::Invalid { field: "probs", .. }));
        let e = FitnessModel::uniform(1.0, 1.0, 0.0).unwrap_err();
        assert!(matches!(e, Error::Invalid { field: "lo/hi", .. }));
        let e = FitnessModel::point_mass(1.0, -1.0).unwrap_err();
        assert!(matches!(e, Error::Invalid { field: "x1", .. }));
    }

    #[test]
    fn chi_values() {
        assert_eq!(chi(1.0), 0.5);
        assert!((chi(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((chi(0.25) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"kind":"uniform_interval","params":{"lo":0.5,"hi":1.5},"x1":0.0}"#;
        let m = FitnessModel::from_json(text).unwrap();
        assert_eq!(m.mu(), 1.0);
        let back = serde_json::to_string(&m.spec()).unwrap();
        assert_eq!(FitnessModel::from_json(&back).unwrap(), m);
        assert!(matches!(FitnessModel::from_json("{}"), Err(Error::Parse(_))));
    }

    #[test]
    fn point_mass_sequence() {
        let m = FitnessModel::point_mass(1.0, 0.0).unwrap();
        let s = sample_fitness_sequence(&m, 4, &mut rng::from_seed(3)).unwrap();
        assert_eq!(s.values(), &[0.0, 1.0, 1.0, 1.0]);
        assert_eq!(&s.prefix_sums()[1..], &[0.0, 1.0, 2.0, 3.0]);
        let one = sample_fitness_sequence(&m, 1, &mut rng::from_seed(3)).unwrap();
        assert_eq!(one.values(), &[0.0]);
        assert!(sample_fitness_sequence(&m, 0, &mut rng::from_seed(3)).is_err());
    }

    #[test]
    fn uniform_sample_mean_within_clt_band() {
        let m = FitnessModel::uniform(0.5, 1.5, 0.0).unwrap();
        let n = 10_000;
        let s = sample_fitness_sequence(&m, n, &mut rng::from_seed(11)).unwrap();
        let mean = (s.t(n) - s.x(1)) / (n - 1) as f64;
        let se = (1.0f64 / 12.0 / (n - 1) as f64).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn concentration_event_examples() {
        let m = FitnessModel::point_mass(1.0, 1.0).unwrap();
        let s = FitnessSequence::constant(&m, 100, 1.0).unwrap();
        assert!(check_concentration_event(&s, 0.6, 2).unwrap());
        let mut v = vec![3.0; 100];
        v[0] = 1.0;
        let bad = FitnessSequence::from_values(&v, 1.0).unwrap();
        assert!(!check_concentration_event(&bad, 0.6, 2).unwrap());
        // Only j = n is inspected when phi_n = n; 2·99 > 100^0.6 still fails.
        assert!(!check_concentration_event(&bad, 0.6, 100).unwrap());
        assert!(check_concentration_event(&s, 1.0, 2).is_err());
        assert!(check_concentration_event(&s, 0.6, 101).is_err());
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(64);
        let sum_w: f64 = w.iter().sum();
        assert!((sum_w - 2.0).abs() < 1e-13);
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m4 - 0.4).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn chi_in_unit_interval_and_monotone(a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
            prop_assert!(chi(a) > 0.0 && chi(a) < 1.0);
            if a < b { prop_assert!(chi(a) < chi(b)); }
        }

        #[test]
        fn point_mass_always_concentrated(v in 0.1f64..5.0, n in 2usize..300, alpha in 0.51f64..0.99, frac in 0.0f64..1.0) {
            let m = FitnessModel::point_mass(v, 0.5).unwrap();
            let s = FitnessSequence::constant(&m, n, v).unwrap();
            let phi = 1 + ((n - 1) as f64 * frac) as usize;
            prop_assert!(check_concentration_event(&s, alpha, phi).unwrap());
        }

        #[test]
        fn sampling_is_reproducible(seed in any::<u64>()) {
            let m = FitnessModel::uniform(0.5, 1.5, 0.3).unwrap();
            let a = sample_fitness_sequence(&m, 50, &mut rng::from_seed(seed)).unwrap();
            let b = sample_fitness_sequence(&m, 50, &mut rng::from_seed(seed)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
