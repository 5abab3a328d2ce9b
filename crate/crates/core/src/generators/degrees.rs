//! Degrees of a uniformly chosen vertex and of its parent.
//!
//! [`uniform_vertex_degrees`] reads them off a generated tree. For point-mass
//! fitness the attachment denominators Z_i = T_i + i − 1 are deterministic, so
//! the in-degree of any fixed set of vertices is a Markov chain on its own.
//! [`PointMassDegreeSampler`] exploits this to draw the pair exactly without
//! building the tree: waiting times between hits have survival function
//! Π (Z_i − c)/Z_i, a ratio of gamma functions inverted by bisection, and the
//! parent of the root is reached by splitting the total weight into fitness
//! units and edge units (an edge unit leads to the parent of an earlier vertex).

use rand::Rng;

use super::PATree;
use crate::rng;

/// Degree D⁰ of a vertex and degree D¹ of the recipient of its outgoing edge
/// (`None` for vertex 1, which has no outgoing edge).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VertexDegrees {
    pub vertex: usize,
    pub degree: usize,
    pub parent_degree: Option<usize>,
}

/// D⁰ and D¹ of vertex `k0` in `tree`.
pub fn uniform_vertex_degrees(tree: &PATree, k0: usize) -> VertexDegrees {
    let parent = tree.parent(k0);
    VertexDegrees {
        vertex: k0,
        degree: tree.degree(k0),
        parent_degree: (parent >= 1).then(|| tree.degree(parent)),
    }
}

/// Exact sampler of [`VertexDegrees`] at a uniform vertex of the sequential
/// tree with x₁ given and x_i = `value` for i ≥ 2.
#[derive(Debug, Clone)]
pub struct PointMassDegreeSampler {
    n: usize,
    x1: f64,
    value: f64,
    /// Z_i = b (i + d).
    b: f64,
    d: f64,
}

impl PointMassDegreeSampler {
    pub fn new(n: usize, x1: f64, value: f64) -> Self {
        assert!(n >= 1 && x1 > -1.0 && value > 0.0);
        let b = value + 1.0;
        Self {
            n,
            x1,
            value,
            b,
            d: x1 / b - 1.0,
        }
    }

    /// Z_i = T_i + i − 1, the total weight seen by vertex i + 1.
    #[inline]
    fn z(&self, i: usize) -> f64 {
        self.x1 + (i as f64 - 1.0) * self.b
    }

    fn fitness(&self, v: usize) -> f64 {
        if v == 1 {
            self.x1
        } else {
            self.value
        }
    }

    /// ln Π_{i=s}^{t-1} (Z_i − c)/Z_i, requires Z_s > c.
    fn log_survival(&self, s: usize, t: usize, c: f64) -> f64 {
        let e = c / self.b;
        let (s, t) = (s as f64, t as f64);
        libm::lgamma(t + self.d - e) - libm::lgamma(t + self.d) - libm::lgamma(s + self.d - e)
            + libm::lgamma(s + self.d)
    }

    /// First vertex in (s, t_max] attaching to a tracked set of weight c, the
    /// tree being complete up to vertex s.
    fn next_hit<R: Rng + ?Sized>(&self, s: usize, c: f64, t_max: usize, rng: &mut R) -> Option<usize> {
        if s >= t_max {
            return None;
        }
        let zs = self.z(s);
        if zs - c <= 1e-12 * zs {
            return Some(s + 1);
        }
        let target = rng::unif_open0(rng).ln();
        if self.log_survival(s, t_max, c) >= target {
            return None;
        }
        // Invariant: survival(lo) ≥ V > survival(hi).
        let (mut lo, mut hi) = (s, t_max);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.log_survival(s, mid, c) >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi)
    }

    /// Runs the tracked in-degrees from time `s` (vertices 1..s present) to `t_end`.
    fn evolve<R: Rng + ?Sized>(&self, tracked: &mut [(usize, u64)], mut s: usize, t_end: usize, rng: &mut R) {
        loop {
            let weights = tracked.iter().map(|&(v, w)| w as f64 + self.fitness(v));
            let c: f64 = weights.clone().sum();
            let Some(t) = self.next_hit(s, c, t_end, rng) else {
                return;
            };
            let mut u = rng::unif(rng) * c;
            let mut pick = tracked.len() - 1;
            for (i, w) in weights.enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            tracked[pick].1 += 1;
            s = t;
        }
    }

    /// Parent p of vertex t together with W_{p, t-1}.
    fn parent_with_in_degree<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> (usize, u64) {
        let mut frames: Vec<usize> = Vec::new();
        let mut cur = t;
        let (mut p, mut w) = loop {
            if cur == 2 {
                break (1, 0);
            }
            let base = 1.0 + self.x1;
            let fit = (cur - 2) as f64 * self.value;
            let u = rng::unif(rng) * self.z(cur - 1);
            if u < base {
                let mut tr = [(1, 1)];
                self.evolve(&mut tr, 2, cur - 1, rng);
                break (1, tr[0].1);
            } else if u < base + fit {
                let j = (2 + ((u - base) / self.value) as usize).min(cur - 1);
                let mut tr = [(j, 0)];
                self.evolve(&mut tr, j, cur - 1, rng);
                break (j, tr[0].1);
            } else {
                let m = (3 + (u - base - fit) as usize).min(cur - 1);
                frames.push(cur);
                cur = m;
            }
        };
        while let Some(up) = frames.pop() {
            let mut tr = [(p, w + 1)];
            self.evolve(&mut tr, cur, up - 1, rng);
            (p, w) = (tr[0].0, tr[0].1);
            cur = up;
        }
        (p, w)
    }

    /// Degrees at a uniform vertex k₀ of a fresh tree on n vertices.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> VertexDegrees {
        let k0 = rng.random_range(1..=self.n);
        self.sample_at(k0, rng)
    }

    /// Degrees at the fixed vertex k₀.
    pub fn sample_at<R: Rng + ?Sized>(&self, k0: usize, rng: &mut R) -> VertexDegrees {
        if k0 == 1 {
            if self.n == 1 {
                return VertexDegrees {
                    vertex: 1,
                    degree: 0,
                    parent_degree: None,
                };
            }
            let mut tr = [(1, 1)];
            self.evolve(&mut tr, 2, self.n, rng);
            return VertexDegrees {
                vertex: 1,
                degree: tr[0].1 as usize,
                parent_degree: None,
            };
        }
        let (p, w) = self.parent_with_in_degree(k0, rng);
        let mut tr = [(k0, 0), (p, w + 1)];
        self.evolve(&mut tr, k0, self.n, rng);
        VertexDegrees {
            vertex: k0,
            degree: tr[0].1 as usize + 1,
            parent_degree: Some(tr[1].1 as usize + usize::from(p >= 2)),
        }
    }
}
