//! Seeding and the small set of samplers shared by every module.
//!
//! Replicate `i` of an experiment seeded with `seed` draws from
//! [`substream`]`(seed, i)`: a ChaCha8 generator keyed by `seed` and
//! positioned on stream `i`. Streams are disjoint, so per-replicate results do
//! not depend on scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

pub type SimRng = ChaCha8Rng;

/// Generator for a single (non-replicated) call.
pub fn from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// The `split(seed, i)` substream used for replicate `i`.
pub fn substream(seed: u64, i: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

/// Uniform on `[0, 1)`.
#[inline]
pub fn unif<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Uniform on `(0, 1]`, safe to take logs or negative powers of.
#[inline]
pub fn unif_open0<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Gamma(shape, 1). A non-positive shape yields 0, the degenerate limit.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape <= 0.0 {
        return 0.0;
    }
    Gamma::new(shape, 1.0)
        .expect("positive finite gamma shape")
        .sample(rng)
}

/// Beta(a, b) built from two gammas.
pub fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let x = gamma(rng, a);
    let y = gamma(rng, b);
    if x + y == 0.0 {
        0.0
    } else {
        x / (x + y)
    }
}

/// Largest Poisson mean sampled exactly; above it the mean is returned rounded.
pub const POISSON_EXACT_MAX: f64 = 1e15;

/// Poisson(lambda) as an integer count. Means above [`POISSON_EXACT_MAX`]
/// only arise for ages below 1e-15 and are returned deterministically.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    if lambda > POISSON_EXACT_MAX {
        return if lambda >= u64::MAX as f64 {
            u64::MAX
        } else {
            lambda.round() as u64
        };
    }
    let x: f64 = Poisson::new(lambda).expect("finite positive mean").sample(rng);
    x as u64
}
