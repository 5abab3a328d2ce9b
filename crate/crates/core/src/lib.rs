//! Simulation and verification toolkit for linear preferential attachment
//! trees with additive random fitness.
//!
//! Vertex m of the (x, n)-sequential tree attaches to an earlier vertex k with
//! probability proportional to W_{k,m-1} + x_k, its in-degree plus fitness.
//! The crate provides the sequential, Pólya-urn and embellished-urn
//! constructions ([`generators`]), the breadth-first exploration machinery
//! ([`exploration`]), the π-Pólya point tree and its finite-n analogue
//! ([`pointtree`]), closed-form degree laws and moment identities
//! ([`analytics`]), Bernoulli/Poisson couplings ([`couplings`]), and the
//! shape statistics used to compare them ([`stats`]).

pub mod analytics;
pub mod couplings;
pub mod error;
pub mod exploration;
pub mod fitness;
pub mod generators;
pub mod pointtree;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use fitness::{FitnessKind, FitnessModel, FitnessSequence};
pub use generators::{Embellishment, PATree, UrnState};
