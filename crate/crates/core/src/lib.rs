//! Variational distance between Markov models of character evolution on
//! phylogenetic trees: tree handling, random tree generators, symmetric
//! substitution models, exact and sampled leaf-pattern distributions, and
//! lower-bound certificates from close leaf pairs.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below are the usual choice.

pub mod discriminator;
pub mod error;
pub mod experiments;
pub mod models;
pub mod pattern_dist;
pub mod random_trees;
pub mod rng;
pub mod scalar;
pub mod tree;
pub mod vardist;

pub use error::{Error, Result};
pub use models::{Family, Scale, TransitionMechanism};
pub use pattern_dist::{Pattern, PatternDistribution};
pub use scalar::Real;
pub use tree::{parse_newick, write_newick, Tree};

pub type Mechanism64 = TransitionMechanism<f64>;
pub type Mechanism32 = TransitionMechanism<f32>;
pub type Distribution64 = PatternDistribution<f64>;
pub type Distribution32 = PatternDistribution<f32>;
pub type Certificate64 = discriminator::Certificate<f64>;
pub type Estimate64 = vardist::VardistEstimate<f64>;

/// Library version, echoed into experiment provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
