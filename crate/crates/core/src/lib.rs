//! Pullback numerics for random expanding circle maps.
//!
//! The crate builds, from a validated random perturbation of an expanding
//! circle map driven by an irrational rotation, the noise-dependent conjugacy
//! with the folding map `x ↦ kx`, the induced random Markov partition and its
//! symbolic coding, and the block-spliced symbol sequences whose orbits have
//! non-convergent Birkhoff averages. Every orbit point used for statistics is
//! produced by composing contracting inverse branches (a pullback), never by
//! long forward iteration.

pub mod circle;
pub mod conjugacy;
pub mod error;
pub mod historic;
pub mod random_system;
pub mod symbolic;

pub use circle::{circle_distance, hausdorff_distance, CircleInterval, CirclePoint, LiftValue};
pub use conjugacy::{ConjugacyGrid, InverseBranchSolver, Pullback};
pub use error::{Error, Result};
pub use random_system::{
    validate_hypotheses, BaseDynamics, FamilyParams, NoisePoint, RandomMapFamily, ValidationGrid,
    ValidationReport,
};
pub use symbolic::{SymbolStream, SymbolWord};
