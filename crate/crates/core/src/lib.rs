//! Explicit orbit equivalences between Bernoulli-type shifts over free groups.
//!
//! * [`free_group`]: reduced words, balls, coset representatives.
//! * [`config`]: lazily sampled, seed-deterministic configurations.
//! * [`network`]: rooted networks, balls, isomorphism, traversal.
//! * [`oe2`]: the edge-rewiring orbit equivalence over `F₂`.
//! * [`soe`]: the tree-contraction stable orbit equivalence onto `F_T`.
//! * [`statcheck`]: empirical tables and the statistical certification tests.

pub mod config;
pub mod error;
pub mod free_group;
mod memo;
pub mod network;
pub mod oe2;
pub mod soe;
pub mod statcheck;

pub use error::{Error, Result};
