//! Continual-learning experiments organized by an assumption lattice.
//!
//! Settings form a partial order over five assumption axes; a method written
//! for one setting runs unchanged on every descendant. The crate provides the
//! lattice ([`taxonomy`]), nonstationary environments ([`envsim`]), numeric
//! learners ([`learners`]), the shipped methods ([`methods`]), the train/test
//! protocol and metrics ([`evaluation`]) and experiment plumbing
//! ([`harness`]).

pub mod envsim;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod learners;
pub mod methods;
pub mod rng;
pub mod taxonomy;

pub use error::{Error, Result};
