//! Exhaustive Alpern towers with partition-independent bases, built and
//! verified in exact rational arithmetic over finite-rank column systems.
//!
//! Given a valid column system and a height parameter N, [`build_tower`]
//! selects base rungs forming a tower of heights {N, N+1} whose base, and
//! a companion marked set A, are exactly independent of the cell partition,
//! with the union filling exactly 1/N of the space. Everything is checked
//! twice: a combinatorial verifier recomputes the contracts from the rung
//! sets, and a grid oracle re-derives them by brute force from an interval
//! permutation model of the transformation.

pub mod construction;
pub mod error;
pub mod ingest;
pub mod model;
pub mod ratio;
pub mod report;
pub mod richness;
pub mod verify;

pub use error::{Error, Result};
pub use ratio::Ratio;
