//! Sequential scene segmentation: per-class binary CRFs whose masks are
//! combined one class at a time, with a reinforcement-learned ordering of
//! which detector to run next.

pub mod error;
pub mod rng;
pub mod scene;
pub mod synthgen;
pub mod classifiers;
pub mod crf;
pub mod combiner;
pub mod metrics;
pub mod lspi;
pub mod mdp;
pub mod pipeline;
pub mod policies;
pub mod harness;

pub use error::{Error, Result};
