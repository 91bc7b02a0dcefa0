//! Differentially private all-pairs shortest distances.
//!
//! Two mechanisms release a full distance matrix of a weighted graph whose
//! topology is public and whose edge weights are private:
//!
//! * [`unbounded`] works for arbitrary nonnegative weights. It releases noisy
//!   distances between a random hitting set plus noisy edge weights, and
//!   reconstructs every pair from those by post-processing.
//! * [`bounded`] assumes weights in `[0, A]` and recursively peels the graph
//!   into small-hop balls, gluing per-ball estimates together with a
//!   constrained shortest-path search.
//!
//! [`accountant`] calibrates and audits the noise of both, and [`harness`]
//! generates workloads and measures error against exact distances.

pub mod accountant;
pub mod bounded;
pub mod error;
pub mod graph;
pub mod harness;
pub mod randomness;
pub mod unbounded;
pub mod verify;

pub use error::{Error, Result};
