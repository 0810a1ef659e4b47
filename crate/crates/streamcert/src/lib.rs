//! Robustness certificates for streaming classifiers that use a fixed-size
//! sliding window, together with the budget-constrained attacks and exact
//! brute-force oracles used to validate them.
//!
//! The library is organised around a small pipeline:
//!
//! * [`stream`] — labeled streams, window extraction, CSV ingestion and
//!   synthetic stream generation,
//! * [`model`] — window classifiers (linear / one-hidden-layer MLP) with
//!   analytic input gradients and a minimal SGD trainer,
//! * [`smoothing`] — smoothing distributions, their total-variation bound
//!   `psi`, noise sampling and the concave-envelope construction,
//! * [`certificate`] — the `w * psi(eps)` performance bound and the static
//!   single-instance comparison bound,
//! * [`adversary`] — greedy streaming attackers under an average perturbation
//!   budget, with independently auditable traces,
//! * [`oracle`] — exact enumeration and numerical-integration oracles used to
//!   verify the bounds and the special functions,
//! * [`harness`] — experiment orchestration: Monte Carlo smoothed evaluation,
//!   certificate/attack sweeps and result emission.

pub mod adversary;
pub mod certificate;
pub mod error;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod smoothing;
pub mod stream;

pub(crate) mod vecops;

pub use error::{Error, Result};
