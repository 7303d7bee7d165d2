//! Episodic tabular reinforcement learning with segment-level reward feedback.
//!
//! Each episode of length `H` is split into `m` equal segments and the learner
//! only observes one signal per segment: either a Bernoulli outcome whose
//! success probability is the sigmoid of the segment's reward sum (binary
//! feedback) or the noisy reward sum itself (sum feedback).
//!
//! The crate is organised by role:
//!
//! - [`mdp`]: instances, simulation, visitation vectors, occupancy and planning.
//! - [`feedback`]: the two feedback models and the sigmoid helpers.
//! - [`logistic`]: penalised logistic MLE and its confidence-radius constants.
//! - [`binary`]: SegBiTS and SegBiTS-Tran (Thompson sampling on the MLE).
//! - [`design`]: E-optimal design over policies and the rounding step.
//! - [`sum`]: E-LinUCB and LinUCB-Tran (optimistic ridge regression).
//! - [`instances`]: builders for the experiment and lower-bound instances.
//! - [`harness`]: seeded regret experiments and their CSV/JSON outputs.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod binary;
pub mod design;
pub mod error;
pub mod feedback;
pub mod harness;
pub mod instances;
pub mod linalg;
pub mod logistic;
pub mod mdp;
pub mod rng;
pub mod sum;

pub use error::{Error, Result};
pub use mdp::{MdpSpec, Policy, Trajectory, Transition, VisitVector};
