//! Segment feedback models and the sigmoid helpers shared by the binary code.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sparse_dot;
use crate::mdp::Trajectory;
use crate::rng::NormalSource;

/// `μ(x) = 1 / (1 + e^{-x})`, evaluated without overflow for any finite `x`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `μ'(x) = 1 / (e^x + e^{-x} + 2)`.
pub fn sigmoid_deriv(x: f64) -> f64 {
    1.0 / (x.exp() + (-x).exp() + 2.0)
}

/// `μ'(x)` through the product form `μ(x)(1 - μ(x))`.
pub fn sigmoid_deriv_product(x: f64) -> f64 {
    let m = sigmoid(x);
    m * (1.0 - m)
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    Binary,
    Sum,
}

/// One observation per segment: `y_i ∈ {0,1}` (binary) or `R_i ∈ ℝ` (sum).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFeedback {
    pub kind: FeedbackKind,
    pub values: Vec<f64>,
}

impl SegmentFeedback {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn expect(&self, kind: FeedbackKind, num_segments: usize) -> Result<()> {
        if self.kind != kind {
            return Err(Error::DimensionMismatch(format!("expected {kind:?} feedback, got {:?}", self.kind)));
        }
        if self.values.len() != num_segments {
            return Err(Error::DimensionMismatch(format!(
                "feedback has {} values, expected m = {num_segments}",
                self.values.len()
            )));
        }
        Ok(())
    }
}

fn check_theta(traj: &Trajectory, theta_star: &DVector<f64>, num_segments: usize) -> Result<()> {
    if theta_star.len() != traj.num_states * traj.num_actions {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, expected |S||A| = {}",
            theta_star.len(),
            traj.num_states * traj.num_actions
        )));
    }
    if num_segments == 0 || !traj.horizon().is_multiple_of(num_segments) {
        return Err(Error::DimensionMismatch(format!("m = {num_segments} does not divide H = {}", traj.horizon())));
    }
    Ok(())
}

/// Segment `i` yields `y_i ~ Bernoulli(μ((φ^{τ_i})ᵀθ*))`, independently across segments.
pub fn gen_binary_feedback<R: Rng + ?Sized>(
    traj: &Trajectory,
    theta_star: &DVector<f64>,
    num_segments: usize,
    rng: &mut R,
) -> Result<SegmentFeedback> {
    check_theta(traj, theta_star, num_segments)?;
    let mut values = Vec::with_capacity(num_segments);
    for i in 1..=num_segments {
        let z = sparse_dot(&traj.segment_counts(num_segments, i)?, theta_star);
        let u: f64 = rng.random();
        values.push(if u < sigmoid(z) { 1.0 } else { 0.0 });
    }
    Ok(SegmentFeedback { kind: FeedbackKind::Binary, values })
}

/// Segment `i` yields `R_i = (φ^{τ_i})ᵀθ* + Σ_{t in segment i} ε_t` with
/// `ε_t` i.i.d. standard normal drawn from `noise`.
pub fn gen_sum_feedback<N: NormalSource + ?Sized>(
    traj: &Trajectory,
    theta_star: &DVector<f64>,
    num_segments: usize,
    noise: &mut N,
) -> Result<SegmentFeedback> {
    check_theta(traj, theta_star, num_segments)?;
    let mut values = Vec::with_capacity(num_segments);
    for i in 1..=num_segments {
        let mut r = 0.0;
        for h in traj.segment_range(num_segments, i)? {
            r += theta_star[traj.sa(h)] + noise.standard_normal();
        }
        values.push(r);
    }
    Ok(SegmentFeedback { kind: FeedbackKind::Sum, values })
}
