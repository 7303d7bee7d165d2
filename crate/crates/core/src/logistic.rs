//! Ridge-penalised logistic MLE over segment visit vectors, plus the
//! confidence-radius constants used by the binary-feedback learners.
//!
//! Identical segment features are aggregated: the dataset stores each distinct
//! visit vector once with its count of positive and negative labels. All sums
//! below are therefore weighted sums over distinct features, which is the same
//! objective as the per-observation sum.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{sigmoid_deriv, softplus};
use crate::linalg::{add_sparse_outer, cholesky, sparse_dot};

/// Global maximum of `μ'`, attained at zero.
pub const SIGMOID_DERIV_MAX: f64 = 0.25;

#[derive(Debug, Clone)]
struct FeatureGroup {
    feature: Vec<(usize, f64)>,
    ones: u64,
    zeros: u64,
}

/// History of `(φ^{τ_i}, y_i)` pairs with ridge weight `λ`.
#[derive(Debug, Clone)]
pub struct BinaryDataset {
    dim: usize,
    lambda: f64,
    groups: Vec<FeatureGroup>,
    index: HashMap<Vec<(usize, u64)>, usize>,
    len: usize,
}

impl BinaryDataset {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { dim, lambda, groups: Vec::new(), index: HashMap::new(), len: 0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of observations (not distinct features).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn distinct_features(&self) -> usize {
        self.groups.len()
    }

    /// Adds one observation given as sparse `(pair, count)` entries.
    pub fn push_sparse(&mut self, feature: &[(usize, f64)], label: bool) -> Result<()> {
        if let Some(&(i, _)) = feature.iter().find(|(i, _)| *i >= self.dim) {
            return Err(Error::DimensionMismatch(format!("feature index {i} out of range for dimension {}", self.dim)));
        }
        let mut sorted = feature.to_vec();
        sorted.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(sorted.len());
        for (i, v) in sorted {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|&(_, v)| v != 0.0);
        let key: Vec<(usize, u64)> = entries.iter().map(|&(i, v)| (i, v.to_bits())).collect();
        let slot = match self.index.get(&key) {
            Some(&slot) => slot,
            None => {
                self.groups.push(FeatureGroup { feature: entries, ones: 0, zeros: 0 });
                self.index.insert(key, self.groups.len() - 1);
                self.groups.len() - 1
            }
        };
        let g = &mut self.groups[slot];
        if label {
            g.ones += 1;
        } else {
            g.zeros += 1;
        }
        self.len += 1;
        Ok(())
    }

    pub fn push(&mut self, feature: &DVector<f64>, label: bool) -> Result<()> {
        if feature.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "feature has {} entries, expected {}",
                feature.len(),
                self.dim
            )));
        }
        let sparse: Vec<(usize, f64)> =
            feature.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, &v)| (i, v)).collect();
        self.push_sparse(&sparse, label)
    }

    /// Every observation as `(feature, label)`, grouped by distinct feature.
    pub fn observations(&self) -> impl Iterator<Item = (DVector<f64>, bool)> + '_ {
        self.groups.iter().flat_map(move |g| {
            let mut dense = DVector::zeros(self.dim);
            for &(i, v) in &g.feature {
                dense[i] = v;
            }
            let ones = std::iter::repeat_n((dense.clone(), true), g.ones as usize);
            let zeros = std::iter::repeat_n((dense, false), g.zeros as usize);
            ones.chain(zeros)
        })
    }

    /// `Σ φφᵀ` over all observations.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for g in &self.groups {
            add_sparse_outer(&mut m, &g.feature, (g.ones + g.zeros) as f64);
        }
        m
    }
}

fn check_theta(theta: &DVector<f64>, data: &BinaryDataset) -> Result<()> {
    if theta.len() != data.dim {
        return Err(Error::DimensionMismatch(format!("theta has {} entries, expected {}", theta.len(), data.dim)));
    }
    Ok(())
}

/// Penalised negative log-likelihood only.
pub fn neg_log_likelihood_value(theta: &DVector<f64>, data: &BinaryDataset) -> Result<f64> {
    check_theta(theta, data)?;
    let mut value = 0.5 * data.lambda * theta.norm_squared();
    for g in &data.groups {
        let z = sparse_dot(&g.feature, theta);
        // -log μ(z) = softplus(-z), -log(1-μ(z)) = softplus(z)
        value += g.ones as f64 * softplus(-z) + g.zeros as f64 * softplus(z);
    }
    Ok(value)
}

/// Value, gradient and the Hessian weights `n_g μ'(z_g)` of every feature group.
fn first_order(theta: &DVector<f64>, data: &BinaryDataset) -> (f64, DVector<f64>, Vec<f64>) {
    let mut value = 0.5 * data.lambda * theta.norm_squared();
    let mut grad = theta * data.lambda;
    let mut weights = Vec::with_capacity(data.groups.len());
    for g in &data.groups {
        let z = sparse_dot(&g.feature, theta);
        let (ones, zeros) = (g.ones as f64, g.zeros as f64);
        // one exponential serves all four terms: e = exp(-|z|)
        let e = (-z.abs()).exp();
        let log_term = e.ln_1p();
        let (mu, deriv) = if z >= 0.0 {
            (1.0 / (1.0 + e), e / ((1.0 + e) * (1.0 + e)))
        } else {
            (e / (1.0 + e), e / ((1.0 + e) * (1.0 + e)))
        };
        value += ones * ((-z).max(0.0) + log_term) + zeros * (z.max(0.0) + log_term);
        let resid = (ones + zeros) * mu - ones;
        for &(i, v) in &g.feature {
            grad[i] += resid * v;
        }
        weights.push((ones + zeros) * deriv);
    }
    (value, grad, weights)
}

/// `Σ_g w_g φ_g φ_gᵀ + λI`, accumulating the upper triangle only.
fn weighted_gram(data: &BinaryDataset, weights: &[f64]) -> DMatrix<f64> {
    let n = data.dim;
    let mut m = DMatrix::zeros(n, n);
    let s = m.as_mut_slice();
    for (g, &w) in data.groups.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        // entries are sorted by index, so (i, j) with i <= j is the upper triangle
        for (a, &(i, vi)) in g.feature.iter().enumerate() {
            let wi = w * vi;
            for &(j, vj) in &g.feature[a..] {
                s[j * n + i] += wi * vj;
            }
        }
    }
    for j in 0..n {
        for i in j + 1..n {
            s[j * n + i] = s[i * n + j];
        }
        s[j * n + j] += data.lambda;
    }
    m
}

/// Value, gradient and Hessian of
/// `-Σ[y log μ(φᵀθ) + (1-y) log(1-μ(φᵀθ))] + (λ/2)‖θ‖²`.
pub fn neg_log_likelihood(theta: &DVector<f64>, data: &BinaryDataset) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    check_theta(theta, data)?;
    let (value, grad, weights) = first_order(theta, data);
    Ok((value, grad, weighted_gram(data, &weights)))
}

/// `Λ(θ) = Σ μ'(φᵀθ) φφᵀ + λI`.
pub fn lambda_matrix(theta: &DVector<f64>, data: &BinaryDataset) -> Result<DMatrix<f64>> {
    check_theta(theta, data)?;
    let weights: Vec<f64> =
        data.groups.iter().map(|g| (g.ones + g.zeros) as f64 * sigmoid_deriv(sparse_dot(&g.feature, theta))).collect();
    Ok(weighted_gram(data, &weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Converged once `‖∇‖ ≤ grad_tol · max(1, ‖θ‖)`.
    pub grad_tol: f64,
    /// Clip the fitted entries to `[-c, c]` after convergence.
    pub clip: Option<f64>,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { max_iterations: 100, grad_tol: 1e-8, clip: None }
    }
}

/// Damped Newton with Armijo backtracking on the penalised objective.
pub fn mle_fit(data: &BinaryDataset, warm_start: Option<&DVector<f64>>) -> Result<DVector<f64>> {
    mle_fit_with(data, warm_start, &MleOptions::default())
}

pub fn mle_fit_with(
    data: &BinaryDataset,
    warm_start: Option<&DVector<f64>>,
    opts: &MleOptions,
) -> Result<DVector<f64>> {
    let mut theta = match warm_start {
        Some(w) => {
            check_theta(w, data)?;
            w.clone()
        }
        None => DVector::zeros(data.dim),
    };
    let converged = |theta: &DVector<f64>, grad_norm: f64| grad_norm <= opts.grad_tol * theta.norm().max(1.0);
    let (mut value, mut grad, mut weights) = first_order(&theta, data);
    for _ in 0..opts.max_iterations {
        let grad_norm = grad.norm();
        if converged(&theta, grad_norm) {
            break;
        }
        let step = cholesky(&weighted_gram(data, &weights))?.solve(&(-&grad));
        let slope = grad.dot(&step);
        if -slope <= 1e-13 * value.abs().max(1.0) {
            // the decrease is below the resolution of the objective; near the
            // minimiser a full Newton step is safe, judged by the gradient instead
            let candidate = &theta + &step;
            let (v, g, w) = first_order(&candidate, data);
            if g.norm() >= grad_norm {
                break;
            }
            (theta, value, grad, weights) = (candidate, v, g, w);
            continue;
        }
        // the unit step usually passes, so evaluate it with the gradient in one sweep
        let full = &theta + &step;
        let (v, g, w) = first_order(&full, data);
        if v <= value + 1e-4 * slope {
            (theta, value, grad, weights) = (full, v, g, w);
            continue;
        }
        let mut t = 0.5;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &theta + &step * t;
            if neg_log_likelihood_value(&candidate, data)? <= value + 1e-4 * t * slope {
                accepted = Some(candidate);
                break;
            }
            t *= 0.5;
        }
        let Some(candidate) = accepted else { break };
        (value, grad, weights) = first_order(&candidate, data);
        theta = candidate;
    }
    let grad_norm = grad.norm();
    if !converged(&theta, grad_norm) {
        return Err(Error::MleNotConverged { iterations: opts.max_iterations, grad_norm });
    }
    if let Some(c) = opts.clip {
        theta.apply(|x| *x = x.clamp(-c, c));
    }
    Ok(theta)
}

/// Problem constants entering the confidence radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub num_segments: usize,
    pub r_max: f64,
    pub lambda: f64,
    pub delta_prime: f64,
}

impl ConfidenceParams {
    pub fn dim(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.num_states > 0
            && self.num_actions > 0
            && self.horizon > 0
            && self.num_segments > 0
            && self.r_max > 0.0
            && self.lambda > 0.0
            && self.delta_prime > 0.0
            && self.delta_prime < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid confidence parameters {self:?}")))
        }
    }
}

/// `ω(k) = √λ(r_max√(SA) + 1/2) + (SA/√λ)·log((4/δ')(1 + H²k/(4·SA·λ·m)))`.
pub fn omega(k: f64, p: &ConfidenceParams) -> f64 {
    let d = p.dim() as f64;
    let h = p.horizon as f64;
    let m = p.num_segments as f64;
    let sl = p.lambda.sqrt();
    sl * (p.r_max * d.sqrt() + 0.5)
        + (d / sl) * ((4.0 / p.delta_prime) * (1.0 + h * h * k / (4.0 * d * p.lambda * m))).ln()
}

/// `ν(k) = (m√λ/H)·(1 + c + (H/(m√λ))·√(1+c)·ω + (H²/(m²λ))·ω²)^{3/2}` with `c = H r_max √(SA)/m`.
pub fn nu(k: f64, p: &ConfidenceParams) -> f64 {
    let d = p.dim() as f64;
    let h = p.horizon as f64;
    let m = p.num_segments as f64;
    let sl = p.lambda.sqrt();
    let w = omega(k, p);
    let c = h * p.r_max * d.sqrt() / m;
    let inner = 1.0 + c + (h / (m * sl)) * (1.0 + c).sqrt() * w + (h * h / (m * m * p.lambda)) * w * w;
    (m * sl / h) * inner.powf(1.5)
}

/// `α = e^{H r_max/m} + e^{-H r_max/m} + 2 = 1/μ'(H r_max/m)`.
pub fn alpha(horizon: usize, r_max: f64, num_segments: usize) -> f64 {
    let x = horizon as f64 * r_max / num_segments as f64;
    x.exp() + (-x).exp() + 2.0
}
