//! E-optimal design over a finite policy class, the `K₀` sample size and the
//! rounding of a continuous design into a schedule of `K₀` episodes.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{add_sparse_outer, min_eigenvalue, sym_eigen, EIGEN_FLOOR};
use crate::mdp::{enumerate_stationary_policies, simulate_episode, state_distributions, MdpSpec, Policy, Transition};

/// Default rounding slack `γ`.
pub const DEFAULT_GAMMA: f64 = 0.1;
pub const FW_MAX_ITERATIONS: usize = 5000;
pub const FW_RELATIVE_GAP: f64 = 1e-6;

/// `Σ_i E[φ^{τ_i} (φ^{τ_i})ᵀ]` computed exactly from pairwise visitation probabilities.
///
/// Within a segment window, `E[φφᵀ] = Σ_t diag(P[x_t]) + Σ_{t<t'} (P[x_t, x_{t'}] + transpose)`
/// where `P[x_t = (s,a), x_{t'} = ·]` is obtained by pushing the point mass at `s`
/// forward from step `t`.
pub fn expected_segment_covariance(
    transition: &Transition,
    init_dist: &[f64],
    policy: &Policy,
    horizon: usize,
    num_segments: usize,
) -> Result<DMatrix<f64>> {
    if num_segments == 0 || !horizon.is_multiple_of(num_segments) {
        return Err(Error::InvalidSpec(format!("m = {num_segments} does not divide H = {horizon}")));
    }
    let n_s = transition.num_states();
    let n_a = transition.num_actions();
    let d = n_s * n_a;
    let len = horizon / num_segments;
    let dists = state_distributions(transition, init_dist, policy, horizon);
    let mut cov = DMatrix::zeros(d, d);
    let mut q = vec![0.0; n_s];
    let mut next = vec![0.0; n_s];
    for seg in 0..num_segments {
        let end = (seg + 1) * len;
        for t in seg * len..end {
            for (s, &mass) in dists[t].iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let x = s * n_a + policy.action(t, s);
                cov[(x, x)] += mass;
                q.iter_mut().for_each(|v| *v = 0.0);
                q[s] = 1.0;
                for tp in t + 1..end {
                    next.iter_mut().for_each(|v| *v = 0.0);
                    for (sp, &qs) in q.iter().enumerate() {
                        if qs == 0.0 {
                            continue;
                        }
                        for (spp, &p) in transition.row(sp, policy.action(tp - 1, sp)).iter().enumerate() {
                            next[spp] += qs * p;
                        }
                    }
                    std::mem::swap(&mut q, &mut next);
                    for (spp, &qs) in q.iter().enumerate() {
                        if qs == 0.0 {
                            continue;
                        }
                        let y = spp * n_a + policy.action(tp, spp);
                        let w = mass * qs;
                        cov[(x, y)] += w;
                        cov[(y, x)] += w;
                    }
                }
            }
        }
    }
    Ok(cov)
}

/// Monte Carlo estimate of [`expected_segment_covariance`] from `episodes` simulated episodes.
pub fn sampled_segment_covariance<R: Rng + ?Sized>(
    spec: &MdpSpec,
    policy: &Policy,
    episodes: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let d = spec.dim();
    let mut cov = DMatrix::zeros(d, d);
    for _ in 0..episodes {
        let traj = simulate_episode(spec, policy, rng);
        for i in 1..=spec.num_segments {
            add_sparse_outer(&mut cov, &traj.segment_counts(spec.num_segments, i)?, 1.0);
        }
    }
    Ok(cov / episodes.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
#[derive(Default)]
pub enum CovarianceMethod {
    #[default]
    Exact,
    /// Sampled estimate; approximate, so downstream guarantees hold only up to sampling error.
    MonteCarlo {
        #[serde(default = "default_mc_episodes")]
        episodes: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_mc_episodes() -> usize {
    100_000
}

/// Policy class `Π` with per-policy matrices `M_π`.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub policies: Vec<Policy>,
    pub covariances: Vec<DMatrix<f64>>,
    pub gamma: f64,
    pub delta_prime: f64,
}

impl DesignProblem {
    pub fn new(policies: Vec<Policy>, covariances: Vec<DMatrix<f64>>, gamma: f64, delta_prime: f64) -> Result<Self> {
        if covariances.is_empty() || policies.len() != covariances.len() {
            return Err(Error::InvalidConfig(format!(
                "design needs a nonempty policy set with one matrix each (got {} policies, {} matrices)",
                policies.len(),
                covariances.len()
            )));
        }
        let d = covariances[0].nrows();
        if covariances.iter().any(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::DimensionMismatch("design matrices differ in shape".into()));
        }
        if !(gamma > 0.0) || !(delta_prime > 0.0 && delta_prime < 1.0) {
            return Err(Error::InvalidConfig(format!("invalid gamma {gamma} or delta' {delta_prime}")));
        }
        Ok(Self { policies, covariances, gamma, delta_prime })
    }

    /// All stationary deterministic policies of `spec` (up to `cap`) with their segment covariances.
    pub fn from_spec(spec: &MdpSpec, cap: u64, gamma: f64, delta_prime: f64, method: CovarianceMethod) -> Result<Self> {
        spec.validate()?;
        let policies = enumerate_stationary_policies(spec.num_states, spec.num_actions, spec.horizon, cap)?;
        let covariances = policies
            .par_iter()
            .enumerate()
            .map(|(j, pi)| match method {
                CovarianceMethod::Exact => {
                    expected_segment_covariance(&spec.transition, &spec.init_dist, pi, spec.horizon, spec.num_segments)
                }
                CovarianceMethod::MonteCarlo { episodes, seed } => {
                    let mut rng = crate::rng::cell_stream(
                        seed.wrapping_add(j as u64),
                        spec.num_segments,
                        crate::rng::StreamKind::Algorithm,
                    );
                    sampled_segment_covariance(spec, pi, episodes, &mut rng)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(policies, covariances, gamma, delta_prime)
    }

    pub fn dim(&self) -> usize {
        self.covariances[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.covariances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariances.is_empty()
    }

    /// `A(w) = Σ_π w(π) M_π`.
    pub fn mixture(&self, weights: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut a = DMatrix::zeros(d, d);
        for (w, m) in weights.iter().zip(&self.covariances) {
            if *w != 0.0 {
                a += m * *w;
            }
        }
        a
    }
}

/// Continuous E-optimal design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignWeights {
    pub weights: Vec<f64>,
    /// `λ_min(A(w))`.
    pub lambda_min: f64,
    /// `‖A(w)^{-1}‖ = 1/λ_min`.
    pub z_star: f64,
    pub iterations: usize,
    /// Certified upper bound on `λ_min* − λ_min(A(w))`.
    pub duality_gap: f64,
}

/// Density matrix `Σ_i p_i v_i v_iᵀ` with `p ∝ exp(-(λ_i - λ_min)/τ)`.
fn smoothed_direction(values: &[f64], vectors: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let n = values.len();
    let lo = values[0];
    let probs: Vec<f64> = values.iter().map(|v| (-(v - lo) / tau).exp()).collect();
    let total: f64 = probs.iter().sum();
    let mut z = DMatrix::zeros(n, n);
    for (i, p) in probs.iter().enumerate() {
        let w = p / total;
        if w < 1e-16 {
            continue;
        }
        let v = vectors.column(i);
        z.ger(w, &v, &v, 1.0);
    }
    z
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn argmax(xs: impl Iterator<Item = (usize, f64)>) -> (usize, f64) {
    xs.fold((usize::MAX, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc })
}

/// Maximises `λ(t) = λ_min(base + t·dir)` over `t ∈ [0, t_max]` (concave in `t`).
fn line_search(base: &DMatrix<f64>, dir: &DMatrix<f64>, t_max: f64) -> (f64, f64) {
    let eval = |t: f64| min_eigenvalue(&(base + dir * t));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, t_max);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (eval(x1), eval(x2));
    for _ in 0..80 {
        if hi - lo <= 1e-13 * t_max {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = eval(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = eval(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    let candidates = [(mid, eval(mid)), (t_max, eval(t_max))];
    if candidates[1].1 > candidates[0].1 {
        candidates[1]
    } else {
        candidates[0]
    }
}

/// Maximises `λ_min(Σ w(π) M_π)` over the simplex by pairwise Frank-Wolfe.
///
/// Directions come from a softened minimum-eigenvalue gradient (a softmax
/// over the spectrum, which reduces to `v_min v_minᵀ` at zero temperature).
/// Mass moves from the worst active policy to the best one with an exact
/// line search on `λ_min` itself, and a step is only taken when it does not
/// decrease `λ_min`. For any density matrix `Z`,
/// `max_π ⟨M_π, Z⟩ − λ_min(A(w))` bounds the suboptimality; the loop stops
/// once that bound is within `1e-6 · λ_min` or after 5000 iterations.
pub fn solve_e_optimal(problem: &DesignProblem) -> Result<DesignWeights> {
    let n = problem.len();
    let (best_vertex, best_vertex_value) = argmax(problem.covariances.iter().map(min_eigenvalue).enumerate());
    let uniform = vec![1.0 / n as f64; n];
    let uniform_value = min_eigenvalue(&problem.mixture(&uniform));
    let mut w = if uniform_value >= best_vertex_value {
        uniform
    } else {
        let mut w = vec![0.0; n];
        w[best_vertex] = 1.0;
        w
    };
    let mut a = problem.mixture(&w);
    // every density matrix Z certifies λ_min* ≤ max_π ⟨M_π, Z⟩
    let mut upper = f64::INFINITY;
    let mut tau = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let (values, vectors) = sym_eigen(&a);
        let value = values[0];
        let scale = values[values.len() - 1].abs().max(f64::MIN_POSITIVE);
        let tau_floor = 1e-14 * scale;
        tau = tau.min(0.01 * scale).min(0.1 * (upper - value)).max(tau_floor);
        let smooth = smoothed_direction(&values, &vectors, tau);
        let scores: Vec<f64> = problem.covariances.iter().map(|m| inner(m, &smooth)).collect();
        let v = vectors.column(0);
        let sharp = v * v.transpose();
        let sharp_top = argmax(problem.covariances.iter().map(|m| inner(m, &sharp)).enumerate()).1;
        let (plus, smooth_top) = argmax(scores.iter().copied().enumerate());
        upper = upper.min(smooth_top).min(sharp_top);
        if (value > EIGEN_FLOOR && upper - value <= FW_RELATIVE_GAP * value) || iterations >= FW_MAX_ITERATIONS {
            break;
        }
        iterations += 1;
        let (minus, _) = argmax(scores.iter().enumerate().filter(|&(j, _)| w[j] > 0.0).map(|(j, &s)| (j, -s)));
        let (dir, t_max) = if minus != plus {
            (&problem.covariances[plus] - &problem.covariances[minus], w[minus])
        } else {
            (&problem.covariances[plus] - &a, 1.0)
        };
        let (t, new_value) = line_search(&a, &dir, t_max);
        if !(new_value > value) || t <= 0.0 {
            if tau <= tau_floor {
                break;
            }
            tau *= 0.1;
            continue;
        }
        if minus != plus {
            w[plus] += t;
            w[minus] = if t >= t_max { 0.0 } else { w[minus] - t };
        } else {
            w.iter_mut().for_each(|x| *x *= 1.0 - t);
            w[plus] += t;
        }
        a = problem.mixture(&w);
    }
    let mut value = min_eigenvalue(&a);
    if value > EIGEN_FLOOR && upper - value > FW_RELATIVE_GAP * value {
        if let Some(polished) = barrier_polish(problem, &w, value) {
            upper = upper.min(polished.upper);
            if polished.lambda_min >= value {
                w = polished.weights;
                value = polished.lambda_min;
            }
        }
    }
    if value <= EIGEN_FLOOR {
        return Err(Error::SingularDesign { lambda_min: value });
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(DesignWeights { weights: w, lambda_min: value, z_star: 1.0 / value, iterations, duality_gap: upper - value })
}

struct Polished {
    weights: Vec<f64>,
    lambda_min: f64,
    upper: f64,
}

/// Log-barrier path following for `max t s.t. Σ w_j M_j ⪰ tI, w ∈ simplex`,
/// started near `w0`. Each centred point yields the density matrix
/// `S⁻¹/tr(S⁻¹)` with `S = A(w) − tI`, which certifies an upper bound.
fn barrier_polish(problem: &DesignProblem, w0: &[f64], lambda0: f64) -> Option<Polished> {
    let n = problem.len();
    let d = problem.dim();
    let mut w: Vec<f64> = w0.iter().map(|x| 0.999 * x + 0.001 / n as f64).collect();
    let start = min_eigenvalue(&problem.mixture(&w));
    let mut t = start - 0.01 * start.abs().max(EIGEN_FLOOR);
    // start on the t-centred point: μ tr(S⁻¹) = 1
    let s0 = problem.mixture(&w) - DMatrix::identity(d, d) * t;
    let mut mu = 1.0 / nalgebra::Cholesky::new(s0)?.inverse().trace();
    let mut best = Polished { weights: w.clone(), lambda_min: start, upper: f64::INFINITY };

    let objective = |w: &[f64], t: f64, mu: f64| -> Option<f64> {
        if w.iter().any(|&x| x <= 0.0) {
            return None;
        }
        let s = problem.mixture(w) - DMatrix::identity(d, d) * t;
        let chol = nalgebra::Cholesky::new(s)?;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
        Some(-t - mu * log_det - mu * w.iter().map(|x| x.ln()).sum::<f64>())
    };

    for _ in 0..80 {
        for _ in 0..60 {
            let s = problem.mixture(&w) - DMatrix::identity(d, d) * t;
            let chol = nalgebra::Cholesky::new(s)?;
            let l_inv = chol.l().try_inverse()?;
            // R = L⁻¹L⁻ᵀ so that ⟨P_j, R⟩ = tr(S⁻¹ M_j S⁻¹) and tr R = tr S⁻¹
            let r = &l_inv * l_inv.transpose();
            let p: Vec<DMatrix<f64>> = problem.covariances.iter().map(|m| &l_inv * m * l_inv.transpose()).collect();
            let mut hess = DMatrix::zeros(n + 2, n + 2);
            let mut grad = nalgebra::DVector::zeros(n + 2);
            for j in 0..n {
                grad[j] = -mu * p[j].trace() - mu / w[j];
                for k in 0..=j {
                    let h = mu * inner(&p[j], &p[k]);
                    hess[(j, k)] = h;
                    hess[(k, j)] = h;
                }
                hess[(j, j)] += mu / (w[j] * w[j]);
                let ht = -mu * inner(&p[j], &r);
                hess[(j, n)] = ht;
                hess[(n, j)] = ht;
                hess[(j, n + 1)] = 1.0;
                hess[(n + 1, j)] = 1.0;
            }
            grad[n] = -1.0 + mu * r.trace();
            hess[(n, n)] = mu * r.norm_squared();
            let mut rhs = -grad.clone();
            rhs[n + 1] = 0.0;
            let step = hess.lu().solve(&rhs)?;
            let decrement = -grad.rows(0, n + 1).dot(&step.rows(0, n + 1));
            if !(decrement > 1e-14 * mu.max(f64::MIN_POSITIVE)) {
                break;
            }
            let f0 = objective(&w, t, mu)?;
            let mut size = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let cand_w: Vec<f64> = (0..n).map(|j| w[j] + size * step[j]).collect();
                let cand_t = t + size * step[n];
                if let Some(f) = objective(&cand_w, cand_t, mu) {
                    if f <= f0 - 0.25 * size * decrement {
                        w = cand_w;
                        t = cand_t;
                        moved = true;
                        break;
                    }
                }
                size *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let a = problem.mixture(&w);
        let s = &a - DMatrix::identity(d, d) * t;
        let z = nalgebra::Cholesky::new(s)?.inverse();
        let z = &z / z.trace();
        let top = problem.covariances.iter().map(|m| inner(m, &z)).fold(f64::NEG_INFINITY, f64::max);
        best.upper = best.upper.min(top);
        let lam = min_eigenvalue(&a);
        if lam > best.lambda_min {
            best.lambda_min = lam;
            best.weights = w.clone();
        }
        if best.upper - best.lambda_min <= 0.5 * FW_RELATIVE_GAP * best.lambda_min.abs() {
            break;
        }
        mu *= 0.2;
        if mu < 1e-18 * lambda0.abs() {
            break;
        }
    }
    Some(best)
}

/// `K₀ = ⌈max{26 (1+γ)² z*² H⁴ log(2|S||A|/δ'), |S||A|/γ²}⌉`.
pub fn compute_k0(
    z_star: f64,
    gamma: f64,
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    delta_prime: f64,
) -> Result<u64> {
    let d = (num_states * num_actions) as f64;
    let h = horizon as f64;
    let first = 26.0 * (1.0 + gamma).powi(2) * z_star * z_star * h.powi(4) * (2.0 * d / delta_prime).ln();
    let second = d / (gamma * gamma);
    let k0 = first.max(second).ceil();
    if !k0.is_finite() || k0 > u64::MAX as f64 {
        return Err(Error::InvalidConfig(format!("K0 = {k0} is not representable")));
    }
    Ok(k0 as u64)
}

/// Multiset of `K₀` policy indices, stored as counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub counts: Vec<u64>,
}

impl Schedule {
    pub fn len(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Episodes in a deterministic interleaved order (smooth weighted round-robin):
    /// every prefix is as close to proportional as integer counts allow.
    pub fn iter(&self) -> ScheduleIter {
        ScheduleIter {
            counts: self.counts.clone(),
            current: vec![0; self.counts.len()],
            total: self.len() as i128,
            remaining: self.len(),
        }
    }

    /// `Σ_j c_j M_j`.
    pub fn realized(&self, problem: &DesignProblem) -> DMatrix<f64> {
        let w: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        problem.mixture(&w)
    }
}

#[derive(Debug, Clone)]
pub struct ScheduleIter {
    counts: Vec<u64>,
    current: Vec<i128>,
    total: i128,
    remaining: u64,
}

impl Iterator for ScheduleIter {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.remaining == 0 {
            return None;
        }
        let mut best = 0;
        for j in 0..self.counts.len() {
            self.current[j] += self.counts[j] as i128;
            if self.current[j] > self.current[best] {
                best = j;
            }
        }
        self.current[best] -= self.total;
        self.remaining -= 1;
        Some(best)
    }
}

/// Rounds `weights` to `k0` integer counts and verifies
/// `‖(Σ_k M_{π_k})^{-1}‖ ≤ (1+γ) ‖(K₀ A(w))^{-1}‖`.
///
/// Largest-remainder allocation first; if the bound fails, single-unit moves
/// between policies are applied greedily (by `λ_min` of the realized sum)
/// within a budget of `|Π| · K₀` attempts. Failure is an error.
pub fn round_schedule(problem: &DesignProblem, weights: &[f64], k0: u64) -> Result<Schedule> {
    let n = problem.len();
    if weights.len() != n {
        return Err(Error::DimensionMismatch(format!("{} weights for {n} policies", weights.len())));
    }
    let min_k0 = problem.dim() as f64 / (problem.gamma * problem.gamma);
    if (k0 as f64) < min_k0.ceil() {
        return Err(Error::InvalidConfig(format!("K0 = {k0} is below |S||A|/γ² = {min_k0}")));
    }
    let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidConfig("design weights are all zero".into()));
    }
    let weights: Vec<f64> = weights.iter().map(|w| w.max(0.0) / total).collect();
    let continuous = min_eigenvalue(&problem.mixture(&weights)) * k0 as f64;
    let bound = continuous / (1.0 + problem.gamma);
    let mut counts: Vec<u64> = weights.iter().map(|w| (w * k0 as f64).floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    let frac = |j: usize| weights[j] * k0 as f64 - counts[j] as f64;
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    let mut left = k0.saturating_sub(assigned);
    for &j in order.iter().cycle().take(n * (left as usize / n.max(1) + 1)) {
        if left == 0 {
            break;
        }
        counts[j] += 1;
        left -= 1;
    }
    let mut schedule = Schedule { counts };
    let tol = 1e-9 * continuous.abs().max(1.0);
    let mut current = min_eigenvalue(&schedule.realized(problem));
    let budget = (n as u128) * (k0 as u128);
    let mut attempts: u128 = 0;
    while current + tol < bound {
        if attempts >= budget {
            break;
        }
        let realized = schedule.realized(problem);
        let (_, vectors) = sym_eigen(&realized);
        let v = vectors.column(0);
        let scores: Vec<f64> = problem.covariances.iter().map(|m| (v.transpose() * m * v)[(0, 0)]).collect();
        let mut by_score: Vec<usize> = (0..n).collect();
        by_score.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let receivers: Vec<usize> = by_score.iter().copied().take(5).collect();
        let donors: Vec<usize> = by_score.iter().rev().copied().filter(|&j| schedule.counts[j] > 0).take(5).collect();
        let mut best: Option<(usize, usize, f64)> = None;
        for &from in &donors {
            for &to in &receivers {
                if from == to {
                    continue;
                }
                attempts += 1;
                let trial = &realized - &problem.covariances[from] + &problem.covariances[to];
                let value = min_eigenvalue(&trial);
                if value > current && best.is_none_or(|b| value > b.2) {
                    best = Some((from, to, value));
                }
            }
        }
        match best {
            Some((from, to, value)) => {
                schedule.counts[from] -= 1;
                schedule.counts[to] += 1;
                current = value;
            }
            None => break,
        }
    }
    if current + tol < bound {
        return Err(Error::RoundingFailed { achieved: current, bound });
    }
    Ok(schedule)
}

/// Complete design output, cacheable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSolution {
    pub num_segments: usize,
    pub gamma: f64,
    pub delta_prime: f64,
    pub policies: Vec<Policy>,
    pub weights: Vec<f64>,
    pub z_star: f64,
    pub lambda_min: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub k0: u64,
    /// Realized `λ_min(Σ_k M_{π_k})` of the rounded schedule.
    pub schedule_lambda_min: f64,
    pub schedule: Schedule,
    pub covariance: CovarianceMethod,
}

/// Enumerates `Π`, solves the design, and rounds it to `K₀` episodes.
pub fn design_for_spec(
    spec: &MdpSpec,
    cap: u64,
    gamma: f64,
    delta_prime: f64,
    method: CovarianceMethod,
) -> Result<DesignSolution> {
    let problem = DesignProblem::from_spec(spec, cap, gamma, delta_prime, method)?;
    let sol = solve_e_optimal(&problem)?;
    let k0 = compute_k0(sol.z_star, gamma, spec.horizon, spec.num_states, spec.num_actions, delta_prime)?;
    let schedule = round_schedule(&problem, &sol.weights, k0)?;
    Ok(DesignSolution {
        num_segments: spec.num_segments,
        gamma,
        delta_prime,
        schedule_lambda_min: min_eigenvalue(&schedule.realized(&problem)),
        policies: problem.policies,
        weights: sol.weights,
        z_star: sol.z_star,
        lambda_min: sol.lambda_min,
        duality_gap: sol.duality_gap,
        iterations: sol.iterations,
        k0,
        schedule,
        covariance: method,
    })
}

/// Hex SHA-256 of the instance JSON, `m`, `γ`, `δ'` and the covariance method.
pub fn design_cache_key(spec: &MdpSpec, gamma: f64, delta_prime: f64, method: CovarianceMethod) -> Result<String> {
    let payload = serde_json::json!({
        "spec": spec,
        "m": spec.num_segments,
        "gamma": gamma,
        "delta_prime": delta_prime,
        "covariance": method,
    });
    let bytes = serde_json::to_vec(&payload).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Like [`design_for_spec`], reading and writing `<cache_dir>/design-<key>.json` when a directory is given.
pub fn cached_design(
    spec: &MdpSpec,
    cap: u64,
    gamma: f64,
    delta_prime: f64,
    method: CovarianceMethod,
    cache_dir: Option<&Path>,
) -> Result<DesignSolution> {
    let Some(dir) = cache_dir else {
        return design_for_spec(spec, cap, gamma, delta_prime, method);
    };
    let path = dir.join(format!("design-{}.json", design_cache_key(spec, gamma, delta_prime, method)?));
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        return serde_json::from_str(&text).map_err(|source| Error::Json { path: path.clone(), source });
    }
    let sol = design_for_spec(spec, cap, gamma, delta_prime, method)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let text = serde_json::to_string_pretty(&sol).map_err(|source| Error::Json { path: path.clone(), source })?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(sol)
}
