//! E-LinUCB (known transition) and LinUCB-Tran (unknown transition).
//!
//! Both fit `θ̂` by ridge regression of segment reward sums on segment visit
//! vectors and pick the policy maximising an optimistic index over a fixed
//! class of stationary policies. E-LinUCB first plays a rounded E-optimal
//! design for `K₀` episodes; LinUCB-Tran plans on `p̂` and adds the
//! variance-aware visitation bonus `Σ_{s',a'} E_ρ[B₁]`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::binary::TransitionEstimate;
use crate::design::{DesignSolution, ScheduleIter};
use crate::error::{Error, Result};
use crate::feedback::{FeedbackKind, SegmentFeedback};
use crate::linalg::{add_sparse_outer, cholesky, inv_quadratic_form};
use crate::mdp::{occupancy, MdpSpec, Policy, Trajectory, Transition};

/// Ridge regression state: `Σ = λI + Σ φφᵀ` and `Σ φR`.
#[derive(Debug, Clone)]
pub struct SumDataset {
    lambda: f64,
    sigma: DMatrix<f64>,
    xty: DVector<f64>,
    len: usize,
}

impl SumDataset {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { lambda, sigma: DMatrix::identity(dim, dim) * lambda, xty: DVector::zeros(dim), len: 0 })
    }

    pub fn dim(&self) -> usize {
        self.xty.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn xty(&self) -> &DVector<f64> {
        &self.xty
    }

    pub fn push_sparse(&mut self, feature: &[(usize, f64)], response: f64) -> Result<()> {
        if let Some(&(i, _)) = feature.iter().find(|(i, _)| *i >= self.dim()) {
            return Err(Error::DimensionMismatch(format!(
                "feature index {i} out of range for dimension {}",
                self.dim()
            )));
        }
        add_sparse_outer(&mut self.sigma, feature, 1.0);
        for &(i, v) in feature {
            self.xty[i] += v * response;
        }
        self.len += 1;
        Ok(())
    }

    /// Adds the `m` segment observations of one episode.
    pub fn push_episode(&mut self, traj: &Trajectory, feedback: &SegmentFeedback, num_segments: usize) -> Result<()> {
        feedback.expect(FeedbackKind::Sum, num_segments)?;
        if traj.num_states * traj.num_actions != self.dim() {
            return Err(Error::DimensionMismatch("trajectory does not match the dataset dimension".into()));
        }
        for (i, &r) in feedback.values.iter().enumerate() {
            self.push_sparse(&traj.segment_counts(num_segments, i + 1)?, r)?;
        }
        Ok(())
    }

    pub fn factor(&self) -> Result<Cholesky<f64, Dyn>> {
        cholesky(&self.sigma)
    }

    /// `θ̂ = Σ⁻¹ Σ φR`.
    pub fn ridge_fit(&self) -> Result<DVector<f64>> {
        Ok(self.factor()?.solve(&self.xty))
    }

    /// `Σ_i ‖φ^{τ_i}‖²_{Σ⁻¹}` for the segments of `traj` under the current `Σ`.
    pub fn elliptical_potential(&self, traj: &Trajectory, num_segments: usize) -> Result<f64> {
        let chol = self.factor()?;
        let mut total = 0.0;
        for i in 1..=num_segments {
            let mut phi = DVector::zeros(self.dim());
            for (j, v) in traj.segment_counts(num_segments, i)? {
                phi[j] = v;
            }
            total += inv_quadratic_form(&chol, &phi);
        }
        Ok(total)
    }

    pub fn log_det(&self) -> Result<f64> {
        Ok(self.factor()?.l_dirty().diagonal().iter().map(|x| 2.0 * x.ln()).sum())
    }
}

/// Problem constants for the sum-feedback radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumParams {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub num_segments: usize,
    pub r_max: f64,
    pub lambda: f64,
    pub delta_prime: f64,
}

impl SumParams {
    pub fn dim(&self) -> usize {
        self.num_states * self.num_actions
    }
}

/// `β(k) = √((H|S||A|/m) log(1 + kH²/(λ|S||A|m)) + 2 log(1/δ')) + r_max √(λ|S||A|)`.
pub fn beta(k: f64, p: &SumParams) -> f64 {
    let d = p.dim() as f64;
    let h = p.horizon as f64;
    let m = p.num_segments as f64;
    ((h * d / m) * (1.0 + k * h * h / (p.lambda * d * m)).ln() + 2.0 * (1.0 / p.delta_prime).ln()).sqrt()
        + p.r_max * (p.lambda * d).sqrt()
}

/// `λ = H/(r_max² m)`.
pub fn elinucb_lambda(horizon: usize, r_max: f64, num_segments: usize) -> f64 {
    horizon as f64 / (r_max * r_max * num_segments as f64)
}

/// `λ = H/m`.
pub fn linucb_tran_lambda(horizon: usize, num_segments: usize) -> f64 {
    horizon as f64 / num_segments as f64
}

/// `δ' = δ/3`.
pub fn elinucb_delta_prime(delta: f64) -> f64 {
    delta / 3.0
}

/// `δ' = δ/4`.
pub fn linucb_tran_delta_prime(delta: f64) -> f64 {
    delta / 4.0
}

/// `(φ)ᵀθ̂ + β ‖φ‖_{Σ⁻¹}`.
pub fn ucb_index(phi: &DVector<f64>, theta_hat: &DVector<f64>, chol: &Cholesky<f64, Dyn>, beta: f64) -> f64 {
    phi.dot(theta_hat) + beta * inv_quadratic_form(chol, phi).sqrt()
}

/// Index of the policy maximising the UCB index; ties go to the lowest index.
pub fn elinucb_select(data: &SumDataset, occupancies: &[DVector<f64>], beta: f64) -> Result<usize> {
    if occupancies.is_empty() {
        return Err(Error::InvalidConfig("empty policy class".into()));
    }
    let theta = data.ridge_fit()?;
    let chol = data.factor()?;
    let mut best = (0, f64::NEG_INFINITY);
    for (j, phi) in occupancies.iter().enumerate() {
        let v = ucb_index(phi, &theta, &chol, beta);
        if v > best.1 {
            best = (j, v);
        }
    }
    Ok(best.0)
}

/// `G_h(s) = 𝟙{s = s', π_h(s) = a'} + p(·|s, π_h(s))ᵀ G_{h+1}` for `h = 0..H`, with `G_H ≡ 0`.
pub fn visitation_value(
    transition: &Transition,
    policy: &Policy,
    target: (usize, usize),
    horizon: usize,
) -> Vec<Vec<f64>> {
    let n_s = transition.num_states();
    let mut g = vec![vec![0.0; n_s]; horizon + 1];
    for h in (0..horizon).rev() {
        for s in 0..n_s {
            let a = policy.action(h, s);
            let hit = if s == target.0 && a == target.1 { 1.0 } else { 0.0 };
            let cont: f64 = transition.row(s, a).iter().zip(&g[h + 1]).map(|(p, v)| p * v).sum();
            g[h][s] = hit + cont;
        }
    }
    g
}

/// `L = log(3|S||A|H/δ') + |S| log(8e(1 + KH))`.
pub fn tran_log_term(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    num_episodes: usize,
    delta_prime: f64,
) -> f64 {
    let sah = (num_states * num_actions * horizon) as f64;
    (3.0 * sah / delta_prime).ln()
        + num_states as f64 * (8.0 * std::f64::consts::E * (1.0 + (num_episodes * horizon) as f64)).ln()
}

/// `B_h(s)` for `h = 0..H` with `B_H ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BonusTable {
    pub values: Vec<Vec<f64>>,
}

impl BonusTable {
    /// `E_{s₁∼ρ}[B₁(s₁)]`.
    pub fn initial_value(&self, init_dist: &[f64]) -> f64 {
        init_dist.iter().zip(&self.values[0]).map(|(p, b)| p * b).sum()
    }
}

/// `B_h(s) = min{4√(Var_{p̂}(G_{h+1}) L/n) + 13H²L/n + (1 + 2/H) p̂ᵀB_{h+1}, H}` with `n = n(s, π_h(s))`,
/// and `B_h(s) = H` when `n = 0`. `g` must be the visitation value on `p_hat`.
pub fn bonus_recursion(
    p_hat: &Transition,
    counts: &[u64],
    policy: &Policy,
    g: &[Vec<f64>],
    horizon: usize,
    log_term: f64,
) -> BonusTable {
    let n_s = p_hat.num_states();
    let n_a = p_hat.num_actions();
    let h_f = horizon as f64;
    let mut b = vec![vec![0.0; n_s]; horizon + 1];
    for h in (0..horizon).rev() {
        for s in 0..n_s {
            let a = policy.action(h, s);
            let n = counts[s * n_a + a];
            if n == 0 {
                b[h][s] = h_f;
                continue;
            }
            let n = n as f64;
            let row = p_hat.row(s, a);
            let mean: f64 = row.iter().zip(&g[h + 1]).map(|(p, v)| p * v).sum();
            let var: f64 = row.iter().zip(&g[h + 1]).map(|(p, v)| p * (v - mean) * (v - mean)).sum();
            let cont: f64 = row.iter().zip(&b[h + 1]).map(|(p, v)| p * v).sum();
            let value =
                4.0 * (var.max(0.0) * log_term / n).sqrt() + 13.0 * h_f * h_f * log_term / n + (1.0 + 2.0 / h_f) * cont;
            b[h][s] = value.min(h_f);
        }
    }
    BonusTable { values: b }
}

/// `Σ_{(s',a')} E_ρ[B₁^{π;s',a'}]` on `p_hat`.
pub fn total_visitation_bonus(
    p_hat: &Transition,
    counts: &[u64],
    init_dist: &[f64],
    policy: &Policy,
    horizon: usize,
    log_term: f64,
) -> f64 {
    // a target the policy never plays has G ≡ 0, and all such targets share one table
    let mut idle: Option<f64> = None;
    let mut total = 0.0;
    for s in 0..p_hat.num_states() {
        for a in 0..p_hat.num_actions() {
            if (0..horizon).all(|h| policy.action(h, s) != a) {
                total += *idle.get_or_insert_with(|| {
                    let g = vec![vec![0.0; p_hat.num_states()]; horizon + 1];
                    bonus_recursion(p_hat, counts, policy, &g, horizon, log_term).initial_value(init_dist)
                });
                continue;
            }
            let g = visitation_value(p_hat, policy, (s, a), horizon);
            total += bonus_recursion(p_hat, counts, policy, &g, horizon, log_term).initial_value(init_dist);
        }
    }
    total
}

/// Multiplier on the visitation bonus in the LinUCB-Tran index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BonusCoefficient {
    /// The index exactly as in the algorithm listing.
    #[default]
    One,
    /// Scaled by `r_max`, as in the optimism argument.
    RMax,
}

/// Index of the policy maximising `φ̂ᵀθ̂ + β‖φ̂‖_{Σ⁻¹} + c Σ E_ρ[B₁]` with `φ̂` the occupancy on `p̂`.
#[allow(clippy::too_many_arguments)]
pub fn linucb_tran_select(
    data: &SumDataset,
    p_hat: &Transition,
    counts: &[u64],
    init_dist: &[f64],
    policies: &[Policy],
    params: &SumParams,
    beta: f64,
    bonus_coef: f64,
    log_term: f64,
) -> Result<usize> {
    if policies.is_empty() {
        return Err(Error::InvalidConfig("empty policy class".into()));
    }
    let theta = data.ridge_fit()?;
    let chol = data.factor()?;
    let mut best = (0, f64::NEG_INFINITY);
    for (j, pi) in policies.iter().enumerate() {
        let phi = occupancy(p_hat, init_dist, pi, params.horizon).0;
        let mut v = ucb_index(&phi, &theta, &chol, beta);
        if bonus_coef != 0.0 {
            v += bonus_coef * total_visitation_bonus(p_hat, counts, init_dist, pi, params.horizon, log_term);
        }
        if v > best.1 {
            best = (j, v);
        }
    }
    Ok(best.0)
}

/// Options shared by the sum-feedback learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SumOptions {
    /// Overrides the default `λ` of each algorithm.
    pub lambda: Option<f64>,
    pub bonus_coefficient: BonusCoefficient,
    /// Count step-`H` visits in the `n(s,a)` of the bonus.
    pub count_terminal_visits: bool,
}

impl Default for SumOptions {
    fn default() -> Self {
        Self { lambda: None, bonus_coefficient: BonusCoefficient::One, count_terminal_visits: true }
    }
}

fn sum_params(spec: &MdpSpec, lambda: f64, delta_prime: f64) -> SumParams {
    SumParams {
        num_states: spec.num_states,
        num_actions: spec.num_actions,
        horizon: spec.horizon,
        num_segments: spec.num_segments,
        r_max: spec.r_max,
        lambda,
        delta_prime,
    }
}

/// E-LinUCB: `K₀` design episodes, then UCB over the policy class with exact occupancies.
#[derive(Debug, Clone)]
pub struct ELinUcb {
    params: SumParams,
    data: SumDataset,
    policies: Vec<Policy>,
    occupancies: Vec<DVector<f64>>,
    schedule: ScheduleIter,
    k0: u64,
    completed: u64,
}

impl ELinUcb {
    /// `design` must have been solved for `spec` (same `m`) and lists the policy class.
    pub fn new(spec: &MdpSpec, delta: f64, design: &DesignSolution, opts: &SumOptions) -> Result<Self> {
        if design.num_segments != spec.num_segments {
            return Err(Error::InvalidConfig(format!(
                "design was solved for m = {}, instance has m = {}",
                design.num_segments, spec.num_segments
            )));
        }
        let lambda = opts.lambda.unwrap_or_else(|| elinucb_lambda(spec.horizon, spec.r_max, spec.num_segments));
        let params = sum_params(spec, lambda, elinucb_delta_prime(delta));
        let occupancies =
            design.policies.iter().map(|pi| occupancy(&spec.transition, &spec.init_dist, pi, spec.horizon).0).collect();
        Ok(Self {
            params,
            data: SumDataset::new(spec.dim(), lambda)?,
            policies: design.policies.clone(),
            occupancies,
            schedule: design.schedule.iter(),
            k0: design.k0,
            completed: 0,
        })
    }

    pub fn params(&self) -> &SumParams {
        &self.params
    }

    pub fn data(&self) -> &SumDataset {
        &self.data
    }

    pub fn k0(&self) -> u64 {
        self.k0
    }

    pub fn completed_episodes(&self) -> u64 {
        self.completed
    }

    /// Whether the next episode belongs to the design phase.
    pub fn in_initialization(&self) -> bool {
        self.completed < self.k0
    }

    pub fn select(&mut self) -> Result<Policy> {
        if self.in_initialization() {
            let j =
                self.schedule.next().ok_or_else(|| Error::InvalidConfig("design schedule exhausted early".into()))?;
            return Ok(self.policies[j].clone());
        }
        let b = beta(self.completed as f64, &self.params);
        let j = elinucb_select(&self.data, &self.occupancies, b)?;
        Ok(self.policies[j].clone())
    }

    pub fn observe(&mut self, traj: &Trajectory, feedback: &SegmentFeedback) -> Result<()> {
        self.data.push_episode(traj, feedback, self.params.num_segments)?;
        self.completed += 1;
        Ok(())
    }
}

/// LinUCB-Tran: UCB with the visitation bonus, planning on `p̂`.
#[derive(Debug, Clone)]
pub struct LinUcbTran {
    params: SumParams,
    data: SumDataset,
    estimate: TransitionEstimate,
    policies: Vec<Policy>,
    init_dist: Vec<f64>,
    bonus_coef: f64,
    log_term: f64,
    count_terminal_visits: bool,
    completed: usize,
}

impl LinUcbTran {
    /// `num_episodes` is the budget `K` entering `L`.
    pub fn new(
        spec: &MdpSpec,
        delta: f64,
        num_episodes: usize,
        policies: Vec<Policy>,
        opts: &SumOptions,
    ) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::InvalidConfig("empty policy class".into()));
        }
        let lambda = opts.lambda.unwrap_or_else(|| linucb_tran_lambda(spec.horizon, spec.num_segments));
        let delta_prime = linucb_tran_delta_prime(delta);
        let params = sum_params(spec, lambda, delta_prime);
        Ok(Self {
            params,
            data: SumDataset::new(spec.dim(), lambda)?,
            estimate: TransitionEstimate::new(spec.num_states, spec.num_actions),
            policies,
            init_dist: spec.init_dist.clone(),
            bonus_coef: match opts.bonus_coefficient {
                BonusCoefficient::One => 1.0,
                BonusCoefficient::RMax => spec.r_max,
            },
            log_term: tran_log_term(spec.num_states, spec.num_actions, spec.horizon, num_episodes, delta_prime),
            count_terminal_visits: opts.count_terminal_visits,
            completed: 0,
        })
    }

    pub fn params(&self) -> &SumParams {
        &self.params
    }

    pub fn data(&self) -> &SumDataset {
        &self.data
    }

    pub fn estimate(&self) -> &TransitionEstimate {
        &self.estimate
    }

    pub fn log_term(&self) -> f64 {
        self.log_term
    }

    pub fn select(&mut self) -> Result<Policy> {
        let b = beta(self.completed as f64, &self.params);
        let j = linucb_tran_select(
            &self.data,
            &self.estimate.p_hat(),
            self.estimate.counts(self.count_terminal_visits),
            &self.init_dist,
            &self.policies,
            &self.params,
            b,
            self.bonus_coef,
            self.log_term,
        )?;
        Ok(self.policies[j].clone())
    }

    pub fn observe(&mut self, traj: &Trajectory, feedback: &SegmentFeedback) -> Result<()> {
        self.data.push_episode(traj, feedback, self.params.num_segments)?;
        self.estimate.update(traj)?;
        self.completed += 1;
        Ok(())
    }
}
