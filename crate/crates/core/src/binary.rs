//! SegBiTS (known transition) and SegBiTS-Tran (unknown transition).
//!
//! Both learners keep the penalised logistic MLE `θ̂` of the per-pair reward,
//! perturb it with Gaussian noise of covariance `α ν(k-1)² Σ⁻¹` and plan on
//! the perturbed reward. The unknown-transition variant also adds the `b^pv`
//! bonus and plans on the empirical transition `p̂`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{FeedbackKind, SegmentFeedback};
use crate::linalg::{add_sparse_outer, cholesky};
use crate::logistic::{alpha, mle_fit_with, nu, BinaryDataset, ConfidenceParams, MleOptions};
use crate::mdp::{plan_optimal, MdpSpec, Policy, Trajectory, Transition};
use crate::rng::NormalSource;

/// Tuning knobs shared by both binary-feedback learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinaryOptions {
    /// Ridge weight `λ`.
    pub lambda: f64,
    /// Refit the MLE every `refit_every` episodes (1 = every episode).
    pub refit_every: usize,
    pub mle: MleOptions,
    /// Multiplier on `ν`. 1 keeps the radius exactly as derived.
    pub confidence_scale: f64,
    /// Count step-`H` visits (which have no observed successor) in `n(s,a)` for `b^pv`.
    pub count_terminal_visits: bool,
}

impl Default for BinaryOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            refit_every: 1,
            mle: MleOptions::default(),
            confidence_scale: 1.0,
            count_terminal_visits: true,
        }
    }
}

/// `δ' = δ/3` for SegBiTS.
pub fn segbits_delta_prime(delta: f64) -> f64 {
    delta / 3.0
}

/// `δ' = δ/8` for SegBiTS-Tran.
pub fn segbits_tran_delta_prime(delta: f64) -> f64 {
    delta / 8.0
}

/// Posterior state: history, `Σ = Σφφᵀ + αλI`, and the cached MLE.
#[derive(Debug, Clone)]
pub struct SegBiTSState {
    params: ConfidenceParams,
    alpha: f64,
    dataset: BinaryDataset,
    sigma: DMatrix<f64>,
    completed: usize,
    theta_hat: DVector<f64>,
    stale: bool,
    since_refit: usize,
    opts: BinaryOptions,
}

impl SegBiTSState {
    pub fn new(params: ConfidenceParams, opts: BinaryOptions) -> Result<Self> {
        let params = ConfidenceParams { lambda: opts.lambda, ..params };
        params.validate()?;
        if opts.refit_every == 0 {
            return Err(Error::InvalidConfig("refit_every must be at least 1".into()));
        }
        if !(opts.confidence_scale >= 0.0) {
            return Err(Error::InvalidConfig("confidence_scale must be nonnegative".into()));
        }
        let d = params.dim();
        let a = alpha(params.horizon, params.r_max, params.num_segments);
        Ok(Self {
            params,
            alpha: a,
            dataset: BinaryDataset::new(d, params.lambda)?,
            sigma: DMatrix::identity(d, d) * (a * params.lambda),
            completed: 0,
            theta_hat: DVector::zeros(d),
            stale: false,
            since_refit: 0,
            opts,
        })
    }

    pub fn params(&self) -> &ConfidenceParams {
        &self.params
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dataset(&self) -> &BinaryDataset {
        &self.dataset
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Number of completed episodes, `k - 1` while choosing episode `k`.
    pub fn completed_episodes(&self) -> usize {
        self.completed
    }

    /// Current `θ̂`, refitting first if new data arrived and the refit cadence allows.
    pub fn theta_hat(&mut self) -> Result<&DVector<f64>> {
        if self.stale && self.since_refit >= self.opts.refit_every {
            self.theta_hat = mle_fit_with(&self.dataset, Some(&self.theta_hat), &self.opts.mle)?;
            self.stale = false;
            self.since_refit = 0;
        }
        Ok(&self.theta_hat)
    }

    /// Cached `θ̂` without refitting.
    pub fn cached_theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    /// `√α · ν(k-1)`, the scale of the posterior perturbation.
    pub fn perturbation_scale(&self) -> f64 {
        self.alpha.sqrt() * self.opts.confidence_scale * nu(self.completed as f64, &self.params)
    }

    /// `ξ ~ N(0, α ν(k-1)² Σ⁻¹)` as `√α ν L⁻ᵀ z` where `Σ = L Lᵀ`.
    pub fn sample_perturbation<N: NormalSource + ?Sized>(&self, noise: &mut N) -> Result<DVector<f64>> {
        let d = self.params.dim();
        let chol = cholesky(&self.sigma)?;
        let z = DVector::from_fn(d, |_, _| noise.standard_normal());
        let x = chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .ok_or_else(|| Error::Factorization("singular Cholesky factor of Σ".into()))?;
        Ok(x * self.perturbation_scale())
    }

    /// `θ̃ = θ̂ + ξ`.
    pub fn sample_reward<N: NormalSource + ?Sized>(&mut self, noise: &mut N) -> Result<DVector<f64>> {
        let theta = self.theta_hat()?.clone();
        Ok(theta + self.sample_perturbation(noise)?)
    }

    /// Appends the `m` segment observations of one episode and grows `Σ`.
    pub fn update(&mut self, traj: &Trajectory, feedback: &SegmentFeedback) -> Result<()> {
        let m = self.params.num_segments;
        feedback.expect(FeedbackKind::Binary, m)?;
        if traj.num_states * traj.num_actions != self.params.dim() || traj.horizon() != self.params.horizon {
            return Err(Error::DimensionMismatch("trajectory does not match the learner's instance".into()));
        }
        for (i, &y) in feedback.values.iter().enumerate() {
            let phi = traj.segment_counts(m, i + 1)?;
            self.dataset.push_sparse(&phi, y > 0.5)?;
            add_sparse_outer(&mut self.sigma, &phi, 1.0);
        }
        self.completed += 1;
        self.since_refit += 1;
        self.stale = true;
        Ok(())
    }
}

/// SegBiTS: plan on the true transition with reward `θ̂ + ξ`.
pub fn segbits_select<N: NormalSource + ?Sized>(
    state: &mut SegBiTSState,
    transition: &Transition,
    init_dist: &[f64],
    noise: &mut N,
) -> Result<Policy> {
    let theta = state.sample_reward(noise)?;
    let (policy, _) = plan_optimal(transition, init_dist, theta.as_slice(), state.params.horizon);
    Ok(policy)
}

/// Visit and transition counts from observed trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEstimate {
    num_states: usize,
    num_actions: usize,
    visits: Vec<u64>,
    transitions: Vec<u64>,
    next_counts: Vec<u64>,
}

impl TransitionEstimate {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        let d = num_states * num_actions;
        Self {
            num_states,
            num_actions,
            visits: vec![0; d],
            transitions: vec![0; d],
            next_counts: vec![0; d * num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Records every step; the last step has no successor and only counts as a visit.
    pub fn update(&mut self, traj: &Trajectory) -> Result<()> {
        if traj.num_states != self.num_states || traj.num_actions != self.num_actions {
            return Err(Error::DimensionMismatch("trajectory does not match the estimate".into()));
        }
        let h_len = traj.horizon();
        for h in 0..h_len {
            let sa = traj.sa(h);
            self.visits[sa] += 1;
            if h + 1 < h_len {
                self.transitions[sa] += 1;
                self.next_counts[sa * self.num_states + traj.states[h + 1]] += 1;
            }
        }
        Ok(())
    }

    /// Visits to `(s,a)` including terminal steps.
    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.visits[s * self.num_actions + a]
    }

    /// Observed transitions out of `(s,a)`: `Σ_{s'} n(s,a,s')`.
    pub fn transition_count(&self, s: usize, a: usize) -> u64 {
        self.transitions[s * self.num_actions + a]
    }

    pub fn next_count(&self, s: usize, a: usize, next: usize) -> u64 {
        self.next_counts[(s * self.num_actions + a) * self.num_states + next]
    }

    /// `n(s,a)` in flat order, with or without terminal visits.
    pub fn counts(&self, count_terminal_visits: bool) -> &[u64] {
        if count_terminal_visits {
            &self.visits
        } else {
            &self.transitions
        }
    }

    /// `p̂(s'|s,a) = n(s,a,s')/n(s,a)`; rows without observed transitions are uniform.
    pub fn p_hat(&self) -> Transition {
        let mut p = Transition::uniform(self.num_states, self.num_actions);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let n = self.transition_count(s, a);
                if n == 0 {
                    continue;
                }
                let base = (s * self.num_actions + a) * self.num_states;
                let row = p.row_mut(s, a);
                for (sp, x) in row.iter_mut().enumerate() {
                    *x = self.next_counts[base + sp] as f64 / n as f64;
                }
            }
        }
        p
    }
}

/// Inputs of the `b^pv` bonus besides the counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BonusParams {
    pub num_episodes: usize,
    pub horizon: usize,
    pub r_max: f64,
    pub delta_prime: f64,
    pub num_states: usize,
    pub num_actions: usize,
}

/// `b(s,a) = min{2 H r_max √(log(K H |S||A| / δ') / n(s,a)), H r_max}`, `H r_max` when `n = 0`.
pub fn bpv_bonus(counts: &[u64], p: &BonusParams) -> DVector<f64> {
    let cap = p.horizon as f64 * p.r_max;
    let log_term = ((p.num_episodes * p.horizon * p.num_states * p.num_actions) as f64 / p.delta_prime).ln();
    DVector::from_iterator(
        counts.len(),
        counts.iter().map(|&n| if n == 0 { cap } else { (2.0 * cap * (log_term / n as f64).sqrt()).min(cap) }),
    )
}

/// SegBiTS-Tran: plan on `p̂` with reward `θ̂ + ξ + b^pv`.
pub fn segbits_tran_select<N: NormalSource + ?Sized>(
    state: &mut SegBiTSState,
    est: &TransitionEstimate,
    bonus: &BonusParams,
    init_dist: &[f64],
    noise: &mut N,
) -> Result<Policy> {
    let theta = state.sample_reward(noise)? + bpv_bonus(est.counts(state.opts.count_terminal_visits), bonus);
    let (policy, _) = plan_optimal(&est.p_hat(), init_dist, theta.as_slice(), state.params.horizon);
    Ok(policy)
}

fn confidence_params(spec: &MdpSpec, opts: &BinaryOptions, delta_prime: f64) -> ConfidenceParams {
    ConfidenceParams {
        num_states: spec.num_states,
        num_actions: spec.num_actions,
        horizon: spec.horizon,
        num_segments: spec.num_segments,
        r_max: spec.r_max,
        lambda: opts.lambda,
        delta_prime,
    }
}

/// SegBiTS bound to an instance whose transition is known.
#[derive(Debug, Clone)]
pub struct SegBiTS {
    state: SegBiTSState,
    transition: Transition,
    init_dist: Vec<f64>,
}

impl SegBiTS {
    pub fn new(spec: &MdpSpec, delta: f64, opts: BinaryOptions) -> Result<Self> {
        let params = confidence_params(spec, &opts, segbits_delta_prime(delta));
        Ok(Self {
            state: SegBiTSState::new(params, opts)?,
            transition: spec.transition.clone(),
            init_dist: spec.init_dist.clone(),
        })
    }

    pub fn state(&self) -> &SegBiTSState {
        &self.state
    }

    pub fn select<N: NormalSource + ?Sized>(&mut self, noise: &mut N) -> Result<Policy> {
        segbits_select(&mut self.state, &self.transition, &self.init_dist, noise)
    }

    pub fn observe(&mut self, traj: &Trajectory, feedback: &SegmentFeedback) -> Result<()> {
        self.state.update(traj, feedback)
    }
}

/// SegBiTS-Tran: learns the transition from its own trajectories.
#[derive(Debug, Clone)]
pub struct SegBiTSTran {
    state: SegBiTSState,
    estimate: TransitionEstimate,
    bonus: BonusParams,
    init_dist: Vec<f64>,
}

impl SegBiTSTran {
    /// `num_episodes` is the planned budget `K` entering the bonus.
    pub fn new(spec: &MdpSpec, delta: f64, num_episodes: usize, opts: BinaryOptions) -> Result<Self> {
        let delta_prime = segbits_tran_delta_prime(delta);
        let params = confidence_params(spec, &opts, delta_prime);
        Ok(Self {
            state: SegBiTSState::new(params, opts)?,
            estimate: TransitionEstimate::new(spec.num_states, spec.num_actions),
            bonus: BonusParams {
                num_episodes,
                horizon: spec.horizon,
                r_max: spec.r_max,
                delta_prime,
                num_states: spec.num_states,
                num_actions: spec.num_actions,
            },
            init_dist: spec.init_dist.clone(),
        })
    }

    pub fn state(&self) -> &SegBiTSState {
        &self.state
    }

    pub fn estimate(&self) -> &TransitionEstimate {
        &self.estimate
    }

    pub fn select<N: NormalSource + ?Sized>(&mut self, noise: &mut N) -> Result<Policy> {
        segbits_tran_select(&mut self.state, &self.estimate, &self.bonus, &self.init_dist, noise)
    }

    pub fn observe(&mut self, traj: &Trajectory, feedback: &SegmentFeedback) -> Result<()> {
        self.state.update(traj, feedback)?;
        self.estimate.update(traj)
    }
}
