//! Tabular episodic MDPs: instance description, episode simulation,
//! visitation vectors, exact occupancy and finite-horizon planning.
//!
//! State-action pairs are flattened as `sa = s * |A| + a` everywhere; steps are
//! 0-indexed internally (`h = 0` is the first step of an episode).

use std::ops::{Deref, DerefMut};

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::sample_categorical;

/// Tolerance for probability vectors summing to one.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Default cap on `|A|^|S|` when enumerating stationary policies.
pub const DEFAULT_POLICY_CAP: u64 = 1_000_000;

/// Transition kernel `p(s'|s,a)` stored as a row-major `|S||A| x |S|` table.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Transition {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions * num_states {
            return Err(Error::InvalidSpec(format!(
                "transition has {} entries, expected |S||A||S| = {}",
                probs.len(),
                num_states * num_actions * num_states
            )));
        }
        Ok(Self { num_states, num_actions, probs })
    }

    /// Every row uniform over next states.
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_states as f64;
        Self { num_states, num_actions, probs: vec![p; num_states * num_actions * num_states] }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.probs[start..start + self.num_states]
    }

    pub fn row_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &mut self.probs[start..start + self.num_states]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Largest entrywise deviation between two kernels.
    pub fn max_abs_diff(&self, other: &Transition) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    fn check_rows(&self) -> Result<()> {
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.row(s, a);
                if let Some(sp) = row.iter().position(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(Error::InvalidSpec(format!(
                        "transition row (s={s}, a={a}) has invalid entry {} at s'={sp}",
                        row[sp]
                    )));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::InvalidSpec(format!("transition row (s={s}, a={a}) sums to {total} != 1")));
                }
            }
        }
        Ok(())
    }
}

/// A full problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct MdpSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub num_segments: usize,
    pub r_max: f64,
    /// Reward vector `θ*`, indexed by flat state-action pair.
    pub reward: Vec<f64>,
    pub transition: Transition,
    pub init_dist: Vec<f64>,
}

/// On-disk layout of [`MdpSpec`].
#[derive(Serialize, Deserialize)]
struct RawSpec {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    num_segments: usize,
    r_max: f64,
    reward: Vec<f64>,
    transition: Vec<f64>,
    init_dist: Vec<f64>,
}

impl TryFrom<RawSpec> for MdpSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let transition = Transition::new(raw.num_states, raw.num_actions, raw.transition)?;
        Ok(MdpSpec {
            num_states: raw.num_states,
            num_actions: raw.num_actions,
            horizon: raw.horizon,
            num_segments: raw.num_segments,
            r_max: raw.r_max,
            reward: raw.reward,
            transition,
            init_dist: raw.init_dist,
        })
    }
}

impl From<MdpSpec> for RawSpec {
    fn from(spec: MdpSpec) -> Self {
        RawSpec {
            num_states: spec.num_states,
            num_actions: spec.num_actions,
            horizon: spec.horizon,
            num_segments: spec.num_segments,
            r_max: spec.r_max,
            reward: spec.reward,
            transition: spec.transition.probs,
            init_dist: spec.init_dist,
        }
    }
}

impl MdpSpec {
    /// Feature dimension `|S||A|`.
    pub fn dim(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn sa(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    pub fn segment_len(&self) -> usize {
        self.horizon / self.num_segments
    }

    /// Same instance with a different number of segments.
    pub fn with_segments(&self, num_segments: usize) -> Result<MdpSpec> {
        let mut spec = self.clone();
        spec.num_segments = num_segments;
        spec.validate()?;
        Ok(spec)
    }

    pub fn reward_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.reward)
    }

    /// Checks every structural invariant and reports the first violation.
    pub fn validate(&self) -> Result<()> {
        if self.num_states == 0 || self.num_actions == 0 {
            return Err(Error::InvalidSpec("need at least one state and one action".into()));
        }
        if self.horizon == 0 || self.num_segments == 0 {
            return Err(Error::InvalidSpec("horizon and num_segments must be positive".into()));
        }
        if !self.horizon.is_multiple_of(self.num_segments) {
            return Err(Error::InvalidSpec(format!(
                "H not divisible by m (H={}, m={})",
                self.horizon, self.num_segments
            )));
        }
        if !(self.r_max > 0.0) || !self.r_max.is_finite() {
            return Err(Error::InvalidSpec(format!("r_max must be positive, got {}", self.r_max)));
        }
        if self.reward.len() != self.dim() {
            return Err(Error::InvalidSpec(format!(
                "reward has {} entries, expected |S||A| = {}",
                self.reward.len(),
                self.dim()
            )));
        }
        if self.transition.num_states != self.num_states || self.transition.num_actions != self.num_actions {
            return Err(Error::InvalidSpec("transition shape disagrees with |S|, |A|".into()));
        }
        self.transition.check_rows()?;
        if self.init_dist.len() != self.num_states {
            return Err(Error::InvalidSpec(format!(
                "init_dist has {} entries, expected |S| = {}",
                self.init_dist.len(),
                self.num_states
            )));
        }
        if let Some(s) = self.init_dist.iter().position(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidSpec(format!("init_dist has invalid entry {} at s={s}", self.init_dist[s])));
        }
        let total: f64 = self.init_dist.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidSpec(format!("init_dist sums to {total} != 1")));
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let r = self.reward[self.sa(s, a)];
                if !r.is_finite() || r.abs() > self.r_max {
                    return Err(Error::InvalidSpec(format!(
                        "reward at (s={s}, a={a}) is {r}, outside [-r_max, r_max] with r_max={}",
                        self.r_max
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Stationary,
    Nonstationary,
}

/// Deterministic policy `(step, state) -> action`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    horizon: usize,
    num_states: usize,
    kind: PolicyKind,
    /// `|S|` entries when stationary, `H x |S|` (step-major) otherwise.
    table: Vec<usize>,
}

impl Policy {
    pub fn stationary(horizon: usize, actions: Vec<usize>) -> Self {
        Self { horizon, num_states: actions.len(), kind: PolicyKind::Stationary, table: actions }
    }

    pub fn nonstationary(horizon: usize, num_states: usize, table: Vec<usize>) -> Result<Self> {
        if table.len() != horizon * num_states {
            return Err(Error::InvalidPolicy(format!(
                "table has {} entries, expected H x |S| = {}",
                table.len(),
                horizon * num_states
            )));
        }
        Ok(Self { horizon, num_states, kind: PolicyKind::Nonstationary, table })
    }

    /// The stationary policy playing `action` everywhere.
    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        Self::stationary(horizon, vec![action; num_states])
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        match self.kind {
            PolicyKind::Stationary => self.table[s],
            PolicyKind::Nonstationary => self.table[h * self.num_states + s],
        }
    }

    /// Every entry is a valid action index.
    pub fn validate(&self, num_actions: usize) -> Result<()> {
        match self.table.iter().position(|&a| a >= num_actions) {
            Some(i) => {
                Err(Error::InvalidPolicy(format!("entry {i} is action {} but |A| = {num_actions}", self.table[i])))
            }
            None => Ok(()),
        }
    }

    /// Whether every step prescribes the same state-to-action map.
    pub fn is_effectively_stationary(&self) -> bool {
        match self.kind {
            PolicyKind::Stationary => true,
            PolicyKind::Nonstationary => {
                let first = &self.table[..self.num_states];
                self.table.chunks(self.num_states).all(|row| row == first)
            }
        }
    }
}

/// One played episode. No reward observations are stored here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub num_states: usize,
    pub num_actions: usize,
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    /// Flat state-action index of step `h`.
    #[inline]
    pub fn sa(&self, h: usize) -> usize {
        self.states[h] * self.num_actions + self.actions[h]
    }

    /// Step range of segment `index` (1-based), i.e. steps `(i-1)H/m .. iH/m`.
    pub fn segment_range(&self, num_segments: usize, index: usize) -> Result<std::ops::Range<usize>> {
        if index == 0 || index > num_segments {
            return Err(Error::SegmentOutOfRange { index, num_segments });
        }
        let len = self.horizon() / num_segments;
        Ok((index - 1) * len..index * len)
    }

    /// Sparse visit counts of segment `index` (1-based), sorted by pair index.
    pub fn segment_counts(&self, num_segments: usize, index: usize) -> Result<Vec<(usize, f64)>> {
        let range = self.segment_range(num_segments, index)?;
        let mut pairs: Vec<usize> = range.map(|h| self.sa(h)).collect();
        pairs.sort_unstable();
        let mut counts: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for sa in pairs {
            match counts.last_mut() {
                Some((last, c)) if *last == sa => *c += 1.0,
                _ => counts.push((sa, 1.0)),
            }
        }
        Ok(counts)
    }
}

/// Visit counts (or expected counts) per state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitVector(pub DVector<f64>);

impl VisitVector {
    pub fn zeros(dim: usize) -> Self {
        VisitVector(DVector::zeros(dim))
    }

    pub fn total(&self) -> f64 {
        self.0.sum()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for VisitVector {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl DerefMut for VisitVector {
    fn deref_mut(&mut self) -> &mut DVector<f64> {
        &mut self.0
    }
}

/// `φ^τ` for the whole trajectory, or `φ^{τ_i}` for segment `i` (1-based).
pub fn visit_vector(traj: &Trajectory, num_segments: usize, segment_index: Option<usize>) -> Result<VisitVector> {
    let range = match segment_index {
        Some(i) => traj.segment_range(num_segments, i)?,
        None => 0..traj.horizon(),
    };
    let mut v = VisitVector::zeros(traj.num_states * traj.num_actions);
    for h in range {
        v[traj.sa(h)] += 1.0;
    }
    Ok(v)
}

/// Plays one episode: `s_1 ~ ρ`, `a_h = π_h(s_h)`, `s_{h+1} ~ p(·|s_h, a_h)`.
pub fn simulate_episode<R: Rng + ?Sized>(spec: &MdpSpec, policy: &Policy, rng: &mut R) -> Trajectory {
    let h_len = spec.horizon;
    let mut states = Vec::with_capacity(h_len);
    let mut actions = Vec::with_capacity(h_len);
    let mut s = sample_categorical(&spec.init_dist, rng);
    for h in 0..h_len {
        let a = policy.action(h, s);
        states.push(s);
        actions.push(a);
        if h + 1 < h_len {
            s = sample_categorical(spec.transition.row(s, a), rng);
        }
    }
    Trajectory { num_states: spec.num_states, num_actions: spec.num_actions, states, actions }
}

/// Marginal state distribution at every step `h = 0..H` under `policy`.
pub fn state_distributions(
    transition: &Transition,
    init_dist: &[f64],
    policy: &Policy,
    horizon: usize,
) -> Vec<Vec<f64>> {
    let n_s = transition.num_states();
    let mut dists = Vec::with_capacity(horizon);
    let mut d = init_dist.to_vec();
    for h in 0..horizon {
        let mut next = vec![0.0; n_s];
        if h + 1 < horizon {
            for s in 0..n_s {
                if d[s] == 0.0 {
                    continue;
                }
                let row = transition.row(s, policy.action(h, s));
                for (sp, &p) in row.iter().enumerate() {
                    next[sp] += d[s] * p;
                }
            }
        }
        dists.push(std::mem::replace(&mut d, next));
    }
    dists
}

/// Exact occupancy `φ^π(s,a) = Σ_h P[s_h = s, a_h = a | π]` by forward propagation.
pub fn occupancy(transition: &Transition, init_dist: &[f64], policy: &Policy, horizon: usize) -> VisitVector {
    let n_a = transition.num_actions();
    let mut phi = VisitVector::zeros(transition.num_states() * n_a);
    for (h, d) in state_distributions(transition, init_dist, policy, horizon).iter().enumerate() {
        for (s, &mass) in d.iter().enumerate() {
            phi[s * n_a + policy.action(h, s)] += mass;
        }
    }
    phi
}

/// Expected return `(φ^π)ᵀ r`.
pub fn policy_value(
    transition: &Transition,
    init_dist: &[f64],
    policy: &Policy,
    reward: &[f64],
    horizon: usize,
) -> f64 {
    occupancy(transition, init_dist, policy, horizon).iter().zip(reward).map(|(p, r)| p * r).sum()
}

/// Backward value iteration for `argmax_π (φ^π)ᵀ reward`.
///
/// Ties go to the lowest action index. Returns the optimal nonstationary
/// policy and its expected value under `init_dist`.
pub fn plan_optimal(transition: &Transition, init_dist: &[f64], reward: &[f64], horizon: usize) -> (Policy, f64) {
    let n_s = transition.num_states();
    let n_a = transition.num_actions();
    let mut table = vec![0usize; horizon * n_s];
    let mut v_next = vec![0.0; n_s];
    let mut v = vec![0.0; n_s];
    for h in (0..horizon).rev() {
        for s in 0..n_s {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..n_a {
                let cont: f64 = if h + 1 < horizon {
                    transition.row(s, a).iter().zip(&v_next).map(|(p, v)| p * v).sum()
                } else {
                    0.0
                };
                let q = reward[s * n_a + a] + cont;
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            v[s] = best;
            table[h * n_s + s] = best_a;
        }
        std::mem::swap(&mut v, &mut v_next);
    }
    let value = init_dist.iter().zip(&v_next).map(|(p, v)| p * v).sum();
    let policy = Policy::nonstationary(horizon, n_s, table).expect("table sized H x |S|");
    (policy, value)
}

/// All `|A|^|S|` stationary deterministic policies in lexicographic order of
/// their action tuples (the last state varies fastest).
pub fn enumerate_stationary_policies(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    cap: u64,
) -> Result<Vec<Policy>> {
    let count = (num_actions as f64).powi(num_states as i32);
    if count > cap as f64 {
        return Err(Error::PolicyCapExceeded { count, cap });
    }
    let count = count as usize;
    let mut out = Vec::with_capacity(count);
    let mut digits = vec![0usize; num_states];
    for _ in 0..count {
        out.push(Policy::stationary(horizon, digits.clone()));
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < num_actions {
                break;
            }
            *d = 0;
        }
    }
    Ok(out)
}
