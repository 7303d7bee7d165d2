//! Builders for the experiment instances and the lower-bound families.
//!
//! Binary experiment (9 states, reward `+r` on odd states, `-r` on even ones,
//! `0` at `s0`). Each arrow is "good w.p. 0.9 under `a*`, 0.1 otherwise":
//!
//! ```text
//! s0 -> {s1, s2} -> {s3, s4} -> {s5, s6} -> {s7, s8}
//!          ^                                    |
//!          +------------------------------------+
//! ```
//!
//! Sum experiment: 3 states, every state moves to `s1` (good, `+r`) or `s2`
//! (bad, `-r`) with the same 0.9/0.1 rule; `s0` has reward 0 and is the start.
//!
//! Lower-bound families: `n` bandit states with a uniform start, a good
//! absorbing state `s_{n+1}` and a bad absorbing state `s_{n+2}`. The optimal
//! action of each bandit state is drawn from a seeded generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Algorithm, ExperimentConfig, InstanceSource, Seeds};
use crate::mdp::{MdpSpec, Transition};

fn one() -> usize {
    1
}

/// A parameterised instance family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceRecipe {
    BinaryExperiment {
        horizon: usize,
        #[serde(default = "one")]
        num_segments: usize,
        r_max: f64,
        #[serde(default)]
        optimal_action: usize,
    },
    SumExperiment {
        horizon: usize,
        #[serde(default = "one")]
        num_segments: usize,
        r_max: f64,
        #[serde(default)]
        optimal_action: usize,
    },
    LbBinary {
        n: usize,
        num_actions: usize,
        epsilon: f64,
        r_max: f64,
        horizon: usize,
        #[serde(default = "one")]
        num_segments: usize,
        #[serde(default)]
        assignment_seed: u64,
    },
    LbSumKnown {
        n: usize,
        num_actions: usize,
        epsilon: f64,
        r_max: f64,
        horizon: usize,
        #[serde(default = "one")]
        num_segments: usize,
        #[serde(default)]
        assignment_seed: u64,
    },
    LbSumUnknown {
        n: usize,
        num_actions: usize,
        epsilon: f64,
        r_max: f64,
        horizon: usize,
        #[serde(default = "one")]
        num_segments: usize,
        #[serde(default)]
        assignment_seed: u64,
    },
}

impl InstanceRecipe {
    pub fn family(&self) -> &'static str {
        match self {
            InstanceRecipe::BinaryExperiment { .. } => "binary_experiment",
            InstanceRecipe::SumExperiment { .. } => "sum_experiment",
            InstanceRecipe::LbBinary { .. } => "lb_binary",
            InstanceRecipe::LbSumKnown { .. } => "lb_sum_known",
            InstanceRecipe::LbSumUnknown { .. } => "lb_sum_unknown",
        }
    }

    pub fn horizon(&self) -> usize {
        match *self {
            InstanceRecipe::BinaryExperiment { horizon, .. }
            | InstanceRecipe::SumExperiment { horizon, .. }
            | InstanceRecipe::LbBinary { horizon, .. }
            | InstanceRecipe::LbSumKnown { horizon, .. }
            | InstanceRecipe::LbSumUnknown { horizon, .. } => horizon,
        }
    }

    /// Same recipe with a different number of segments.
    pub fn with_segments(&self, m: usize) -> InstanceRecipe {
        let mut r = self.clone();
        match &mut r {
            InstanceRecipe::BinaryExperiment { num_segments, .. }
            | InstanceRecipe::SumExperiment { num_segments, .. }
            | InstanceRecipe::LbBinary { num_segments, .. }
            | InstanceRecipe::LbSumKnown { num_segments, .. }
            | InstanceRecipe::LbSumUnknown { num_segments, .. } => *num_segments = m,
        }
        r
    }

    /// Optimal action of each bandit state `s_1..s_n` (lower-bound families only).
    pub fn optimal_actions(&self) -> Option<Vec<usize>> {
        match *self {
            InstanceRecipe::LbBinary { n, num_actions, assignment_seed, .. }
            | InstanceRecipe::LbSumKnown { n, num_actions, assignment_seed, .. }
            | InstanceRecipe::LbSumUnknown { n, num_actions, assignment_seed, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(assignment_seed);
                Some((0..n).map(|_| rng.random_range(0..num_actions.max(1))).collect())
            }
            _ => None,
        }
    }
}

fn check_common(horizon: usize, num_segments: usize, r_max: f64) -> Result<()> {
    if horizon == 0 || num_segments == 0 || !(r_max > 0.0) {
        return Err(Error::InvalidRecipe(format!(
            "need H > 0, m > 0 and r_max > 0 (got H = {horizon}, m = {num_segments}, r_max = {r_max})"
        )));
    }
    Ok(())
}

fn check_epsilon(family: &str, epsilon: f64, upper: f64, upper_inclusive: bool) -> Result<()> {
    // ε = 0 is accepted as the degenerate "all actions equal" member
    let ok = epsilon >= 0.0 && if upper_inclusive { epsilon <= upper } else { epsilon < upper };
    if !ok {
        let close = if upper_inclusive { ']' } else { ')' };
        return Err(Error::InvalidRecipe(format!("{family}: epsilon {epsilon} outside [0, {upper}{close}")));
    }
    Ok(())
}

/// Good/bad pair reached from state `s` in the binary experiment.
fn binary_successors(s: usize) -> (usize, usize) {
    match s {
        0 => (1, 2),
        7 | 8 => (1, 2),
        _ => {
            let layer = s.div_ceil(2); // {1,2} -> 1, {3,4} -> 2, ...
            (2 * layer + 1, 2 * layer + 2)
        }
    }
}

fn good_bad_rows(n_s: usize, n_a: usize, a_star: usize, succ: impl Fn(usize) -> (usize, usize)) -> Vec<f64> {
    let mut probs = vec![0.0; n_s * n_a * n_s];
    for s in 0..n_s {
        let (good, bad) = succ(s);
        for a in 0..n_a {
            let (p_good, p_bad) = if a == a_star { (0.9, 0.1) } else { (0.1, 0.9) };
            let base = (s * n_a + a) * n_s;
            probs[base + good] += p_good;
            probs[base + bad] += p_bad;
        }
    }
    probs
}

/// Builds and validates the instance.
pub fn build(recipe: &InstanceRecipe) -> Result<MdpSpec> {
    let spec = match *recipe {
        InstanceRecipe::BinaryExperiment { horizon, num_segments, r_max, optimal_action } => {
            check_common(horizon, num_segments, r_max)?;
            let (n_s, n_a) = (9, 5);
            if optimal_action >= n_a {
                return Err(Error::InvalidRecipe(format!("optimal_action {optimal_action} >= |A| = {n_a}")));
            }
            let mut reward = vec![0.0; n_s * n_a];
            for s in 1..n_s {
                let r = if s % 2 == 1 { r_max } else { -r_max };
                reward[s * n_a..(s + 1) * n_a].iter_mut().for_each(|x| *x = r);
            }
            let mut init = vec![0.0; n_s];
            init[0] = 1.0;
            MdpSpec {
                num_states: n_s,
                num_actions: n_a,
                horizon,
                num_segments,
                r_max,
                reward,
                transition: Transition::new(n_s, n_a, good_bad_rows(n_s, n_a, optimal_action, binary_successors))?,
                init_dist: init,
            }
        }
        InstanceRecipe::SumExperiment { horizon, num_segments, r_max, optimal_action } => {
            check_common(horizon, num_segments, r_max)?;
            let (n_s, n_a) = (3, 5);
            if optimal_action >= n_a {
                return Err(Error::InvalidRecipe(format!("optimal_action {optimal_action} >= |A| = {n_a}")));
            }
            let mut reward = vec![0.0; n_s * n_a];
            reward[n_a..2 * n_a].iter_mut().for_each(|x| *x = r_max);
            reward[2 * n_a..].iter_mut().for_each(|x| *x = -r_max);
            MdpSpec {
                num_states: n_s,
                num_actions: n_a,
                horizon,
                num_segments,
                r_max,
                reward,
                transition: Transition::new(n_s, n_a, good_bad_rows(n_s, n_a, optimal_action, |_| (1, 2)))?,
                init_dist: vec![1.0, 0.0, 0.0],
            }
        }
        InstanceRecipe::LbBinary { n, num_actions, epsilon, r_max, horizon, num_segments, .. }
        | InstanceRecipe::LbSumKnown { n, num_actions, epsilon, r_max, horizon, num_segments, .. }
        | InstanceRecipe::LbSumUnknown { n, num_actions, epsilon, r_max, horizon, num_segments, .. } => {
            check_common(horizon, num_segments, r_max)?;
            if n == 0 || num_actions == 0 {
                return Err(Error::InvalidRecipe(format!("need n > 0 and |A| > 0 (got n = {n}, |A| = {num_actions})")));
            }
            let family = recipe.family();
            let (good_reward, bad_reward, p_star, p_sub, bandit_star, bandit_sub) = match recipe {
                InstanceRecipe::LbBinary { .. } => {
                    check_epsilon(family, epsilon, 0.5, false)?;
                    let bad = (1.0 - epsilon) * r_max;
                    (r_max, bad, 1.0, 0.0, r_max, bad)
                }
                InstanceRecipe::LbSumKnown { .. } => {
                    check_epsilon(family, epsilon, 0.5, true)?;
                    let good = (0.5 + epsilon) * r_max;
                    (good, 0.5 * r_max, 1.0, 0.0, good, 0.5 * r_max)
                }
                _ => {
                    check_epsilon(family, epsilon, 0.25, false)?;
                    (r_max, 0.0, 0.5 + epsilon, 0.5, 0.0, 0.0)
                }
            };
            let n_s = n + 2;
            let (good, bad) = (n, n + 1);
            let stars = recipe.optimal_actions().expect("lower-bound family");
            let mut reward = vec![0.0; n_s * num_actions];
            let mut probs = vec![0.0; n_s * num_actions * n_s];
            for (i, &a_star) in stars.iter().enumerate() {
                for a in 0..num_actions {
                    let sa = i * num_actions + a;
                    let p = if a == a_star { p_star } else { p_sub };
                    reward[sa] = if a == a_star { bandit_star } else { bandit_sub };
                    probs[sa * n_s + good] = p;
                    probs[sa * n_s + bad] = 1.0 - p;
                }
            }
            for a in 0..num_actions {
                reward[good * num_actions + a] = good_reward;
                reward[bad * num_actions + a] = bad_reward;
                probs[(good * num_actions + a) * n_s + good] = 1.0;
                probs[(bad * num_actions + a) * n_s + bad] = 1.0;
            }
            let mut init = vec![1.0 / n as f64; n];
            init.extend([0.0, 0.0]);
            MdpSpec {
                num_states: n_s,
                num_actions,
                horizon,
                num_segments,
                r_max,
                reward,
                transition: Transition::new(n_s, num_actions, probs)?,
                init_dist: init,
            }
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// The two experiment settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentSetting {
    Binary,
    Sum,
}

pub const FULL_M_GRID: [usize; 9] = [1, 2, 4, 5, 10, 20, 25, 50, 100];

/// Full-scale sweep: `H = 100`, `r_max = 0.5`, `δ = 0.005`, 20 seeds over the
/// `m` grid; `K = 30000` with the binary learners or `K = 1000` with the sum learners.
pub fn full_scale_config(setting: ExperimentSetting) -> ExperimentConfig {
    let (instance, algorithms, episodes) = match setting {
        ExperimentSetting::Binary => (
            InstanceRecipe::BinaryExperiment { horizon: 100, num_segments: 1, r_max: 0.5, optimal_action: 0 },
            vec![Algorithm::Segbits, Algorithm::SegbitsTran],
            30_000,
        ),
        ExperimentSetting::Sum => (
            InstanceRecipe::SumExperiment { horizon: 100, num_segments: 1, r_max: 0.5, optimal_action: 0 },
            vec![Algorithm::Elinucb, Algorithm::LinucbTran],
            1000,
        ),
    };
    ExperimentConfig {
        instance: InstanceSource::Recipe(instance),
        algorithms,
        episodes,
        m_values: FULL_M_GRID.to_vec(),
        seeds: Seeds::Range { base_seed: 0, repeats: 20 },
        delta: 0.005,
        binary: Default::default(),
        sum: Default::default(),
        design: Default::default(),
        policy_cap: crate::mdp::DEFAULT_POLICY_CAP,
        output_dir: None,
        threads: None,
        desk_divisor: 10,
    }
}

/// [`full_scale_config`] with `K` divided by `divisor`; nothing else changes.
pub fn desk_config(setting: ExperimentSetting, divisor: usize) -> Result<ExperimentConfig> {
    if divisor == 0 {
        return Err(Error::InvalidConfig("desk divisor must be positive".into()));
    }
    let mut c = full_scale_config(setting);
    c.desk_divisor = divisor;
    Ok(c.desk())
}
