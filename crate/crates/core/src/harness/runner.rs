use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use super::stats::CellSummary;
use crate::binary::{SegBiTS, SegBiTSTran};
use crate::design::{cached_design, DesignSolution};
use crate::error::{Error, Result};
use crate::feedback::{gen_binary_feedback, gen_sum_feedback, FeedbackKind, SegmentFeedback};
use crate::mdp::{
    enumerate_stationary_policies, occupancy, plan_optimal, simulate_episode, MdpSpec, Policy, Trajectory,
};
use crate::rng::{cell_stream, StreamKind};
use crate::sum::{ELinUcb, LinUcbTran};

/// What the episode loop needs from a learner.
pub trait Learner {
    /// Feedback the learner consumes; `None` skips feedback generation.
    fn feedback_kind(&self) -> Option<FeedbackKind>;
    fn select(&mut self, rng: &mut ChaCha20Rng) -> Result<Policy>;
    fn observe(&mut self, traj: &Trajectory, feedback: Option<&SegmentFeedback>) -> Result<()>;
    /// Episodes spent in a fixed initialization phase before adaptive play.
    fn initialization_episodes(&self) -> u64 {
        0
    }
}

fn need(feedback: Option<&SegmentFeedback>) -> Result<&SegmentFeedback> {
    feedback.ok_or_else(|| Error::InvalidConfig("learner requires feedback".into()))
}

impl Learner for SegBiTS {
    fn feedback_kind(&self) -> Option<FeedbackKind> {
        Some(FeedbackKind::Binary)
    }
    fn select(&mut self, rng: &mut ChaCha20Rng) -> Result<Policy> {
        SegBiTS::select(self, rng)
    }
    fn observe(&mut self, traj: &Trajectory, feedback: Option<&SegmentFeedback>) -> Result<()> {
        SegBiTS::observe(self, traj, need(feedback)?)
    }
}

impl Learner for SegBiTSTran {
    fn feedback_kind(&self) -> Option<FeedbackKind> {
        Some(FeedbackKind::Binary)
    }
    fn select(&mut self, rng: &mut ChaCha20Rng) -> Result<Policy> {
        SegBiTSTran::select(self, rng)
    }
    fn observe(&mut self, traj: &Trajectory, feedback: Option<&SegmentFeedback>) -> Result<()> {
        SegBiTSTran::observe(self, traj, need(feedback)?)
    }
}

impl Learner for ELinUcb {
    fn feedback_kind(&self) -> Option<FeedbackKind> {
        Some(FeedbackKind::Sum)
    }
    fn select(&mut self, _rng: &mut ChaCha20Rng) -> Result<Policy> {
        ELinUcb::select(self)
    }
    fn observe(&mut self, traj: &Trajectory, feedback: Option<&SegmentFeedback>) -> Result<()> {
        ELinUcb::observe(self, traj, need(feedback)?)
    }
    fn initialization_episodes(&self) -> u64 {
        self.k0()
    }
}

impl Learner for LinUcbTran {
    fn feedback_kind(&self) -> Option<FeedbackKind> {
        Some(FeedbackKind::Sum)
    }
    fn select(&mut self, _rng: &mut ChaCha20Rng) -> Result<Policy> {
        LinUcbTran::select(self)
    }
    fn observe(&mut self, traj: &Trajectory, feedback: Option<&SegmentFeedback>) -> Result<()> {
        LinUcbTran::observe(self, traj, need(feedback)?)
    }
}

/// Always plays the given policy.
#[derive(Debug, Clone)]
pub struct FixedPolicy(pub Policy);

impl Learner for FixedPolicy {
    fn feedback_kind(&self) -> Option<FeedbackKind> {
        None
    }
    fn select(&mut self, _rng: &mut ChaCha20Rng) -> Result<Policy> {
        Ok(self.0.clone())
    }
    fn observe(&mut self, _traj: &Trajectory, _feedback: Option<&SegmentFeedback>) -> Result<()> {
        Ok(())
    }
}

/// A fresh uniformly random stationary policy every episode.
#[derive(Debug, Clone)]
pub struct UniformRandom {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
}

impl Learner for UniformRandom {
    fn feedback_kind(&self) -> Option<FeedbackKind> {
        None
    }
    fn select(&mut self, rng: &mut ChaCha20Rng) -> Result<Policy> {
        let actions = (0..self.num_states).map(|_| rng.random_range(0..self.num_actions)).collect();
        Ok(Policy::stationary(self.horizon, actions))
    }
    fn observe(&mut self, _traj: &Trajectory, _feedback: Option<&SegmentFeedback>) -> Result<()> {
        Ok(())
    }
}

/// Regret curve of one `(algorithm, m, seed)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub algorithm: Algorithm,
    pub m: usize,
    pub seed: u64,
    /// `V* - V^{π^k}` for `k = 1..K`.
    pub instant: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub wall_time_s: f64,
    /// Episodes of the fixed initialization phase, already included in the curves.
    pub initialization_episodes: u64,
}

impl RegretRecord {
    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// Plays `episodes` episodes of `learner` on `spec` and returns the instantaneous
/// and cumulative expected regret. Draws come from the `(seed, m)` streams.
pub fn run_with_learner(
    spec: &MdpSpec,
    learner: &mut dyn Learner,
    episodes: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = spec.num_segments;
    let theta_star = DVector::from_column_slice(&spec.reward);
    // evaluate π* the same way as the played policies so the oracle's regret is exactly zero
    let (pi_star, _) = plan_optimal(&spec.transition, &spec.init_dist, &spec.reward, spec.horizon);
    let v_star = occupancy(&spec.transition, &spec.init_dist, &pi_star, spec.horizon).dot(&theta_star);
    let mut env = cell_stream(seed, m, StreamKind::Environment);
    let mut alg = cell_stream(seed, m, StreamKind::Algorithm);
    let mut instant = Vec::with_capacity(episodes);
    let mut cumulative = Vec::with_capacity(episodes);
    let mut total = 0.0;
    for k in 1..=episodes {
        let mut step = || -> Result<f64> {
            let policy = learner.select(&mut alg)?;
            policy.validate(spec.num_actions)?;
            let value = occupancy(&spec.transition, &spec.init_dist, &policy, spec.horizon).dot(&theta_star);
            let traj = simulate_episode(spec, &policy, &mut env);
            let feedback = match learner.feedback_kind() {
                Some(FeedbackKind::Binary) => Some(gen_binary_feedback(&traj, &theta_star, m, &mut env)?),
                Some(FeedbackKind::Sum) => Some(gen_sum_feedback(&traj, &theta_star, m, &mut env)?),
                None => None,
            };
            learner.observe(&traj, feedback.as_ref())?;
            Ok(v_star - value)
        };
        let r = step().map_err(|e| e.at_episode(k))?;
        total += r;
        instant.push(r);
        cumulative.push(total);
    }
    Ok((instant, cumulative))
}

/// Per-`m` artefacts shared by every seed of a sweep. Setup failures are kept
/// as messages so only the algorithms that need the artefact fail.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: MdpSpec,
    pub design: Option<std::result::Result<DesignSolution, String>>,
    pub policies: Option<std::result::Result<Vec<Policy>, String>>,
}

/// Builds the instance for `m` and whatever the listed algorithms need up front.
pub fn prepare(config: &ExperimentConfig, m: usize) -> Result<Prepared> {
    let spec = config.instance.build_for(m)?;
    let design = config.algorithms.contains(&Algorithm::Elinucb).then(|| {
        let delta_prime = Algorithm::Elinucb.delta_prime(config.delta).expect("learner");
        cached_design(
            &spec,
            config.policy_cap,
            config.design.gamma,
            delta_prime,
            config.design.covariance,
            config.design.cache_dir.as_deref(),
        )
        .map_err(|e| e.to_string())
    });
    let policies = config.algorithms.contains(&Algorithm::LinucbTran).then(|| {
        enumerate_stationary_policies(spec.num_states, spec.num_actions, spec.horizon, config.policy_cap)
            .map_err(|e| e.to_string())
    });
    Ok(Prepared { spec, design, policies })
}

fn prepared<'a, T>(item: &'a Option<std::result::Result<T, String>>, what: &str) -> Result<&'a T> {
    match item {
        Some(Ok(x)) => Ok(x),
        Some(Err(e)) => Err(Error::InvalidConfig(format!("{what}: {e}"))),
        None => Err(Error::InvalidConfig(format!("{what} not prepared"))),
    }
}

fn make_learner(config: &ExperimentConfig, algorithm: Algorithm, prep: &Prepared) -> Result<Box<dyn Learner>> {
    let spec = &prep.spec;
    Ok(match algorithm {
        Algorithm::Segbits => Box::new(SegBiTS::new(spec, config.delta, config.binary)?),
        Algorithm::SegbitsTran => Box::new(SegBiTSTran::new(spec, config.delta, config.episodes, config.binary)?),
        Algorithm::Elinucb => {
            let design = prepared(&prep.design, "design")?;
            Box::new(ELinUcb::new(spec, config.delta, design, &config.sum)?)
        }
        Algorithm::LinucbTran => {
            let policies = prepared(&prep.policies, "policy class")?.clone();
            Box::new(LinUcbTran::new(spec, config.delta, config.episodes, policies, &config.sum)?)
        }
        Algorithm::Oracle => {
            let (pi, _) = plan_optimal(&spec.transition, &spec.init_dist, &spec.reward, spec.horizon);
            Box::new(FixedPolicy(pi))
        }
        Algorithm::UniformRandom => Box::new(UniformRandom {
            num_states: spec.num_states,
            num_actions: spec.num_actions,
            horizon: spec.horizon,
        }),
    })
}

fn run_prepared(config: &ExperimentConfig, algorithm: Algorithm, prep: &Prepared, seed: u64) -> Result<RegretRecord> {
    let start = Instant::now();
    let mut learner = make_learner(config, algorithm, prep)?;
    let (instant, cumulative) = run_with_learner(&prep.spec, learner.as_mut(), config.episodes, seed)?;
    Ok(RegretRecord {
        algorithm,
        m: prep.spec.num_segments,
        seed,
        instant,
        cumulative,
        wall_time_s: start.elapsed().as_secs_f64(),
        initialization_episodes: learner.initialization_episodes().min(config.episodes as u64),
    })
}

/// One `(algorithm, m, seed)` cell, fully determined by its arguments.
pub fn run_single(config: &ExperimentConfig, algorithm: Algorithm, m: usize, seed: u64) -> Result<RegretRecord> {
    config.validate()?;
    let mut cfg = config.clone();
    cfg.algorithms = vec![algorithm];
    run_prepared(&cfg, algorithm, &prepare(&cfg, m)?, seed)
}

/// A cell that failed, kept in the summary instead of aborting the sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub algorithm: Algorithm,
    pub m: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SweepResult {
    /// Sorted by `(algorithm, m, seed)`.
    pub records: Vec<RegretRecord>,
    pub failures: Vec<CellFailure>,
    pub cells: BTreeMap<String, CellSummary>,
}

impl SweepResult {
    pub fn cell(&self, algorithm: Algorithm, m: usize) -> Option<&CellSummary> {
        self.cells.get(&cell_key(algorithm, m))
    }
}

pub fn cell_key(algorithm: Algorithm, m: usize) -> String {
    format!("{algorithm}/m={m}")
}

/// Runs every `(algorithm, m, seed)` cell on a worker pool and aggregates per `(algorithm, m)`.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = config.resolved_threads() {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
    };
    let seeds = config.seeds.resolve();
    pool.install(|| {
        let prepared: Vec<(usize, std::result::Result<Prepared, String>)> =
            config.m_values.par_iter().map(|&m| (m, prepare(config, m).map_err(|e| e.to_string()))).collect();
        let mut jobs = Vec::new();
        for &algorithm in &config.algorithms {
            for (m, prep) in &prepared {
                for &seed in &seeds {
                    jobs.push((algorithm, *m, prep, seed));
                }
            }
        }
        let outcomes: Vec<std::result::Result<RegretRecord, CellFailure>> = jobs
            .into_par_iter()
            .map(|(algorithm, m, prep, seed)| {
                let fail = |error: String| CellFailure { algorithm, m, seed, error };
                match prep {
                    Ok(p) => run_prepared(config, algorithm, p, seed).map_err(|e| fail(e.to_string())),
                    Err(e) => Err(fail(format!("setup for m = {m}: {e}"))),
                }
            })
            .collect();
        let mut result = SweepResult::default();
        for o in outcomes {
            match o {
                Ok(r) => result.records.push(r),
                Err(f) => result.failures.push(f),
            }
        }
        result.records.sort_by_key(|a| (a.algorithm, a.m, a.seed));
        result.failures.sort_by_key(|a| (a.algorithm, a.m, a.seed));
        result.cells = summarize(&result.records);
        Ok(result)
    })
}

/// Per-`(algorithm, m)` statistics of the final cumulative regret, in record order.
pub fn summarize(records: &[RegretRecord]) -> BTreeMap<String, CellSummary> {
    let mut groups: BTreeMap<String, (Vec<f64>, f64)> = BTreeMap::new();
    for r in records {
        let e = groups.entry(cell_key(r.algorithm, r.m)).or_default();
        e.0.push(r.final_regret());
        e.1 += r.wall_time_s;
    }
    groups.into_iter().map(|(k, (finals, wall))| (k, CellSummary::from_values(&finals, wall))).collect()
}
