use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binary::BinaryOptions;
use crate::design::{CovarianceMethod, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::instances::{build, InstanceRecipe};
use crate::mdp::{MdpSpec, DEFAULT_POLICY_CAP};
use crate::sum::SumOptions;

/// Learners the harness can drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Segbits,
    SegbitsTran,
    Elinucb,
    LinucbTran,
    /// Plays the optimal policy every episode.
    Oracle,
    /// Draws a uniformly random stationary policy every episode.
    UniformRandom,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Segbits => "segbits",
            Algorithm::SegbitsTran => "segbits_tran",
            Algorithm::Elinucb => "elinucb",
            Algorithm::LinucbTran => "linucb_tran",
            Algorithm::Oracle => "oracle",
            Algorithm::UniformRandom => "uniform_random",
        }
    }

    /// The `δ'` the learner uses for a global `δ`; `None` for the stubs.
    pub fn delta_prime(self, delta: f64) -> Option<f64> {
        match self {
            Algorithm::Segbits => Some(crate::binary::segbits_delta_prime(delta)),
            Algorithm::SegbitsTran => Some(crate::binary::segbits_tran_delta_prime(delta)),
            Algorithm::Elinucb => Some(crate::sum::elinucb_delta_prime(delta)),
            Algorithm::LinucbTran => Some(crate::sum::linucb_tran_delta_prime(delta)),
            Algorithm::Oracle | Algorithm::UniformRandom => None,
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidConfig(format!("unknown algorithm {s:?}")))
    }
}

/// Either a named family or a literal instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    Recipe(InstanceRecipe),
    Spec(MdpSpec),
}

impl InstanceSource {
    /// The instance with `num_segments = m`.
    pub fn build_for(&self, m: usize) -> Result<MdpSpec> {
        let spec = match self {
            InstanceSource::Recipe(r) => build(&r.with_segments(m))?,
            InstanceSource::Spec(s) => s.with_segments(m)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn horizon(&self) -> usize {
        match self {
            InstanceSource::Recipe(r) => r.horizon(),
            InstanceSource::Spec(s) => s.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { base_seed: u64, repeats: u64 },
}

impl Seeds {
    pub fn resolve(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { base_seed, repeats } => (0..*repeats).map(|i| base_seed + i).collect(),
        }
    }
}

/// E-LinUCB design settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub gamma: f64,
    pub covariance: CovarianceMethod,
    /// Reuse solutions stored here (keyed by instance and settings).
    pub cache_dir: Option<PathBuf>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self { gamma: DEFAULT_GAMMA, covariance: CovarianceMethod::Exact, cache_dir: None }
    }
}

fn default_policy_cap() -> u64 {
    DEFAULT_POLICY_CAP
}

fn default_desk_divisor() -> usize {
    10
}

/// One experiment: an instance, the learners and the `(m, seed)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    #[serde(alias = "algorithm", deserialize_with = "one_or_many")]
    pub algorithms: Vec<Algorithm>,
    /// Number of episodes `K`.
    #[serde(alias = "K")]
    pub episodes: usize,
    pub m_values: Vec<usize>,
    pub seeds: Seeds,
    pub delta: f64,
    #[serde(default)]
    pub binary: BinaryOptions,
    #[serde(default)]
    pub sum: SumOptions,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default = "default_policy_cap")]
    pub policy_cap: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; `SEGFEED_THREADS` takes precedence.
    #[serde(default)]
    pub threads: Option<usize>,
    /// `K` is divided by this for `--desk` runs.
    #[serde(default = "default_desk_divisor")]
    pub desk_divisor: usize,
}

fn one_or_many<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<Algorithm>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Algorithm),
        Many(Vec<Algorithm>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(a) => vec![a],
        OneOrMany::Many(v) => v,
    })
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.episodes == 0 {
            return bad("K must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms listed".into());
        }
        if self.m_values.is_empty() {
            return bad("m_values is empty".into());
        }
        if self.seeds.resolve().is_empty() {
            return bad("no seeds".into());
        }
        if self.desk_divisor == 0 {
            return bad("desk_divisor must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        let h = self.instance.horizon();
        for &m in &self.m_values {
            if m == 0 || !h.is_multiple_of(m) {
                return bad(format!("m = {m} does not divide H = {h}"));
            }
        }
        self.instance.build_for(self.m_values[0])?;
        Ok(())
    }

    /// Same experiment with `K` divided by `desk_divisor` (at least 1).
    pub fn desk(&self) -> ExperimentConfig {
        let mut c = self.clone();
        c.episodes = (self.episodes / self.desk_divisor).max(1);
        c
    }

    /// Worker count: `SEGFEED_THREADS`, then `threads`, then rayon's default.
    pub fn resolved_threads(&self) -> Option<usize> {
        std::env::var("SEGFEED_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
            .or(self.threads)
    }
}
