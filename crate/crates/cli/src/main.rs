use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use segfeed::design::{cached_design, CovarianceMethod, DEFAULT_GAMMA};
use segfeed::harness::{emit_results, run_single, run_sweep, summarize, Algorithm, ExperimentConfig, SweepResult};
use segfeed::instances::{build, desk_config, full_scale_config, ExperimentSetting, InstanceRecipe};
use segfeed::mdp::DEFAULT_POLICY_CAP;
use segfeed::MdpSpec;

#[derive(Parser)]
#[command(name = "segfeed", version, about = "Regret experiments for RL with segment feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Setting {
    Binary,
    Sum,
}

#[derive(Subcommand)]
enum Command {
    /// Run one (algorithm, m, seed) cell; defaults to the first of each in the config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        algorithm: Option<String>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every (algorithm, m, seed) cell of the config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Divide K by the config's desk_divisor.
        #[arg(long)]
        desk: bool,
    },
    /// Check an instance file.
    Validate {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Solve and round the E-optimal design for an instance.
    Design {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.005)]
        delta: f64,
        #[arg(long, default_value_t = DEFAULT_GAMMA)]
        gamma: f64,
        #[arg(long, default_value_t = DEFAULT_POLICY_CAP)]
        policy_cap: u64,
        /// Reuse or store the solution in this directory.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Build an instance from a recipe file and write it as instance JSON.
    ExportInstance {
        #[arg(long)]
        recipe: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the full-scale (or desk-scaled) experiment config.
    Preset {
        #[arg(long, value_enum)]
        setting: Setting,
        #[arg(long)]
        out: PathBuf,
        /// Divide K by this.
        #[arg(long)]
        desk: Option<usize>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn report(result: &SweepResult) {
    for (cell, s) in &result.cells {
        println!(
            "{cell}: mean {:.4} std {:.4} ci95 [{:.4}, {:.4}] n={} ({:.1}s)",
            s.mean, s.std, s.ci95_low, s.ci95_high, s.n_seeds, s.wall_time_s
        );
    }
    for f in &result.failures {
        eprintln!("failed {}/m={} seed {}: {}", f.algorithm, f.m, f.seed, f.error);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, algorithm, m, seed } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let algorithm = match algorithm {
                Some(a) => a.parse::<Algorithm>()?,
                None => cfg.algorithms[0],
            };
            let m = m.unwrap_or(cfg.m_values[0]);
            let seed = seed.unwrap_or(cfg.seeds.resolve()[0]);
            let record = run_single(&cfg, algorithm, m, seed)?;
            let mut single = cfg.clone();
            single.algorithms = vec![algorithm];
            single.m_values = vec![m];
            single.seeds = segfeed::harness::Seeds::List(vec![seed]);
            let result = SweepResult {
                cells: summarize(std::slice::from_ref(&record)),
                records: vec![record],
                failures: vec![],
            };
            emit_results(&result, &single, &out)?;
            report(&result);
        }
        Command::Sweep { config, out, desk } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if desk {
                cfg = cfg.desk();
            }
            let result = run_sweep(&cfg)?;
            emit_results(&result, &cfg, &out)?;
            report(&result);
            if !result.failures.is_empty() {
                bail!("{} cell(s) failed; see summary.json", result.failures.len());
            }
        }
        Command::Validate { spec } => {
            let s: MdpSpec = read_json(&spec)?;
            s.validate()?;
            println!(
                "{}: ok (|S| = {}, |A| = {}, H = {}, m = {})",
                spec.display(),
                s.num_states,
                s.num_actions,
                s.horizon,
                s.num_segments
            );
        }
        Command::Design { spec, m, out, delta, gamma, policy_cap, cache_dir } => {
            let s: MdpSpec = read_json(&spec)?;
            let s = s.with_segments(m)?;
            let delta_prime = Algorithm::Elinucb.delta_prime(delta).expect("learner");
            let sol = cached_design(&s, policy_cap, gamma, delta_prime, CovarianceMethod::Exact, cache_dir.as_deref())?;
            write_json(&sol, &out)?;
            println!(
                "|Pi| = {}, lambda_min = {:.6e}, gap = {:.2e}, K0 = {}",
                sol.policies.len(),
                sol.lambda_min,
                sol.duality_gap,
                sol.k0
            );
        }
        Command::ExportInstance { recipe, out } => {
            let r: InstanceRecipe = read_json(&recipe)?;
            write_json(&build(&r)?, &out)?;
        }
        Command::Preset { setting, out, desk } => {
            let setting = match setting {
                Setting::Binary => ExperimentSetting::Binary,
                Setting::Sum => ExperimentSetting::Sum,
            };
            let cfg = match desk {
                Some(d) => desk_config(setting, d)?,
                None => full_scale_config(setting),
            };
            write_json(&cfg, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
