use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use super::runner::{cell_key, CellFailure, RegretRecord, SweepResult};
use super::stats::CellSummary;
use crate::binary::BinaryOptions;
use crate::error::{Error, Result};
use crate::sum::{elinucb_lambda, linucb_tran_lambda};

pub const CURVES_HEADER: [&str; 5] = ["algorithm", "m", "seed", "episode", "cum_regret"];

/// One line of `curves.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub algorithm: Algorithm,
    pub m: usize,
    pub seed: u64,
    pub episode: usize,
    pub cum_regret: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Malformed { path: path.to_path_buf(), msg: format!("{other:?}") },
    }
}

/// Writes the per-episode cumulative regret of every record, 17 significant digits.
pub fn write_curves(records: &[RegretRecord], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(CURVES_HEADER).map_err(|e| csv_err(path, e))?;
    for r in records {
        let (alg, m, seed) = (r.algorithm.name(), r.m.to_string(), r.seed.to_string());
        for (k, c) in r.cumulative.iter().enumerate() {
            w.write_record([alg, &m, &seed, &(k + 1).to_string(), &format!("{c:.16e}")])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curves(path: &Path) -> Result<Vec<CurveRow>> {
    let mut r = csv::ReaderBuilder::new().from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(CURVES_HEADER) {
        return Err(Error::Malformed { path: path.to_path_buf(), msg: format!("unexpected header {header:?}") });
    }
    let malformed =
        |line: u64, msg: String| Error::Malformed { path: path.to_path_buf(), msg: format!("line {line}: {msg}") };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field =
            |i: usize| rec.get(i).ok_or_else(|| malformed(line, format!("missing column {}", CURVES_HEADER[i])));
        rows.push(CurveRow {
            algorithm: field(0)?.parse().map_err(|e: Error| malformed(line, e.to_string()))?,
            m: field(1)?.parse().map_err(|e| malformed(line, format!("{e}")))?,
            seed: field(2)?.parse().map_err(|e| malformed(line, format!("{e}")))?,
            episode: field(3)?.parse().map_err(|e| malformed(line, format!("{e}")))?,
            cum_regret: field(4)?.parse().map_err(|e| malformed(line, format!("{e}")))?,
        });
    }
    Ok(rows)
}

/// Cell statistics rebuilt from curve rows: the last episode of each `(algorithm, m, seed)`.
/// Wall time is not part of the curves and comes back as 0.
pub fn recompute_summary(rows: &[CurveRow]) -> BTreeMap<String, CellSummary> {
    let mut finals: BTreeMap<(Algorithm, usize, u64), (usize, f64)> = BTreeMap::new();
    for r in rows {
        let e = finals.entry((r.algorithm, r.m, r.seed)).or_insert((0, 0.0));
        if r.episode >= e.0 {
            *e = (r.episode, r.cum_regret);
        }
    }
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((alg, m, _), (_, v)) in finals {
        groups.entry(cell_key(alg, m)).or_default().push(v);
    }
    groups.into_iter().map(|(k, v)| (k, CellSummary::from_values(&v, 0.0))).collect()
}

/// Layout of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub cells: BTreeMap<String, CellSummary>,
    pub failures: Vec<CellFailure>,
    /// E-LinUCB's design episodes are part of its curves.
    pub initialization_episodes_included: bool,
    pub initialization_episodes: BTreeMap<String, u64>,
}

#[derive(Serialize)]
struct Resolved {
    seeds: Vec<u64>,
    threads: Option<usize>,
    delta_prime: BTreeMap<&'static str, f64>,
    /// Ridge weight per algorithm and `m`.
    lambda: BTreeMap<&'static str, BTreeMap<usize, f64>>,
    binary: BinaryOptions,
}

fn resolve(config: &ExperimentConfig) -> Result<Resolved> {
    let mut delta_prime = BTreeMap::new();
    let mut lambda: BTreeMap<&'static str, BTreeMap<usize, f64>> = BTreeMap::new();
    for &alg in &config.algorithms {
        if let Some(d) = alg.delta_prime(config.delta) {
            delta_prime.insert(alg.name(), d);
        }
        for &m in &config.m_values {
            let spec = config.instance.build_for(m)?;
            let l = match alg {
                Algorithm::Segbits | Algorithm::SegbitsTran => config.binary.lambda,
                Algorithm::Elinucb => config.sum.lambda.unwrap_or_else(|| elinucb_lambda(spec.horizon, spec.r_max, m)),
                Algorithm::LinucbTran => config.sum.lambda.unwrap_or_else(|| linucb_tran_lambda(spec.horizon, m)),
                Algorithm::Oracle | Algorithm::UniformRandom => continue,
            };
            lambda.entry(alg.name()).or_default().insert(m, l);
        }
    }
    Ok(Resolved {
        seeds: config.seeds.resolve(),
        threads: config.resolved_threads(),
        delta_prime,
        lambda,
        binary: config.binary,
    })
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `curves.csv`, `summary.json` and `config.json` into `out_dir`.
pub fn emit_results(result: &SweepResult, config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_curves(&result.records, &out_dir.join("curves.csv"))?;
    let mut init = BTreeMap::new();
    for r in &result.records {
        if r.initialization_episodes > 0 {
            init.insert(cell_key(r.algorithm, r.m), r.initialization_episodes);
        }
    }
    let summary = SummaryFile {
        cells: result.cells.clone(),
        failures: result.failures.clone(),
        initialization_episodes_included: true,
        initialization_episodes: init,
    };
    write_json(&summary, &out_dir.join("summary.json"))?;
    let echo = serde_json::json!({ "config": config, "resolved": resolve(config)? });
    write_json(&echo, &out_dir.join("config.json"))
}
