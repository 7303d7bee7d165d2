use serde::{Deserialize, Serialize};

/// Two-sided 97.5% standard normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Seed statistics of the final cumulative regret of one `(algorithm, m)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator, 0 for one seed).
    pub std: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub n_seeds: usize,
    pub wall_time_s: f64,
}

impl CellSummary {
    /// Normal-approximation interval `mean ± z·std/√n`.
    pub fn from_values(values: &[f64], wall_time_s: f64) -> Self {
        let n = values.len();
        let mean = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        let half = if n == 0 { 0.0 } else { Z_975 * std / (n as f64).sqrt() };
        CellSummary { mean, std, ci95_low: mean - half, ci95_high: mean + half, n_seeds: n, wall_time_s }
    }
}
