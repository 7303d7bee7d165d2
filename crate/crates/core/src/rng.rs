//! Random streams and the Gaussian noise source used by the learners.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Purpose tags for the independent streams inside one experiment cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Environment = 0,
    Algorithm = 1,
}

/// Counter-based generator for one `(seed, m, purpose)` triple.
///
/// The stream id only depends on the cell's coordinates, so the draws of a
/// cell do not depend on which thread runs it or in what order.
pub fn cell_stream(seed: u64, num_segments: usize, kind: StreamKind) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((num_segments as u64) << 8) | kind as u64);
    rng
}

/// A source of i.i.d. standard normal draws.
pub trait NormalSource {
    fn standard_normal(&mut self) -> f64;
}

impl<R: Rng + ?Sized> NormalSource for R {
    fn standard_normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }
}

/// Test hook: a "noise" source that always returns zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NormalSource for ZeroNoise {
    fn standard_normal(&mut self) -> f64 {
        0.0
    }
}

/// Inverse-CDF draw from a finite distribution given as probabilities.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the total mass: fall back to the last supported outcome
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
