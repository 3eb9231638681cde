//! Small numerical helpers shared across modules: compensated summation,
//! empirical quantiles and deterministic random substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Neumaier-compensated running sum. Adding the same values in the same
/// order always gives the same bits.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Fold another partial sum in; used when combining per-chunk results in
    /// index order.
    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<NeumaierSum>().value()
}

pub fn mean(values: &[f64]) -> f64 {
    sum(values.iter().copied()) / values.len() as f64
}

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" rule). `sorted` must be sorted ascending and nonempty.
pub fn empirical_quantile(sorted: &[f64], level: f64) -> f64 {
    assert!(!sorted.is_empty(), "empirical quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * level.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Block size for chunked generation: chunk `k` covers indices
/// `k * CHUNK_SIZE .. (k + 1) * CHUNK_SIZE` and draws from substream `k`.
pub const CHUNK_SIZE: usize = 1 << 16;

/// Independent random stream `stream` of the generator seeded by `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `draw` once per index `0..n`; chunk `k` draws from substream `k` of
/// `seed` in index order, so the output does not depend on scheduling.
pub fn chunked<T: Send>(n: usize, seed: u64, draw: impl Fn(&mut ChaCha8Rng) -> T + Sync) -> Vec<T> {
    let chunks = n.div_ceil(CHUNK_SIZE);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, k as u64);
            let len = CHUNK_SIZE.min(n - k * CHUNK_SIZE);
            (0..len).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for part in parts {
        out.extend(part);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn compensated_sum_beats_naive() {
        let values = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(sum(values), 2.0);
    }

    #[test]
    fn type7_quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(empirical_quantile(&xs, 0.0), 1.0);
        assert_eq!(empirical_quantile(&xs, 1.0), 10.0);
        assert!((empirical_quantile(&xs, 0.9) - 9.1).abs() < 1e-12);
        assert_eq!(empirical_quantile(&xs, 0.5), 5.5);
    }

    #[test]
    fn substreams_differ_and_repeat() {
        let a: f64 = substream(1, 0).random();
        let b: f64 = substream(1, 1).random();
        let c: f64 = substream(1, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
