//! Small numeric helpers shared by the exact enumerators.

use rayon::prelude::*;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// `ln Σ exp(x_i)` with a max shift. Empty input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s = compensated_sum(values.iter().map(|v| (v - max).exp()));
    max + s.ln()
}

/// Natural log of the binomial coefficient, `-inf` when `k > n`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        f64::NEG_INFINITY
    } else {
        statrs::function::factorial::ln_binomial(n, k)
    }
}

/// Per-task seed: the SplitMix64 output at position `index + 1` of the
/// stream started at `master`. Tasks get independent seeds regardless of
/// which thread runs them.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fixed-size chunks over `0..len`, so parallel partial sums are combined
/// in the same order on every run whatever the thread count.
pub(crate) const CHUNK: usize = 1 << 12;

/// Maps `0..len` in fixed chunks on the rayon pool and folds the per-chunk
/// results left to right.
pub(crate) fn par_chunked<T, F, G>(len: usize, init: G, f: F) -> Vec<T>
where
    T: Send,
    G: Fn() -> T + Sync + Send,
    F: Fn(&mut T, usize) + Sync + Send,
{
    let chunks = len.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for i in c * CHUNK..((c + 1) * CHUNK).min(len) {
                f(&mut acc, i);
            }
            acc
        })
        .collect()
}
