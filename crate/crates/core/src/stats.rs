//! Binomial confidence intervals.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided normal quantile for a 95% interval.
pub fn z95() -> f64 {
    Normal::standard().inverse_cdf(0.975)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(x: f64) -> Self {
        Interval {
            estimate: x,
            lo: x,
            hi: x,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> Interval {
    assert!(trials > 0 && successes <= trials);
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // the endpoints are exact at 0 and 1; rounding must not push them past the estimate
    Interval {
        estimate: phat,
        lo: if successes == 0 { 0.0 } else { (center - half).clamp(0.0, phat) },
        hi: if successes == trials { 1.0 } else { (center + half).clamp(phat, 1.0) },
    }
}

pub fn wilson95(successes: u64, trials: u64) -> Interval {
    wilson_interval(successes, trials, z95())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert!((z95() - 1.959963984540054).abs() < 1e-9);
        // 50 of 100: center 0.5, half-width 1.96·sqrt(0.25/100 + z²/40000)/(1 + z²/100)
        let i = wilson95(50, 100);
        assert!((i.lo - 0.403831).abs() < 1e-5 && (i.hi - 0.596169).abs() < 1e-5);
        let zero = wilson95(0, 100);
        assert_eq!(zero.lo, 0.0);
        assert!((zero.hi - 0.036994).abs() < 1e-5);
        let all = wilson95(100, 100);
        assert_eq!(all.hi, 1.0);
        assert!(all.lo > 0.96);
    }

    proptest! {
        #[test]
        fn contains_estimate(n in 1u64..5000, frac in 0.0f64..=1.0) {
            let s = (frac * n as f64).floor() as u64;
            let i = wilson95(s, n);
            prop_assert!(0.0 <= i.lo && i.lo <= i.estimate);
            prop_assert!(i.estimate <= i.hi && i.hi <= 1.0);
        }
    }
}
