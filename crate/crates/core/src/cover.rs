//! Cover probability `P(∃A ∈ supp π : A ⊆ V)` under `V ~ Q_p`, and sweeps
//! of it over a grid of `p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::numeric::{derive_seed, CompensatedSum};
use crate::planted::BiasedSampler;
use crate::spread::max_spread_factor;
use crate::stats::{wilson95, Interval};

/// Largest support size for the inclusion–exclusion path.
pub const MAX_INCLUSION_EXCLUSION: usize = 20;

/// Fewest replicates accepted for a Monte Carlo estimate.
pub const MIN_REPLICATES: usize = 100;

/// The cover level the sweep looks for.
pub const TARGET: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverMethod {
    Enumeration,
    InclusionExclusion,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoverEstimate {
    pub p: f64,
    pub method: CoverMethod,
    /// Exact value, or the Wilson 95% interval around the sample frequency.
    pub interval: Interval,
    pub replicates: Option<usize>,
}

impl CoverEstimate {
    pub fn estimate(&self) -> f64 {
        self.interval.estimate
    }
}

fn validate_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("p must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Exact cover probability: over all `2^N` sets when `N` is within the
/// enumeration budget, else by inclusion–exclusion over at most 20 members.
pub fn cover_probability_exact(m: &DiscreteMeasure, p: f64, budget: &Budget) -> Result<CoverEstimate> {
    validate_p(p)?;
    let n = m.universe().size();
    let (value, method) = if n <= budget.enumeration_bits.min(30) as usize {
        (by_enumeration(m, p), CoverMethod::Enumeration)
    } else if m.support_size() <= MAX_INCLUSION_EXCLUSION {
        (by_inclusion_exclusion(m, p), CoverMethod::InclusionExclusion)
    } else {
        return Err(Error::capacity(
            "exact cover probability",
            1u128 << n.min(127),
            1u128 << budget.enumeration_bits,
        ));
    };
    Ok(CoverEstimate {
        p,
        method,
        interval: Interval::point(value.clamp(0.0, 1.0)),
        replicates: None,
    })
}

/// Marks every superset of a member, then sums `Q_p` by set size.
fn by_enumeration(m: &DiscreteMeasure, p: f64) -> f64 {
    let n = m.universe().size();
    let mut up = vec![false; 1 << n];
    for a in m.members() {
        up[a.bits() as usize] = true;
    }
    for bit in 0..n {
        let b = 1usize << bit;
        for mask in 0..up.len() {
            if mask & b == 0 && up[mask] {
                up[mask | b] = true;
            }
        }
    }
    let mut by_size = vec![0u64; n + 1];
    for (mask, &covered) in up.iter().enumerate() {
        if covered {
            by_size[mask.count_ones() as usize] += 1;
        }
    }
    by_size
        .iter()
        .enumerate()
        .map(|(j, &c)| c as f64 * p.powi(j as i32) * (1.0 - p).powi((n - j) as i32))
        .collect::<CompensatedSum>()
        .value()
}

/// `Σ_{∅ ≠ S} (−1)^{|S|+1} p^{|∪S|}` over subsets `S` of the support.
fn by_inclusion_exclusion(m: &DiscreteMeasure, p: f64) -> f64 {
    let members = m.members();
    let mut sum = CompensatedSum::new();
    let mut unions = vec![0u128; 1 << members.len()];
    for s in 1usize..unions.len() {
        let low = s.trailing_zeros() as usize;
        unions[s] = unions[s & (s - 1)] | members[low].bits();
        let sign = if s.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        sum.add(sign * p.powi(unions[s].count_ones() as i32));
    }
    sum.value()
}

/// Monte Carlo estimate with a Wilson 95% interval.
pub fn cover_probability_mc<R: Rng + ?Sized>(
    m: &DiscreteMeasure,
    p: f64,
    replicates: usize,
    rng: &mut R,
) -> Result<CoverEstimate> {
    validate_p(p)?;
    if replicates < MIN_REPLICATES {
        return Err(Error::invalid(format!(
            "Monte Carlo needs at least {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    let noise = BiasedSampler::with_boundary(m.universe(), p)?;
    let hits = (0..replicates)
        .filter(|_| {
            let v = noise.sample(rng).bits();
            m.members().iter().any(|a| a.bits() & !v == 0)
        })
        .count();
    Ok(CoverEstimate {
        p,
        method: CoverMethod::MonteCarlo,
        interval: wilson95(hits as u64, replicates as u64),
        replicates: Some(replicates),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum CoverMode {
    Exact,
    MonteCarlo { replicates: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Censoring {
    None,
    /// Already at the target at the first grid point.
    Left,
    /// Never reaches the target on the grid.
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub points: Vec<CoverEstimate>,
    /// Interpolated `p` where the cover probability reaches 0.9.
    pub p_cross: Option<f64>,
    pub censoring: Censoring,
    pub max_spread_factor: Option<f64>,
    pub k: usize,
    /// `p_cross · R* / ln k`.
    pub normalized: Option<f64>,
}

/// Cover probability at each grid point; grid point `i` in Monte Carlo mode
/// uses the seed `derive_seed(seed, i)`.
pub fn threshold_sweep(m: &DiscreteMeasure, grid: &[f64], mode: CoverMode, budget: &Budget) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::invalid("empty p grid"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("p grid must be strictly increasing"));
    }
    let points: Vec<CoverEstimate> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &p)| match mode {
            CoverMode::Exact => cover_probability_exact(m, p, budget),
            CoverMode::MonteCarlo { replicates, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
                cover_probability_mc(m, p, replicates, &mut rng)
            }
        })
        .collect::<Result<_>>()?;
    let (p_cross, censoring) = crossing(&points);
    let rstar = match max_spread_factor(m, budget) {
        Ok(rep) => Some(rep.max_spread_factor),
        Err(Error::UnboundedSpread) => None,
        Err(e) => return Err(e),
    };
    let k = m.max_size();
    let normalized = match (p_cross, rstar) {
        (Some(pc), Some(r)) if k >= 2 => Some(pc * r / (k as f64).ln()),
        _ => None,
    };
    Ok(SweepResult {
        points,
        p_cross,
        censoring,
        max_spread_factor: rstar,
        k,
        normalized,
    })
}

/// First crossing of the running maximum, interpolated linearly between the
/// bracketing grid points.
fn crossing(points: &[CoverEstimate]) -> (Option<f64>, Censoring) {
    let mut hull = Vec::with_capacity(points.len());
    let mut best = f64::NEG_INFINITY;
    for pt in points {
        best = best.max(pt.estimate());
        hull.push(best);
    }
    match hull.iter().position(|&v| v >= TARGET) {
        None => (None, Censoring::Right),
        Some(0) => (Some(points[0].p), Censoring::Left),
        Some(i) => {
            let (p0, p1) = (points[i - 1].p, points[i].p);
            let (v0, v1) = (hull[i - 1], hull[i]);
            (Some(p0 + (TARGET - v0) / (v1 - v0) * (p1 - p0)), Censoring::None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{k_uniform_family, perfect_matchings};
    use crate::setcore::{SetFamily, Universe};
    use num_rational::Ratio;

    fn pairs_of_four() -> DiscreteMeasure {
        k_uniform_family(4, 2, false, &Budget::default())
            .unwrap()
            .measure()
            .unwrap()
            .clone()
    }

    /// `1 − (1−p)^4 − 4p(1−p)^3`.
    fn pairs_of_four_exact(p: f64) -> f64 {
        1.0 - (1.0 - p).powi(4) - 4.0 * p * (1.0 - p).powi(3)
    }

    #[test]
    fn pairs_of_four_at_half() {
        let m = pairs_of_four();
        let e = cover_probability_exact(&m, 0.5, &Budget::default()).unwrap();
        assert_eq!(e.method, CoverMethod::Enumeration);
        assert!((e.estimate() - 11.0 / 16.0).abs() < 1e-12);
        let ie = by_inclusion_exclusion(&m, 0.5);
        assert!((ie - 11.0 / 16.0).abs() < 1e-12);
    }

    // The same probability in exact rationals: count the sets of size >= 2.
    #[test]
    fn pairs_of_four_rational() {
        let covered: i64 = (0u32..16).filter(|v| v.count_ones() >= 2).count() as i64;
        assert_eq!(Ratio::new(covered, 16), Ratio::new(11, 16));
    }

    #[test]
    fn boundary_p() {
        let b = Budget::default();
        let m = pairs_of_four();
        assert_eq!(cover_probability_exact(&m, 1.0, &b).unwrap().estimate(), 1.0);
        assert_eq!(cover_probability_exact(&m, 0.0, &b).unwrap().estimate(), 0.0);
        let x = Universe::new(3).unwrap();
        let with_empty = DiscreteMeasure::uniform(SetFamily::new(x, vec![x.empty(), x.full()]).unwrap()).unwrap();
        assert_eq!(cover_probability_exact(&with_empty, 0.0, &b).unwrap().estimate(), 1.0);
        assert!(cover_probability_exact(&m, 1.5, &b).is_err());
    }

    #[test]
    fn enumeration_and_inclusion_exclusion_agree() {
        let b = Budget::default();
        let m = perfect_matchings(6).unwrap().measure().clone();
        for p in [0.1, 0.35, 0.8] {
            let e = by_enumeration(&m, p);
            let ie = by_inclusion_exclusion(&m, p);
            assert!((e - ie).abs() < 1e-12, "{e} vs {ie}");
        }
        let k8 = perfect_matchings(8).unwrap();
        let tight = Budget {
            enumeration_bits: 20,
            ..b
        };
        assert!(matches!(
            cover_probability_exact(k8.measure(), 0.5, &tight),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn inclusion_exclusion_path_for_wide_universe() {
        let x = Universe::new(40).unwrap();
        let members = vec![x.subset(&[0, 1]).unwrap(), x.subset(&[1, 39]).unwrap()];
        let m = DiscreteMeasure::uniform(SetFamily::new(x, members).unwrap()).unwrap();
        let e = cover_probability_exact(&m, 0.5, &Budget::default()).unwrap();
        assert_eq!(e.method, CoverMethod::InclusionExclusion);
        assert!((e.estimate() - (0.25 + 0.25 - 0.125)).abs() < 1e-15);
    }

    #[test]
    fn mc_agrees_with_exact() {
        let b = Budget::default();
        let m = perfect_matchings(6).unwrap().measure().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in [0.2, 0.5, 0.7] {
            let exact = cover_probability_exact(&m, p, &b).unwrap().estimate();
            let mc = cover_probability_mc(&m, p, 20_000, &mut rng).unwrap();
            // 4σ band, so three points do not fail one run in seven as a 95% interval would
            let sd = (exact * (1.0 - exact) / 20_000.0).sqrt();
            assert!((mc.estimate() - exact).abs() < 4.0 * sd, "{p}: {mc:?} vs {exact}");
        }
        assert!(cover_probability_mc(&m, 0.5, 99, &mut rng).is_err());
    }

    #[test]
    fn sweep_matches_exact_crossing() {
        let m = pairs_of_four();
        let grid: Vec<f64> = (1..20).map(|i| i as f64 * 0.05).collect();
        let s = threshold_sweep(&m, &grid, CoverMode::Exact, &Budget::default()).unwrap();
        let root = 0.679_539_416_278_181_6;
        assert!((pairs_of_four_exact(root) - 0.9).abs() < 1e-12);
        assert_eq!(s.censoring, Censoring::None);
        assert!((s.p_cross.unwrap() - root).abs() < 0.05);
        assert!((s.max_spread_factor.unwrap() - 2.0).abs() < 1e-12);
        assert!((s.normalized.unwrap() - s.p_cross.unwrap() * 2.0 / 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sweep_censoring() {
        let m = pairs_of_four();
        let b = Budget::default();
        let s = threshold_sweep(&m, &[0.95, 1.0], CoverMode::Exact, &b).unwrap();
        assert_eq!(s.censoring, Censoring::Left);
        assert_eq!(s.p_cross, Some(0.95));
        let s = threshold_sweep(&m, &[0.1, 0.2], CoverMode::Exact, &b).unwrap();
        assert_eq!(s.censoring, Censoring::Right);
        assert_eq!(s.p_cross, None);
        assert!(threshold_sweep(&m, &[], CoverMode::Exact, &b).is_err());
        assert!(threshold_sweep(&m, &[0.3, 0.3], CoverMode::Exact, &b).is_err());
    }

    #[test]
    fn matching_sweep_is_monotone_within_intervals() {
        let m = perfect_matchings(8).unwrap().measure().clone();
        let grid: Vec<f64> = (1..=9).map(|i| i as f64 * 0.1).collect();
        let mode = CoverMode::MonteCarlo {
            replicates: 4000,
            seed: 12,
        };
        let s = threshold_sweep(&m, &grid, mode, &Budget::default()).unwrap();
        for w in s.points.windows(2) {
            assert!(w[1].interval.hi >= w[0].interval.lo, "{w:?}");
        }
        let again = threshold_sweep(&m, &grid, mode, &Budget::default()).unwrap();
        assert_eq!(s, again);
    }
}
