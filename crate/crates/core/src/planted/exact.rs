//! Exact evaluation of planted-model expectations by enumerating every
//! noise set `V ⊆ X`.
//!
//! Two independent routes are provided. [`CouplingEnumeration`] follows the
//! generative order: for each `V` and each signal `A` it forms `Y = A ∪ V`
//! and averages over the posterior. [`ObservationTable`] instead tabulates
//! the planted law of `Y`, the null law `Q_p(Y)` and `Z_Y` over all `Y`, and
//! [`posterior_tail_by_observation`] evaluates posterior expectations from
//! Bayes' rule over `(A, Y)` pairs. The lemma checks compare the two.
//!
//! Both routes cost about `2^N · M²` and are gated by [`Budget`].

use serde::Serialize;

use super::{default_delta, exceeds_fraction, validate_p, PlantedModel};
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::numeric::{compensated_sum, par_chunked, CompensatedSum};
use crate::spread::max_spread_factor;

/// `Q_p(V)` indexed by `|V|`.
fn null_weights_by_size(n: usize, p: f64) -> Vec<f64> {
    (0..=n)
        .map(|j| p.powi(j as i32) * (1.0 - p).powi((n - j) as i32))
        .collect()
}

fn check_enumeration(m: &DiscreteMeasure, budget: &Budget, pair_factor: bool) -> Result<()> {
    let n = m.universe().size();
    if n as u32 > budget.enumeration_bits {
        return Err(Error::capacity(
            "enumeration over all subsets of the universe",
            1u128 << n.min(127),
            1u128 << budget.enumeration_bits,
        ));
    }
    let mm = m.support_size() as u128;
    let work = (1u128 << n) * if pair_factor { mm * mm } else { mm };
    if work > budget.planted_work {
        return Err(Error::capacity("planted enumeration work", work, budget.planted_work));
    }
    Ok(())
}

/// Member data laid out for the inner loops: bits, sizes, prior weights and
/// posterior terms `π(A)/p^|A|` scaled by a common factor `e^{-shift}`.
struct Tables {
    bits: Vec<u128>,
    sizes: Vec<usize>,
    prior: Vec<f64>,
    scaled: Vec<f64>,
    shift: f64,
}

impl Tables {
    fn new(model: &PlantedModel<'_>) -> Self {
        let m = model.measure();
        let shift = model
            .ln_terms()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Tables {
            bits: m.members().iter().map(|a| a.bits()).collect(),
            sizes: m.members().iter().map(|a| a.len()).collect(),
            prior: m.weights().to_vec(),
            scaled: model.ln_terms().iter().map(|t| (t - shift).exp()).collect(),
            shift,
        }
    }
}

/// Joint law of `(|A|, |A′|, |A ∩ A′|)` under the coupling.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverlapJointLaw {
    pub k: usize,
    /// Row-major over `(|A|, |A′|, |A ∩ A′|)`, each in `0..=k`.
    pub probs: Vec<f64>,
}

impl OverlapJointLaw {
    pub fn get(&self, a: usize, a_prime: usize, overlap: usize) -> f64 {
        let d = self.k + 1;
        self.probs[(a * d + a_prime) * d + overlap]
    }

    /// Largest `|P(a, a′, c) − P(a′, a, c)|`.
    pub fn asymmetry(&self) -> f64 {
        let d = self.k + 1;
        let mut worst = 0.0f64;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    worst = worst.max((self.get(a, b, c) - self.get(b, a, c)).abs());
                }
            }
        }
        worst
    }
}

/// Expectations under the coupling `(A, V, A′)`, evaluated exactly.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingEnumeration {
    pub p: f64,
    pub delta: f64,
    /// `E[|A′ \ V| / |A| · 1{A ≠ ∅}]`.
    pub expectation: f64,
    /// `E[|A′ ∩ A| / |A| · 1{A ≠ ∅}]`.
    pub overlap_expectation: f64,
    /// `P(|A′ ∩ A| > δ|A|)`.
    pub tail: f64,
    /// `E[Z_Y(A, δ)]`: planted mean of the overlap-restricted normalizer.
    pub truncated_normalizer: f64,
    pub joint: OverlapJointLaw,
}

#[derive(Clone)]
struct Acc {
    expectation: CompensatedSum,
    overlap_expectation: CompensatedSum,
    tail: CompensatedSum,
    truncated: CompensatedSum,
    joint: Vec<f64>,
}

impl CouplingEnumeration {
    pub fn run(m: &DiscreteMeasure, p: f64, delta: f64, budget: &Budget) -> Result<Self> {
        let model = PlantedModel::new(m, p)?;
        if delta.is_nan() || delta < 0.0 {
            return Err(Error::invalid(format!("delta must be nonnegative, got {delta}")));
        }
        check_enumeration(m, budget, true)?;
        let n = m.universe().size();
        let t = Tables::new(&model);
        let q = null_weights_by_size(n, p);
        let k = m.max_size();
        let d = k + 1;
        let count = t.bits.len();

        let parts = par_chunked(
            1usize << n,
            || Acc {
                expectation: CompensatedSum::new(),
                overlap_expectation: CompensatedSum::new(),
                tail: CompensatedSum::new(),
                truncated: CompensatedSum::new(),
                joint: vec![0.0; d * d * d],
            },
            |acc, v| {
                let v = v as u128;
                let qv = q[v.count_ones() as usize];
                if qv == 0.0 {
                    return;
                }
                for i in 0..count {
                    let a = t.bits[i];
                    let size_a = t.sizes[i];
                    let y = a | v;
                    let outer = qv * t.prior[i];
                    let mut z = 0.0;
                    let mut shrunk = 0.0;
                    let mut overlap = 0.0;
                    let mut over = 0.0;
                    for j in 0..count {
                        let b = t.bits[j];
                        if b & y != b {
                            continue;
                        }
                        let w = t.scaled[j];
                        let c = (a & b).count_ones() as usize;
                        z += w;
                        shrunk += w * (b & !v).count_ones() as f64;
                        overlap += w * c as f64;
                        if exceeds_fraction(c, delta, size_a) {
                            over += w;
                        }
                    }
                    for j in 0..count {
                        let b = t.bits[j];
                        if b & y == b {
                            let c = (a & b).count_ones() as usize;
                            acc.joint[(size_a * d + t.sizes[j]) * d + c] += outer * t.scaled[j] / z;
                        }
                    }
                    if size_a > 0 {
                        acc.expectation.add(outer * shrunk / (z * size_a as f64));
                        acc.overlap_expectation.add(outer * overlap / (z * size_a as f64));
                    }
                    acc.tail.add(outer * over / z);
                    acc.truncated.add(outer * over);
                }
            },
        );

        let fold = |f: fn(&Acc) -> f64| compensated_sum(parts.iter().map(f));
        let joint = (0..d * d * d)
            .map(|idx| compensated_sum(parts.iter().map(|acc| acc.joint[idx])))
            .collect();
        Ok(CouplingEnumeration {
            p,
            delta,
            expectation: fold(|a| a.expectation.value()),
            overlap_expectation: fold(|a| a.overlap_expectation.value()),
            tail: fold(|a| a.tail.value()),
            truncated_normalizer: fold(|a| a.truncated.value()) * t.shift.exp(),
            joint: OverlapJointLaw { k, probs: joint },
        })
    }
}

/// Exact `E[|A′ \ V| / |A| · 1{A ≠ ∅}]` under the coupling.
pub fn theorem21_expectation_exact(m: &DiscreteMeasure, p: f64, budget: &Budget) -> Result<f64> {
    Ok(CouplingEnumeration::run(m, p, 1.0, budget)?.expectation)
}

/// Exact `P(|A′ ∩ A| > δ|A|)` under the coupling.
pub fn theorem21_tail_exact(
    m: &DiscreteMeasure,
    p: f64,
    t: super::TruncationParams,
    budget: &Budget,
) -> Result<f64> {
    Ok(CouplingEnumeration::run(m, p, t.delta, budget)?.tail)
}

/// Slack allowed on the bound comparisons.
pub const BOUND_SLACK: f64 = 1e-12;

/// The coupling expectations against `7/(pR)^{1/3}` and `6δ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem21Report {
    pub p: f64,
    /// `R` used for the bounds: the caller's, or the measure's `R*`.
    pub r: f64,
    pub r_is_max_spread: bool,
    pub delta: f64,
    pub expectation: f64,
    pub expectation_bound: f64,
    pub expectation_holds: bool,
    pub overlap_expectation: f64,
    pub tail: f64,
    pub tail_bound: f64,
    /// Whether `7δ < 1`, the regime where the tail bound is claimed.
    pub tail_bound_applies: bool,
    pub tail_holds: bool,
}

impl Theorem21Report {
    pub fn holds(&self) -> bool {
        self.expectation_holds && self.tail_holds
    }
}

/// Runs [`CouplingEnumeration`] at `δ = (pR)^{-1/3}` and compares with the
/// bounds. `R` defaults to the maximal spread factor; an unbounded factor
/// (support `{∅}`) gives `δ = 0` and zero bounds.
pub fn theorem21_check(m: &DiscreteMeasure, p: f64, r: Option<f64>, budget: &Budget) -> Result<Theorem21Report> {
    validate_p(p)?;
    let (r, r_is_max_spread) = match r {
        Some(r) if r > 1.0 => (r, false),
        Some(r) => return Err(Error::invalid(format!("R must exceed 1, got {r}"))),
        None => match max_spread_factor(m, budget) {
            Ok(rep) => (rep.max_spread_factor, true),
            Err(Error::UnboundedSpread) => (f64::INFINITY, true),
            Err(e) => return Err(e),
        },
    };
    let delta = default_delta(p, r);
    let e = CouplingEnumeration::run(m, p, delta, budget)?;
    let expectation_bound = 7.0 * delta;
    let tail_bound = 6.0 * delta;
    let tail_bound_applies = 7.0 * delta < 1.0;
    Ok(Theorem21Report {
        p,
        r,
        r_is_max_spread,
        delta,
        expectation: e.expectation,
        expectation_bound,
        expectation_holds: e.expectation <= expectation_bound + BOUND_SLACK,
        overlap_expectation: e.overlap_expectation,
        tail: e.tail,
        tail_bound,
        tail_bound_applies,
        tail_holds: !tail_bound_applies || e.tail <= tail_bound + BOUND_SLACK,
    })
}

/// Planted law, null law and normalizer of every observation `Y ⊆ X`,
/// indexed by the bits of `Y`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationTable {
    pub p: f64,
    /// `P_p(Y)`, accumulated from `π(A)·Q_p(V)` over `A ∪ V = Y`.
    pub planted: Vec<f64>,
    /// `Q_p(Y)`.
    pub null: Vec<f64>,
    /// `Z_Y`.
    pub normalizer: Vec<f64>,
}

/// Tabulates [`ObservationTable`]; needs `N ≤ budget.enumeration_bits`.
pub fn observation_table(m: &DiscreteMeasure, p: f64, budget: &Budget) -> Result<ObservationTable> {
    let model = PlantedModel::new(m, p)?;
    check_enumeration(m, budget, false)?;
    let x = m.universe();
    let n = x.size();
    let size = 1usize << n;
    let q = null_weights_by_size(n, p);

    let mut planted = vec![CompensatedSum::new(); size];
    for v in 0..size {
        let qv = q[v.count_ones() as usize];
        if qv == 0.0 {
            continue;
        }
        for (a, w) in m.iter() {
            planted[(a.bits() as usize) | v].add(w * qv);
        }
    }
    let planted = planted.iter().map(CompensatedSum::value).collect();
    let null = (0..size).map(|y| q[y.count_ones() as usize]).collect();
    let normalizer = (0..size)
        .map(|y| model.z_y(&x.mask_unchecked(y as u128)).expect("same universe"))
        .collect();
    Ok(ObservationTable {
        p,
        planted,
        null,
        normalizer,
    })
}

impl ObservationTable {
    /// `E_{Q_p}[Z_Y]`.
    pub fn normalizer_mean(&self) -> f64 {
        compensated_sum(self.null.iter().zip(&self.normalizer).map(|(q, z)| q * z))
    }

    /// `E_{Q_p}[Z_Y²]`.
    pub fn normalizer_second_moment(&self) -> f64 {
        compensated_sum(self.null.iter().zip(&self.normalizer).map(|(q, z)| q * z * z))
    }

    /// `Q_p(Z_Y > 0)`.
    pub fn null_positive_prob(&self) -> f64 {
        compensated_sum(
            self.null
                .iter()
                .zip(&self.normalizer)
                .filter(|(_, &z)| z > 0.0)
                .map(|(q, _)| *q),
        )
    }

    /// `max_Y |P_p(Y) − Q_p(Y)·Z_Y|`.
    pub fn radon_nikodym_error(&self) -> f64 {
        self.planted
            .iter()
            .zip(&self.null)
            .zip(&self.normalizer)
            .map(|((pl, q), z)| (pl - q * z).abs())
            .fold(0.0, f64::max)
    }

    /// `P_p(Z_Y ≤ ε)` from the planted column.
    pub fn planted_small_normalizer_prob(&self, eps: f64) -> f64 {
        compensated_sum(
            self.planted
                .iter()
                .zip(&self.normalizer)
                .filter(|(_, &z)| z <= eps)
                .map(|(pl, _)| *pl),
        )
    }
}

/// `E[Z_Y(A, δ) / Z_Y]` evaluated over observations: for each `Y` and each
/// `A ⊆ Y`, `P_p(A, Y) = π(A)·Q_p(Y)/p^|A|`, and the ratio is the posterior
/// mass of candidates overlapping `A` in more than `δ|A|` elements.
pub fn posterior_tail_by_observation(m: &DiscreteMeasure, p: f64, delta: f64, budget: &Budget) -> Result<f64> {
    let model = PlantedModel::new(m, p)?;
    check_enumeration(m, budget, true)?;
    let n = m.universe().size();
    let t = Tables::new(&model);
    let q = null_weights_by_size(n, p);
    let count = t.bits.len();
    let shift = t.shift.exp();

    let parts = par_chunked(1usize << n, CompensatedSum::new, |acc, y| {
        let y = y as u128;
        let qy = q[y.count_ones() as usize];
        if qy == 0.0 {
            return;
        }
        let fits: Vec<usize> = (0..count).filter(|&j| t.bits[j] & y == t.bits[j]).collect();
        if fits.is_empty() {
            return;
        }
        let z: f64 = fits.iter().map(|&j| t.scaled[j]).sum();
        for &i in &fits {
            let a = t.bits[i];
            // P_p(A = a, Y = y) = Q_p(y)·π(a)/p^|a| = Q_p(y)·scaled[a]·e^shift
            let joint = qy * t.scaled[i] * shift;
            let over: f64 = fits
                .iter()
                .filter(|&&j| exceeds_fraction((a & t.bits[j]).count_ones() as usize, delta, t.sizes[i]))
                .map(|&j| t.scaled[j])
                .sum();
            acc.add(joint * over / z);
        }
    });
    Ok(compensated_sum(parts.iter().map(CompensatedSum::value)))
}
