//! Structured families: all `k`-subsets of an `N`-set, and the perfect
//! matchings of the complete graph `K_n`.

use serde::Serialize;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::measure::{hypergeometric_intersection_law, DiscreteMeasure, IntersectionLaw, LawSource};
use crate::moments::{
    full_second_moment, truncated_second_moment, MomentPath, OverlapClass, OverlapProfile, OverlapSource,
    PZ_THRESHOLD,
};
use crate::numeric::ln_binomial;
use crate::planted::default_delta;
use crate::setcore::{SetFamily, SubsetMask, Universe, MAX_UNIVERSE};
use crate::spread::max_spread_factor;

/// The uniform measure on all `k`-subsets of `{0, …, N−1}`.
///
/// In closed-form-only mode no member list exists; containment, overlap laws
/// and `R*` come from binomial formulas, which lets `N` run far past the mask
/// width.
#[derive(Clone, Debug)]
pub struct KUniformFamily {
    n: usize,
    k: usize,
    measure: Option<DiscreteMeasure>,
}

pub fn k_uniform_family(n: usize, k: usize, closed_form_only: bool, budget: &Budget) -> Result<KUniformFamily> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 <= k <= N, got N = {n}, k = {k}")));
    }
    let measure = if closed_form_only {
        None
    } else {
        let count = ln_binomial(n as u64, k as u64).exp().round();
        if count > budget.members as f64 {
            return Err(Error::capacity("k-subset family", count as u128, budget.members));
        }
        if n > MAX_UNIVERSE {
            return Err(Error::UniverseTooLarge {
                requested: n,
                max: MAX_UNIVERSE,
            });
        }
        let x = Universe::new(n)?;
        let members = KSubsets::new(n, k).map(|b| x.mask_unchecked(b)).collect();
        Some(DiscreteMeasure::uniform(SetFamily::new(x, members)?)?)
    };
    Ok(KUniformFamily { n, k, measure })
}

/// Gosper's hack: `k`-bit masks below `2^n` in increasing order.
struct KSubsets {
    next: Option<u128>,
    limit_bit: usize,
}

impl KSubsets {
    fn new(n: usize, k: usize) -> Self {
        let first = if k == 128 { u128::MAX } else { (1u128 << k) - 1 };
        KSubsets {
            next: Some(first),
            limit_bit: n,
        }
    }
}

impl Iterator for KSubsets {
    type Item = u128;

    fn next(&mut self) -> Option<u128> {
        let cur = self.next?;
        let low = cur & cur.wrapping_neg();
        let ripple = cur.checked_add(low);
        self.next = ripple.and_then(|ripple| {
            let next = ripple | (((cur ^ ripple) >> 2) / low);
            (self.limit_bit >= 128 || next >> self.limit_bit == 0).then_some(next)
        });
        Some(cur)
    }
}

impl KUniformFamily {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// The materialized measure, absent in closed-form-only mode.
    pub fn measure(&self) -> Option<&DiscreteMeasure> {
        self.measure.as_ref()
    }

    /// `π(S ⊆ A) = C(N−s, k−s) / C(N, k)` for `|S| = s`.
    pub fn containment_prob(&self, s: usize) -> f64 {
        if s > self.k {
            return 0.0;
        }
        let (n, k, s) = (self.n as u64, self.k as u64, s as u64);
        (ln_binomial(n - s, k - s) - ln_binomial(n, k)).exp()
    }

    /// `R*` and the minimizing `|S|`, smallest size on ties.
    pub fn max_spread_factor(&self) -> (f64, usize) {
        let (n, k) = (self.n as u64, self.k as u64);
        let mut best = (f64::INFINITY, 0usize);
        for s in 1..=k {
            let ln_r = (ln_binomial(n, k) - ln_binomial(n - s, k - s)) / s as f64;
            if best.1 == 0 || ln_r < best.0 - 1e-12 * best.0.abs().max(1.0) {
                best = (ln_r, s as usize);
            }
        }
        (best.0.exp(), best.1)
    }

    pub fn intersection_law(&self) -> IntersectionLaw {
        hypergeometric_intersection_law(self.n as u64, self.k as u64).expect("k <= N")
    }
}

impl OverlapSource for KUniformFamily {
    fn pair_profile(&self, budget: &Budget) -> Result<OverlapProfile> {
        self.measure
            .as_ref()
            .ok_or_else(|| Error::invalid("closed-form-only family has no member list"))?
            .pair_profile(budget)
    }

    fn closed_form_profile(&self) -> Option<OverlapProfile> {
        Some(OverlapProfile {
            classes: vec![OverlapClass {
                weight: 1.0,
                size: self.k,
                law: self.intersection_law(),
            }],
            source: LawSource::ClosedForm,
        })
    }

    fn spread_factor(&self, _budget: &Budget) -> Result<f64> {
        Ok(self.max_spread_factor().0)
    }
}

/// Largest `n` for which matchings are enumerated.
pub const MAX_MATCHING_N: usize = 12;

/// All perfect matchings of `K_n`. The universe is the edge set, indexed
/// lexicographically over vertex pairs `i < j`.
#[derive(Clone, Debug)]
pub struct MatchingFamily {
    n: usize,
    edges: Vec<(usize, usize)>,
    measure: DiscreteMeasure,
}

/// Index of edge `{i, j}` (`i < j < n`) in lexicographic order.
pub fn edge_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

pub fn perfect_matchings(n: usize) -> Result<MatchingFamily> {
    if n < 2 || n % 2 == 1 || n > MAX_MATCHING_N {
        return Err(Error::invalid(format!(
            "perfect matchings need an even n in 2..={MAX_MATCHING_N}, got {n}"
        )));
    }
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let x = Universe::new(edges.len())?;
    let mut members = Vec::new();
    pair_smallest(n, (1u32 << n) - 1, 0, &mut members);
    let members = members.into_iter().map(|b| x.mask_unchecked(b)).collect();
    let measure = DiscreteMeasure::uniform(SetFamily::new(x, members)?)?;
    Ok(MatchingFamily { n, edges, measure })
}

/// Pairs the smallest unmatched vertex with each other unmatched vertex in
/// turn, recursing on the rest.
fn pair_smallest(n: usize, unmatched: u32, chosen: u128, out: &mut Vec<u128>) {
    if unmatched == 0 {
        out.push(chosen);
        return;
    }
    let i = unmatched.trailing_zeros() as usize;
    let mut rest = unmatched & !(1 << i);
    while rest != 0 {
        let j = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        let edge = 1u128 << edge_index(n, i, j);
        pair_smallest(n, unmatched & !(1 << i) & !(1 << j), chosen | edge, out);
    }
}

/// `(n−1)!!`.
pub fn double_factorial_odd(n: usize) -> u128 {
    (1..n).step_by(2).map(|x| x as u128).product()
}

impl MatchingFamily {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.measure
    }

    pub fn family(&self) -> &SetFamily {
        self.measure.family()
    }

    /// Vertex pairs of a matching.
    pub fn edge_list(&self, m: &SubsetMask) -> Vec<(usize, usize)> {
        m.elements().map(|e| self.edges[e]).collect()
    }

    /// Overlap law given one fixed matching. Every matching looks the same
    /// under vertex relabeling, so this is also the unconditional law.
    pub fn overlap_law_by_symmetry(&self) -> IntersectionLaw {
        let first = self.measure.members()[0];
        let law = self.measure.intersection_law_given(&first).expect("same universe");
        IntersectionLaw::new(law.probs, LawSource::Symmetry)
    }
}

impl OverlapSource for MatchingFamily {
    fn pair_profile(&self, budget: &Budget) -> Result<OverlapProfile> {
        self.measure.pair_profile(budget)
    }

    fn closed_form_profile(&self) -> Option<OverlapProfile> {
        Some(OverlapProfile {
            classes: vec![OverlapClass {
                weight: 1.0,
                size: self.n / 2,
                law: self.overlap_law_by_symmetry(),
            }],
            source: LawSource::Symmetry,
        })
    }

    fn spread_factor(&self, budget: &Budget) -> Result<f64> {
        Ok(max_spread_factor(&self.measure, budget)?.max_spread_factor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchingOverlapStats {
    pub n: usize,
    pub law: IntersectionLaw,
    pub mean: f64,
    /// `(n/2)² / C(n,2) = n / (2(n−1))`.
    pub mean_closed_form: f64,
    pub prob_one: f64,
    pub prob_any: f64,
}

/// Exact overlap law of two independent uniform matchings, by the pair loop.
pub fn matching_overlap_stats(mf: &MatchingFamily, budget: &Budget) -> Result<MatchingOverlapStats> {
    let law = mf.measure.intersection_law_pair(budget)?;
    Ok(summarize_overlap(mf.n, law))
}

fn summarize_overlap(n: usize, law: IntersectionLaw) -> MatchingOverlapStats {
    MatchingOverlapStats {
        n,
        mean: law.mean(),
        mean_closed_form: n as f64 / (2.0 * (n as f64 - 1.0)),
        prob_one: law.prob(1),
        prob_any: 1.0 - law.prob(0),
        law,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub n: usize,
    pub members: usize,
    /// `ln(n) / n`.
    pub p: f64,
    pub max_spread_factor: f64,
    pub spread_over_n: f64,
    pub overlap: MatchingOverlapStats,
    /// `π⊗2(ℓ = 1) / p`.
    pub ell_one_term: f64,
    pub full_second_moment: f64,
    /// The untruncated criterion `E(Z²) ≤ 10/9` fails.
    pub unrestricted_fails: bool,
    /// The `ℓ = 1` term alone exceeds `10/9`.
    pub ell_one_exceeds: bool,
    pub delta: f64,
    pub truncated_value: f64,
    pub truncated_bound: f64,
    pub truncated_finite: bool,
}

/// Second moments of the matching family at `p = ln(n)/n`. The overlap law
/// comes from the symmetry route, so `n = 12` stays within the pair budget.
pub fn counterexample_report(n: usize, budget: &Budget) -> Result<CounterexampleReport> {
    let mf = perfect_matchings(n)?;
    let p = (n as f64).ln() / n as f64;
    let rstar = max_spread_factor(mf.measure(), budget)?.max_spread_factor;
    let overlap = summarize_overlap(n, mf.overlap_law_by_symmetry());
    let full = full_second_moment(&mf, p, MomentPath::ClosedForm, budget)?;
    let delta = default_delta(p, rstar);
    let truncated = truncated_second_moment(&mf, p, delta, MomentPath::ClosedForm, budget)?;
    let ell_one_term = overlap.prob_one / p;
    Ok(CounterexampleReport {
        n,
        members: mf.measure().support_size(),
        p,
        max_spread_factor: rstar,
        spread_over_n: rstar / n as f64,
        ell_one_term,
        full_second_moment: full,
        unrestricted_fails: full > PZ_THRESHOLD,
        ell_one_exceeds: ell_one_term > PZ_THRESHOLD,
        delta,
        truncated_value: truncated,
        truncated_bound: 6.0 * delta * delta,
        truncated_finite: truncated.is_finite(),
        overlap,
    })
}
