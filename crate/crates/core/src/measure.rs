//! Finite-support probability measures over subsets and the exact laws of
//! pairwise overlap sizes.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::format::FamilyFile;
use crate::numeric::{compensated_sum, ln_binomial, par_chunked, CompensatedSum};
use crate::setcore::{SetFamily, SubsetMask, Universe};

/// Tolerance for weight and law normalization checks.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A probability measure `π` with finite support over subsets of a universe.
///
/// Construction merges repeated members, drops zero weights and renormalizes.
/// The empty set is a legal support member.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    family: SetFamily,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteMeasure {
    /// Weighted members; repeated members have their weights added.
    pub fn new(universe: Universe, members: Vec<SubsetMask>, weights: Vec<f64>) -> Result<Self> {
        if members.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} members but {} weights",
                members.len(),
                weights.len()
            )));
        }
        Self::from_weighted(universe, members.into_iter().zip(weights))
    }

    pub fn from_weighted(
        universe: Universe,
        entries: impl IntoIterator<Item = (SubsetMask, f64)>,
    ) -> Result<Self> {
        let mut index: HashMap<u128, usize> = HashMap::new();
        let mut members = Vec::new();
        let mut sums: Vec<CompensatedSum> = Vec::new();
        for (m, w) in entries {
            universe.check(&m)?;
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::invalid(format!("weight {w} for {m} is not a finite nonnegative number")));
            }
            let slot = *index.entry(m.bits()).or_insert_with(|| {
                members.push(m);
                sums.push(CompensatedSum::new());
                members.len() - 1
            });
            sums[slot].add(w);
        }
        let (members, weights): (Vec<_>, Vec<_>) = members
            .into_iter()
            .zip(sums.iter().map(CompensatedSum::value))
            .filter(|&(_, w)| w > 0.0)
            .unzip();
        let total = compensated_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::invalid("measure has no positive weight"));
        }
        let weights: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        let family = SetFamily::new(universe, members)?;
        Ok(Self::assemble(family, weights))
    }

    /// The uniform measure on a nonempty family.
    pub fn uniform(family: SetFamily) -> Result<Self> {
        if family.is_empty() {
            return Err(Error::invalid("uniform measure on an empty family"));
        }
        let w = 1.0 / family.len() as f64;
        let weights = vec![w; family.len()];
        Ok(Self::assemble(family, weights))
    }

    pub fn point_mass(set: SubsetMask) -> Self {
        let family = SetFamily::new(set.universe(), vec![set]).expect("single member");
        Self::assemble(family, vec![1.0])
    }

    /// Uniform weights when the file carries none.
    pub fn from_family_file(file: FamilyFile) -> Result<Self> {
        match file.weights {
            Some(w) => Self::new(file.universe, file.sets, w),
            None => {
                let n = file.sets.len();
                Self::new(file.universe, file.sets, vec![1.0; n])
            }
        }
    }

    fn assemble(family: SetFamily, weights: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        DiscreteMeasure {
            family,
            weights,
            cumulative,
        }
    }

    pub fn family(&self) -> &SetFamily {
        &self.family
    }

    pub fn universe(&self) -> Universe {
        self.family.universe()
    }

    pub fn members(&self) -> &[SubsetMask] {
        self.family.members()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support_size(&self) -> usize {
        self.weights.len()
    }

    /// `k`: the largest support member size.
    pub fn max_size(&self) -> usize {
        self.family.max_size()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SubsetMask, f64)> + '_ {
        self.members().iter().copied().zip(self.weights.iter().copied())
    }

    /// Weight of `set`, zero off the support.
    pub fn weight_of(&self, set: &SubsetMask) -> f64 {
        self.members()
            .iter()
            .position(|m| m == set)
            .map_or(0.0, |i| self.weights[i])
    }

    /// Index of a draw; member `i` comes back with probability `weights[i]`.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.weights.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SubsetMask {
        self.members()[self.sample_index(rng)]
    }

    /// `π(S ⊆ A)`, summed exactly over the support.
    pub fn containment_prob(&self, s: &SubsetMask) -> Result<f64> {
        self.universe().check(s)?;
        let sb = s.bits();
        Ok(compensated_sum(
            self.iter()
                .filter(|(a, _)| a.bits() & sb == sb)
                .map(|(_, w)| w),
        ))
    }

    /// Exact law of `|A₀ ∩ A|` for independent `A₀, A ~ π`, by the weighted
    /// double loop over the support.
    pub fn intersection_law_pair(&self, budget: &Budget) -> Result<IntersectionLaw> {
        let m = self.support_size() as u128;
        if m * m > budget.pairs {
            return Err(Error::capacity("overlap pair loop", m * m, budget.pairs));
        }
        let k = self.max_size();
        let members = self.members();
        let weights = &self.weights;
        let parts = par_chunked(
            members.len(),
            || vec![CompensatedSum::new(); k + 1],
            |acc, i| {
                let a = members[i].bits();
                let wa = weights[i];
                for (b, wb) in members.iter().zip(weights) {
                    acc[(a & b.bits()).count_ones() as usize].add(wa * wb);
                }
            },
        );
        let probs = (0..=k)
            .map(|l| compensated_sum(parts.iter().map(|p| p[l].value())))
            .collect();
        Ok(IntersectionLaw::new(probs, LawSource::PairEnumeration))
    }

    /// Exact law of `|A₀ ∩ a|` for `A₀ ~ π`.
    pub fn intersection_law_given(&self, a: &SubsetMask) -> Result<IntersectionLaw> {
        self.universe().check(a)?;
        let mut acc = vec![CompensatedSum::new(); self.max_size() + 1];
        for (b, w) in self.iter() {
            acc[(a.bits() & b.bits()).count_ones() as usize].add(w);
        }
        Ok(IntersectionLaw::new(
            acc.iter().map(CompensatedSum::value).collect(),
            LawSource::Conditional,
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawSource {
    PairEnumeration,
    Conditional,
    ClosedForm,
    Symmetry,
}

/// Law of an overlap size `ℓ ∈ {0, …, k}`; `probs[ℓ]` is `P(ℓ)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntersectionLaw {
    pub probs: Vec<f64>,
    pub source: LawSource,
}

impl IntersectionLaw {
    pub fn new(probs: Vec<f64>, source: LawSource) -> Self {
        IntersectionLaw { probs, source }
    }

    pub fn prob(&self, overlap: usize) -> f64 {
        self.probs.get(overlap).copied().unwrap_or(0.0)
    }

    /// Largest `ℓ` with an entry (not necessarily positive mass).
    pub fn max_overlap(&self) -> usize {
        self.probs.len().saturating_sub(1)
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.probs.iter().enumerate().map(|(l, p)| l as f64 * p))
    }

    /// `Σ_ℓ P(ℓ) / p^ℓ` restricted to the `ℓ` accepted by `keep`, with each
    /// term formed in log space.
    pub(crate) fn inverse_power_sum(&self, p: f64, keep: impl Fn(usize) -> bool) -> f64 {
        let neg_ln_p = -p.ln();
        compensated_sum(
            self.probs
                .iter()
                .enumerate()
                .filter(|&(l, &pr)| pr > 0.0 && keep(l))
                .map(|(l, pr)| (pr.ln() + l as f64 * neg_ln_p).exp()),
        )
    }
}

/// Overlap law of two independent uniform `k`-subsets of an `N`-set:
/// `P(ℓ) = C(k,ℓ)·C(N−k,k−ℓ)/C(N,k)`, via log-gamma.
pub fn hypergeometric_intersection_law(n: u64, k: u64) -> Result<IntersectionLaw> {
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds N = {n}")));
    }
    let ln_total = ln_binomial(n, k);
    let probs = (0..=k)
        .map(|l| {
            let ln = ln_binomial(k, l) + ln_binomial(n - k, k - l) - ln_total;
            if ln == f64::NEG_INFINITY {
                0.0
            } else {
                ln.exp()
            }
        })
        .collect();
    Ok(IntersectionLaw::new(probs, LawSource::ClosedForm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn u(n: usize) -> Universe {
        Universe::new(n).unwrap()
    }

    fn k_subsets(n: usize, k: usize) -> DiscreteMeasure {
        let x = u(n);
        let members = (0u128..1 << n)
            .filter(|b| b.count_ones() as usize == k)
            .map(|b| x.from_bits(b).unwrap())
            .collect();
        DiscreteMeasure::uniform(SetFamily::new(x, members).unwrap()).unwrap()
    }

    fn matchings_k4() -> DiscreteMeasure {
        // edges of K_4 in lexicographic order: 01 02 03 12 13 23
        let x = u(6);
        let members = vec![
            x.subset(&[0, 5]).unwrap(),
            x.subset(&[1, 4]).unwrap(),
            x.subset(&[2, 3]).unwrap(),
        ];
        DiscreteMeasure::uniform(SetFamily::new(x, members).unwrap()).unwrap()
    }

    #[test]
    fn construction_normalizes_merges_and_drops() {
        let x = u(4);
        let a = x.subset(&[0]).unwrap();
        let b = x.subset(&[1]).unwrap();
        let c = x.subset(&[2]).unwrap();
        let m = DiscreteMeasure::new(x, vec![a, b, a, c], vec![1.0, 2.0, 1.0, 0.0]).unwrap();
        assert_eq!(m.members(), &[a, b]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert!(DiscreteMeasure::new(x, vec![a], vec![-1.0]).is_err());
        assert!(DiscreteMeasure::new(x, vec![a], vec![0.0]).is_err());
        assert!(DiscreteMeasure::new(x, vec![a], vec![f64::NAN]).is_err());
        assert!(DiscreteMeasure::new(x, vec![a, b], vec![1.0]).is_err());
    }

    #[test]
    fn point_mass_always_sampled() {
        let x = u(3);
        let s = x.subset(&[0, 1]).unwrap();
        let m = DiscreteMeasure::point_mass(s);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| m.sample(&mut rng) == s));
    }

    // Two equally likely members: the frequency of the first after 10^5
    // draws has standard deviation 0.00158, so ±0.01 is more than 6σ.
    #[test]
    fn uniform_two_member_frequencies() {
        let x = u(3);
        let a = x.subset(&[0]).unwrap();
        let b = x.subset(&[1, 2]).unwrap();
        let m = DiscreteMeasure::new(x, vec![a, b], vec![1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let hits = (0..n).filter(|_| m.sample(&mut rng) == a).count();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    // Weights (1/4, 3/4): frequency of the first is Binomial(n, 1/4)/n with
    // sd sqrt(3/16/n) = 0.00137 at n = 10^5; 4σ band.
    #[test]
    fn quarter_three_quarter_ratio() {
        let x = u(3);
        let a = x.subset(&[0]).unwrap();
        let b = x.subset(&[1]).unwrap();
        let m = DiscreteMeasure::new(x, vec![a, b], vec![0.25, 0.75]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let hits = (0..n).filter(|_| m.sample(&mut rng) == a).count();
        let f = hits as f64 / n as f64;
        assert!((f - 0.25).abs() < 4.0 * (0.1875f64 / n as f64).sqrt(), "{f}");
    }

    #[test]
    fn containment_examples() {
        let m = k_subsets(5, 2);
        let x = m.universe();
        assert_eq!(m.containment_prob(&x.empty()).unwrap(), 1.0);
        assert!((m.containment_prob(&x.subset(&[0]).unwrap()).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(m.containment_prob(&x.subset(&[0, 1, 2]).unwrap()).unwrap(), 0.0);
        assert!(m.containment_prob(&u(6).empty()).is_err());
    }

    #[test]
    fn pair_law_examples() {
        let x = u(4);
        let s = x.subset(&[0, 1, 2]).unwrap();
        let law = DiscreteMeasure::point_mass(s)
            .intersection_law_pair(&Budget::default())
            .unwrap();
        assert_eq!(law.probs, vec![0.0, 0.0, 0.0, 1.0]);

        let two = DiscreteMeasure::uniform(
            SetFamily::new(x, vec![x.subset(&[0, 1]).unwrap(), x.subset(&[2, 3]).unwrap()]).unwrap(),
        )
        .unwrap();
        let law = two.intersection_law_pair(&Budget::default()).unwrap();
        assert_eq!(law.probs, vec![0.5, 0.0, 0.5]);

        let law = matchings_k4().intersection_law_pair(&Budget::default()).unwrap();
        assert!((law.mean() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pair_law_budget() {
        let m = k_subsets(6, 2);
        let tight = Budget {
            pairs: 100,
            ..Budget::default()
        };
        assert!(matches!(m.intersection_law_pair(&tight), Err(Error::Capacity { .. })));
    }

    #[test]
    fn conditional_law_examples() {
        let x = u(4);
        let two = DiscreteMeasure::uniform(
            SetFamily::new(x, vec![x.subset(&[0, 1]).unwrap(), x.subset(&[2, 3]).unwrap()]).unwrap(),
        )
        .unwrap();
        let law = two.intersection_law_given(&x.empty()).unwrap();
        assert_eq!(law.probs, vec![1.0, 0.0, 0.0]);
        let law = two.intersection_law_given(&x.subset(&[0, 1]).unwrap()).unwrap();
        assert_eq!(law.probs, vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn hypergeometric_examples() {
        let law = hypergeometric_intersection_law(5, 2).unwrap();
        for (got, want) in law.probs.iter().zip([0.3, 0.6, 0.1]) {
            assert!((got - want).abs() < 1e-12);
        }
        let law = hypergeometric_intersection_law(4, 4).unwrap();
        assert_eq!(law.prob(4), 1.0);
        assert!(law.probs[..4].iter().all(|&p| p == 0.0));
        assert!(hypergeometric_intersection_law(3, 4).is_err());
        let law = hypergeometric_intersection_law(2000, 3).unwrap();
        assert!((law.total() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn hypergeometric_matches_pair_enumeration() {
        for n in 1..=12usize {
            for k in 1..=n.min(5) {
                let pair = k_subsets(n, k).intersection_law_pair(&Budget::default()).unwrap();
                let closed = hypergeometric_intersection_law(n as u64, k as u64).unwrap();
                for l in 0..=k {
                    assert!(
                        (pair.prob(l) - closed.prob(l)).abs() < 1e-10,
                        "N={n} k={k} l={l}"
                    );
                }
            }
        }
    }

    #[test]
    fn pair_law_is_mixture_of_conditionals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = u(9);
            let count = rng.random_range(1..=100);
            let members: Vec<_> = (0..count)
                .map(|_| x.from_bits(rng.random::<u128>() & 0x1ff).unwrap())
                .collect();
            let weights: Vec<f64> = (0..count).map(|_| rng.random::<f64>()).collect();
            let m = DiscreteMeasure::new(x, members, weights).unwrap();
            let pair = m.intersection_law_pair(&Budget::default()).unwrap();
            assert!((pair.total() - 1.0).abs() < NORMALIZATION_TOL);
            let mut mix = vec![0.0; pair.probs.len()];
            for (a, w) in m.iter() {
                let law = m.intersection_law_given(&a).unwrap();
                for (slot, p) in mix.iter_mut().zip(&law.probs) {
                    *slot += w * p;
                }
            }
            for (a, b) in mix.iter().zip(&pair.probs) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn containment_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = u(8);
        let members: Vec<_> = (0..30)
            .map(|_| x.from_bits(rng.random::<u128>() & 0xff).unwrap())
            .collect();
        let m = DiscreteMeasure::new(x, members, vec![1.0; 30]).unwrap();
        for s in 0u128..256 {
            let small = x.from_bits(s).unwrap();
            let p_small = m.containment_prob(&small).unwrap();
            for extra in 0..8 {
                let big = x.from_bits(s | 1 << extra).unwrap();
                assert!(m.containment_prob(&big).unwrap() <= p_small + 1e-15);
            }
        }
    }

    // Empirical law after 10^5 draws: TV below 0.01 for M <= 20. The
    // expected TV is about (1/2)·Σ sqrt(2 w_i / (π n)) < 0.006 for M = 20.
    #[test]
    fn sample_tv_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = u(10);
        let members: Vec<_> = (0..20u128).map(|i| x.from_bits(i * 37 % 1024).unwrap()).collect();
        let weights: Vec<f64> = (0..20).map(|i| 1.0 + (i % 5) as f64).collect();
        let m = DiscreteMeasure::new(x, members, weights).unwrap();
        let n = 100_000;
        let mut counts = vec![0usize; m.support_size()];
        for _ in 0..n {
            counts[m.sample_index(&mut rng)] += 1;
        }
        let tv: f64 = counts
            .iter()
            .zip(m.weights())
            .map(|(&c, &w)| (c as f64 / n as f64 - w).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "tv = {tv}");
    }
}
