//! Second moments of the null normalizer `Z_V` and their overlap-truncated
//! versions.
//!
//! With `E_{Q_p} Z = 1`, the unrestricted second moment is
//!
//! ```text
//! E_{Q_p}(Z²) = Σ_ℓ π⊗2(|A₀ ∩ A| = ℓ) / p^ℓ
//! ```
//!
//! and the truncated moment keeps only overlaps `ℓ > δ|A|`:
//!
//! ```text
//! E_{A~π} Σ_{ℓ > δ|A|} π(|A₀ ∩ A| = ℓ | A) / p^ℓ
//! ```
//!
//! Both are computed from an [`OverlapProfile`]: a list of classes of signals
//! sharing a size and a conditional overlap law. A profile comes either from
//! the `M²` pair loop or, for exchangeable families, from a closed form.

use serde::Serialize;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, IntersectionLaw, LawSource};
use crate::numeric::compensated_sum;
use crate::planted::exact::{observation_table, posterior_tail_by_observation, CouplingEnumeration};
use crate::planted::{default_delta, exceeds_fraction, validate_p};
use crate::spread::max_spread_factor;

/// Second-moment ratio that would give `Q_p(Z > 0) ≥ 0.9` by Paley–Zygmund.
pub const PZ_THRESHOLD: f64 = 10.0 / 9.0;

/// Tolerance for the lemma-chain equalities.
pub const CHAIN_TOL: f64 = 1e-9;

/// Signals of one size sharing one conditional overlap law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverlapClass {
    pub weight: f64,
    pub size: usize,
    pub law: IntersectionLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverlapProfile {
    pub classes: Vec<OverlapClass>,
    pub source: LawSource,
}

impl OverlapProfile {
    /// The unconditional law `π⊗2(|A₀ ∩ A| = ℓ)`.
    pub fn pair_law(&self) -> IntersectionLaw {
        let len = self.classes.iter().map(|c| c.law.probs.len()).max().unwrap_or(1);
        let probs = (0..len)
            .map(|l| compensated_sum(self.classes.iter().map(|c| c.weight * c.law.prob(l))))
            .collect();
        IntersectionLaw::new(probs, self.source)
    }

    fn inverse_power_sum(&self, p: f64, delta: Option<f64>) -> f64 {
        compensated_sum(self.classes.iter().map(|c| {
            c.weight
                * c.law.inverse_power_sum(p, |l| match delta {
                    Some(d) => exceeds_fraction(l, d, c.size),
                    None => true,
                })
        }))
    }
}

/// Which route builds the overlap profile.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentPath {
    /// Closed form when the source has one, otherwise pairs.
    #[default]
    Auto,
    Pairs,
    ClosedForm,
}

/// Anything that can describe the overlap structure of its measure.
pub trait OverlapSource {
    /// Profile from the exact `M²` pair loop.
    fn pair_profile(&self, budget: &Budget) -> Result<OverlapProfile>;

    /// Profile from a closed form, when the family admits one.
    fn closed_form_profile(&self) -> Option<OverlapProfile> {
        None
    }

    /// `R*`, the maximal spread factor.
    fn spread_factor(&self, budget: &Budget) -> Result<f64>;

    fn profile(&self, path: MomentPath, budget: &Budget) -> Result<OverlapProfile> {
        match path {
            MomentPath::Pairs => self.pair_profile(budget),
            MomentPath::ClosedForm => self
                .closed_form_profile()
                .ok_or_else(|| Error::invalid("no closed-form overlap law for this family")),
            MomentPath::Auto => match self.closed_form_profile() {
                Some(p) => Ok(p),
                None => self.pair_profile(budget),
            },
        }
    }
}

impl OverlapSource for DiscreteMeasure {
    fn pair_profile(&self, budget: &Budget) -> Result<OverlapProfile> {
        let m = self.support_size() as u128;
        if m * m > budget.pairs {
            return Err(Error::capacity("overlap pair loop", m * m, budget.pairs));
        }
        let classes = self
            .iter()
            .map(|(a, w)| {
                Ok(OverlapClass {
                    weight: w,
                    size: a.len(),
                    law: IntersectionLaw::new(
                        self.intersection_law_given(&a)?.probs,
                        LawSource::PairEnumeration,
                    ),
                })
            })
            .collect::<Result<_>>()?;
        Ok(OverlapProfile {
            classes,
            source: LawSource::PairEnumeration,
        })
    }

    fn spread_factor(&self, budget: &Budget) -> Result<f64> {
        Ok(max_spread_factor(self, budget)?.max_spread_factor)
    }
}

/// `E_A Σ_{ℓ > δ|A|} π(|A₀ ∩ A| = ℓ | A) / p^ℓ`.
pub fn truncated_second_moment<S: OverlapSource + ?Sized>(
    src: &S,
    p: f64,
    delta: f64,
    path: MomentPath,
    budget: &Budget,
) -> Result<f64> {
    validate_p(p)?;
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::invalid(format!("delta must be nonnegative, got {delta}")));
    }
    Ok(src.profile(path, budget)?.inverse_power_sum(p, Some(delta)))
}

/// `Σ_ℓ π⊗2(|A₀ ∩ A| = ℓ) / p^ℓ = E_{Q_p}(Z²)`.
pub fn full_second_moment<S: OverlapSource + ?Sized>(
    src: &S,
    p: f64,
    path: MomentPath,
    budget: &Budget,
) -> Result<f64> {
    validate_p(p)?;
    Ok(src.profile(path, budget)?.inverse_power_sum(p, None))
}

/// `E_{Q_p}(Z_V²)` by enumerating all `2^N` noise sets.
pub fn null_second_moment_enumerated(m: &DiscreteMeasure, p: f64, budget: &Budget) -> Result<f64> {
    Ok(observation_table(m, p, budget)?.normalizer_second_moment())
}

/// `Q_p(Z > 0) ≥ (E Z)² / E(Z²) = 1 / E(Z²)` given `E Z = 1`.
pub fn paley_zygmund_bound(full_second_moment: f64) -> Result<f64> {
    if full_second_moment.is_nan() || full_second_moment < 1.0 - 1e-12 {
        return Err(Error::invalid(format!(
            "second moment {full_second_moment} is below (E Z)^2 = 1"
        )));
    }
    Ok((1.0 / full_second_moment).min(1.0))
}

/// The analytic majorant of the truncated sum for one signal of size `k_a`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailMajorant {
    /// `e / (pRδ)`, the geometric ratio.
    pub ratio: f64,
    /// Smallest overlap in the sum: the least integer `ℓ > δ·k_a`, at least 1.
    pub first_overlap: usize,
    /// `Σ_{ℓ ≥ first_overlap} ratio^ℓ`; the partial sum up to `k_a` when divergent.
    pub value: f64,
    pub divergent: bool,
    /// `Σ_{first_overlap ≤ ℓ ≤ k_a} (e·k_a / (pRℓ))^ℓ`, the intermediate bound.
    pub binomial_sum: f64,
}

/// `Σ_{ℓ > δ·k_a, ℓ ≥ 1} (e/(pRδ))^ℓ`, evaluated as a geometric tail.
pub fn binomial_tail_bound(k_a: usize, r: f64, p: f64, delta: f64) -> TailMajorant {
    let ratio = std::f64::consts::E / (p * r * delta);
    let first_overlap = ((delta * k_a as f64).floor() as usize + 1).max(1);
    if k_a == 0 {
        return TailMajorant {
            ratio,
            first_overlap,
            value: 0.0,
            divergent: false,
            binomial_sum: 0.0,
        };
    }
    let binomial_sum = compensated_sum((first_overlap..=k_a).map(|l| {
        (std::f64::consts::E * k_a as f64 / (p * r * l as f64)).powi(l as i32)
    }));
    if ratio < 1.0 {
        TailMajorant {
            ratio,
            first_overlap,
            value: ratio.powi(first_overlap as i32) / (1.0 - ratio),
            divergent: false,
            binomial_sum,
        }
    } else {
        TailMajorant {
            ratio,
            first_overlap,
            value: compensated_sum((first_overlap..=k_a).map(|l| ratio.powi(l as i32))),
            divergent: true,
            binomial_sum,
        }
    }
}

/// Second-moment summary for one `(p, δ)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub p: f64,
    /// `R` behind the default `δ`: the caller's, or `R*`.
    pub r: f64,
    pub delta: f64,
    pub source: LawSource,
    pub truncated_value: f64,
    /// `6δ²`.
    pub truncated_bound: f64,
    pub truncated_ratio: f64,
    /// Whether `7δ < 1`, where the truncated bound is claimed.
    pub truncated_bound_applies: bool,
    pub truncated_holds: bool,
    /// Finite stand-in when the sum overflows; see `full_divergent`.
    pub full_second_moment: f64,
    pub full_divergent: bool,
    /// `π⊗2(ℓ = 1) / p`.
    pub ell_one_term: f64,
    /// `E(Z²) > 10/9`: the untruncated criterion fails.
    pub exceeds_pz_threshold: bool,
    pub paley_zygmund_lower_bound: f64,
}

/// Tolerance for the truncated-bound comparison.
pub const MOMENT_SLACK: f64 = 1e-12;

/// Builds a [`MomentReport`]. `r` defaults to `R*`; `delta` defaults to
/// `(pR)^{-1/3}`.
pub fn moment_report<S: OverlapSource + ?Sized>(
    src: &S,
    p: f64,
    r: Option<f64>,
    delta: Option<f64>,
    path: MomentPath,
    budget: &Budget,
) -> Result<MomentReport> {
    validate_p(p)?;
    let r = match r {
        Some(r) if r > 1.0 => r,
        Some(r) => return Err(Error::invalid(format!("R must exceed 1, got {r}"))),
        None => match src.spread_factor(budget) {
            Ok(r) => r,
            Err(Error::UnboundedSpread) => f64::INFINITY,
            Err(e) => return Err(e),
        },
    };
    let delta = delta.unwrap_or_else(|| default_delta(p, r));
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::invalid(format!("delta must be nonnegative, got {delta}")));
    }
    let profile = src.profile(path, budget)?;
    let truncated_value = profile.inverse_power_sum(p, Some(delta));
    let full = profile.inverse_power_sum(p, None);
    let full_divergent = !full.is_finite();
    let full_second_moment = if full_divergent { f64::MAX } else { full };
    let truncated_bound = 6.0 * delta * delta;
    let truncated_bound_applies = 7.0 * delta < 1.0;
    let pair = profile.pair_law();
    Ok(MomentReport {
        p,
        r,
        delta,
        source: profile.source,
        truncated_value,
        truncated_bound,
        truncated_ratio: if truncated_bound > 0.0 {
            truncated_value / truncated_bound
        } else {
            0.0
        },
        truncated_bound_applies,
        truncated_holds: !truncated_bound_applies || truncated_value <= truncated_bound + MOMENT_SLACK,
        full_second_moment,
        full_divergent,
        ell_one_term: pair.prob(1) / p,
        exceeds_pz_threshold: full > PZ_THRESHOLD,
        paley_zygmund_lower_bound: paley_zygmund_bound(full_second_moment.max(1.0))?,
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= CHAIN_TOL * a.abs().max(b.abs()).max(1.0)
}

/// `P_p(Z_Y ≤ ε)` against `ε` for one `ε`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmallNormalizerCheck {
    pub eps: f64,
    pub prob: f64,
    pub holds: bool,
}

/// The four quantities linking the planted tail to the truncated moment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaChainReport {
    pub p: f64,
    pub r: f64,
    pub delta: f64,
    /// `P_p(|A′ ∩ A| > δ|A|)`, from the coupling enumeration.
    pub tail_probability: f64,
    /// `E_{P_p}[Z_Y(A,δ) / Z_Y]`, from Bayes' rule over observations.
    pub normalized_truncation: f64,
    /// `E_{P_p}[Z_Y(A,δ)]`, from the coupling enumeration.
    pub planted_truncation: f64,
    /// The truncated second moment from the pair loop.
    pub truncated_second_moment: f64,
    pub first_equality_holds: bool,
    pub second_equality_holds: bool,
    /// `P_p(Z_Y ≤ ε) ≤ ε` at `ε ∈ {0.1, 0.5, √6·δ}`.
    pub small_normalizer: Vec<SmallNormalizerCheck>,
    /// `E[Z_Y(A,δ)/Z_Y] ≤ ε + E[Z_Y(A,δ)]/ε` at `ε = √6·δ`.
    pub planting_inequality_holds: bool,
    /// `7δ < 1`.
    pub bounds_apply: bool,
    /// `E[Z_Y(A,δ)] ≤ 6δ²` and `P(|A′ ∩ A| > δ|A|) ≤ 6δ` (when `bounds_apply`).
    pub bounds_hold: bool,
}

impl LemmaChainReport {
    pub fn holds(&self) -> bool {
        self.first_equality_holds
            && self.second_equality_holds
            && self.small_normalizer.iter().all(|c| c.holds)
            && self.planting_inequality_holds
            && self.bounds_hold
    }
}

/// Computes the four quantities of the lemma chain by independent routes and
/// checks the two equalities, the planting inequality and the bounds.
pub fn lemma_chain_check(
    m: &DiscreteMeasure,
    p: f64,
    r: Option<f64>,
    delta: Option<f64>,
    budget: &Budget,
) -> Result<LemmaChainReport> {
    validate_p(p)?;
    let r = match r {
        Some(r) => r,
        None => match max_spread_factor(m, budget) {
            Ok(rep) => rep.max_spread_factor,
            Err(Error::UnboundedSpread) => f64::INFINITY,
            Err(e) => return Err(e),
        },
    };
    let delta = delta.unwrap_or_else(|| default_delta(p, r));
    let coupling = CouplingEnumeration::run(m, p, delta, budget)?;
    let normalized_truncation = posterior_tail_by_observation(m, p, delta, budget)?;
    let truncated = truncated_second_moment(m, p, delta, MomentPath::Pairs, budget)?;
    let table = observation_table(m, p, budget)?;

    let eps_star = 6f64.sqrt() * delta;
    let small_normalizer = [0.1, 0.5, eps_star]
        .into_iter()
        .filter(|&e| e > 0.0)
        .map(|eps| {
            let prob = table.planted_small_normalizer_prob(eps);
            SmallNormalizerCheck {
                eps,
                prob,
                holds: prob <= eps + MOMENT_SLACK,
            }
        })
        .collect();
    let planting_inequality_holds = eps_star == 0.0
        || normalized_truncation <= eps_star + coupling.truncated_normalizer / eps_star + MOMENT_SLACK;
    let bounds_apply = 7.0 * delta < 1.0;
    let bounds_hold = !bounds_apply
        || (coupling.truncated_normalizer <= 6.0 * delta * delta + MOMENT_SLACK
            && coupling.tail <= 6.0 * delta + MOMENT_SLACK);
    Ok(LemmaChainReport {
        p,
        r,
        delta,
        tail_probability: coupling.tail,
        normalized_truncation,
        planted_truncation: coupling.truncated_normalizer,
        truncated_second_moment: truncated,
        first_equality_holds: close(coupling.tail, normalized_truncation),
        second_equality_holds: close(coupling.truncated_normalizer, truncated),
        small_normalizer,
        planting_inequality_holds,
        bounds_apply,
        bounds_hold,
    })
}
