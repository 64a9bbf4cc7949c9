//! The planted model.
//!
//! A signal `A ~ π` and independent noise `V ~ Q_p` produce the observation
//! `Y = A ∪ V`. The posterior of the signal given `Y` is
//!
//! ```text
//! P(A′ | Y) = π(A′)·1{A′ ⊆ Y} / (p^|A′| · Z_Y),   Z_Y = Σ_A′ π(A′)·1{A′ ⊆ Y} / p^|A′|
//! ```
//!
//! and `Z_Y` is also the likelihood ratio between the planted and null
//! (`Y = V`) laws of the observation. Drawing `A′` from the posterior gives
//! the coupling of `A`, `A′` and `V`; see [`exact`] for the enumerators that
//! evaluate its expectations without sampling.

pub mod exact;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::numeric::{compensated_sum, log_sum_exp};
use crate::setcore::{SubsetMask, Universe};

pub use exact::{
    observation_table, posterior_tail_by_observation, theorem21_check, theorem21_expectation_exact,
    theorem21_tail_exact, CouplingEnumeration, ObservationTable, Theorem21Report,
};

/// Rejects anything outside `(0, 1]`.
pub fn validate_p(p: f64) -> Result<()> {
    if p.is_nan() || p <= 0.0 || p > 1.0 {
        return Err(Error::invalid(format!("p must lie in (0, 1], got {p}")));
    }
    Ok(())
}

/// Default truncation `δ = (pR)^{-1/3}`.
pub fn default_delta(p: f64, r: f64) -> f64 {
    (p * r).powf(-1.0 / 3.0)
}

/// `ℓ > δ·size`, the strict overlap threshold.
pub fn exceeds_fraction(overlap: usize, delta: f64, size: usize) -> bool {
    overlap as f64 > delta * size as f64
}

/// Source of `V ~ Q_p`: each element present independently with probability `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasedSampler {
    universe: Universe,
    p: f64,
}

impl BiasedSampler {
    pub fn new(universe: Universe, p: f64) -> Result<Self> {
        validate_p(p)?;
        Ok(BiasedSampler { universe, p })
    }

    /// Also admits `p = 0`, which always returns `∅`. Only the sampler and
    /// the cover probability accept this boundary.
    pub fn with_boundary(universe: Universe, p: f64) -> Result<Self> {
        if p.is_nan() || !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("p must lie in [0, 1], got {p}")));
        }
        Ok(BiasedSampler { universe, p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SubsetMask {
        let mut bits = 0u128;
        for e in 0..self.universe.size() {
            if rng.random::<f64>() < self.p {
                bits |= 1 << e;
            }
        }
        self.universe.mask_unchecked(bits)
    }

    /// `Q_p(V) = p^|V| (1-p)^{N-|V|}`.
    pub fn prob_of(&self, v: &SubsetMask) -> f64 {
        let j = v.len() as i32;
        self.p.powi(j) * (1.0 - self.p).powi(self.universe.size() as i32 - j)
    }
}

pub fn sample_biased<R: Rng + ?Sized>(b: &BiasedSampler, rng: &mut R) -> SubsetMask {
    b.sample(rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TruncationParams {
    pub delta: f64,
}

impl TruncationParams {
    /// Any finite `δ > 0`. Values of one or more are allowed: at small `pR`
    /// the default `(pR)^{-1/3}` lands there.
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::invalid(format!("delta must be finite and positive, got {delta}")));
        }
        Ok(TruncationParams { delta })
    }

    pub fn default_for(p: f64, r: f64) -> Result<Self> {
        Self::new(default_delta(p, r))
    }
}

/// One draw `(A, V, Y, A′)` from the coupling, with the normalizer `Z_Y`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlantedDraw {
    pub signal: SubsetMask,
    pub noise: SubsetMask,
    pub observation: SubsetMask,
    pub resample: SubsetMask,
    pub normalizer: f64,
}

impl PlantedDraw {
    /// `|A′ ∩ A| / |A|`, zero for an empty signal.
    pub fn overlap_fraction(&self) -> f64 {
        if self.signal.is_empty() {
            0.0
        } else {
            (self.signal.bits() & self.resample.bits()).count_ones() as f64 / self.signal.len() as f64
        }
    }
}

/// A measure paired with a noise level, with the per-member log weights
/// `ln π(A) − |A| ln p` precomputed.
#[derive(Clone, Debug)]
pub struct PlantedModel<'a> {
    measure: &'a DiscreteMeasure,
    noise: BiasedSampler,
    ln_terms: Vec<f64>,
}

impl<'a> PlantedModel<'a> {
    pub fn new(measure: &'a DiscreteMeasure, p: f64) -> Result<Self> {
        let noise = BiasedSampler::new(measure.universe(), p)?;
        let neg_ln_p = -p.ln();
        let ln_terms = measure
            .iter()
            .map(|(a, w)| w.ln() + a.len() as f64 * neg_ln_p)
            .collect();
        Ok(PlantedModel {
            measure,
            noise,
            ln_terms,
        })
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        self.measure
    }

    pub fn p(&self) -> f64 {
        self.noise.p()
    }

    pub fn noise(&self) -> &BiasedSampler {
        &self.noise
    }

    pub(crate) fn ln_terms(&self) -> &[f64] {
        &self.ln_terms
    }

    fn consistent_terms(&self, y: &SubsetMask) -> Vec<(usize, f64)> {
        let yb = y.bits();
        self.measure
            .members()
            .iter()
            .enumerate()
            .filter(|(_, a)| a.bits() & yb == a.bits())
            .map(|(i, _)| (i, self.ln_terms[i]))
            .collect()
    }

    /// `ln Z_Y`, `-inf` when no member fits inside `Y`.
    pub fn ln_z_y(&self, y: &SubsetMask) -> Result<f64> {
        self.measure.universe().check(y)?;
        let terms: Vec<f64> = self.consistent_terms(y).into_iter().map(|t| t.1).collect();
        Ok(log_sum_exp(&terms))
    }

    pub fn z_y(&self, y: &SubsetMask) -> Result<f64> {
        Ok(self.ln_z_y(y)?.exp())
    }

    /// Posterior weights over support indices, normalized.
    fn posterior_weights(&self, y: &SubsetMask) -> Result<Vec<(usize, f64)>> {
        self.measure.universe().check(y)?;
        let terms = self.consistent_terms(y);
        if terms.is_empty() {
            return Err(Error::NoConsistentSignal);
        }
        let max = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<(usize, f64)> = terms.iter().map(|&(i, t)| (i, (t - max).exp())).collect();
        let total = compensated_sum(scaled.iter().map(|t| t.1));
        Ok(scaled.into_iter().map(|(i, w)| (i, w / total)).collect())
    }

    pub fn posterior(&self, y: &SubsetMask) -> Result<DiscreteMeasure> {
        let weights = self.posterior_weights(y)?;
        let members = self.measure.members();
        DiscreteMeasure::from_weighted(
            self.measure.universe(),
            weights.into_iter().map(|(i, w)| (members[i], w)),
        )
    }

    pub fn sample_posterior<R: Rng + ?Sized>(&self, y: &SubsetMask, rng: &mut R) -> Result<SubsetMask> {
        let weights = self.posterior_weights(y)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(i, w) in &weights {
            acc += w;
            if u < acc {
                return Ok(self.measure.members()[i]);
            }
        }
        Ok(self.measure.members()[weights[weights.len() - 1].0])
    }

    /// Draws `A ~ π`, then `V ~ Q_p`, then `A′` from the posterior given
    /// `Y = A ∪ V`, in that order.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> PlantedDraw {
        let signal = self.measure.sample(rng);
        let noise = self.noise.sample(rng);
        let observation = signal.with_bits(signal.bits() | noise.bits());
        let resample = self
            .sample_posterior(&observation, rng)
            .expect("the signal itself is consistent with Y");
        let normalizer = self.z_y(&observation).expect("same universe");
        PlantedDraw {
            signal,
            noise,
            observation,
            resample,
            normalizer,
        }
    }
}

/// `Z_Y = Σ_A′ π(A′)·1{A′ ⊆ Y}/p^|A′|`; zero when nothing fits.
pub fn z_y(m: &DiscreteMeasure, p: f64, y: &SubsetMask) -> Result<f64> {
    PlantedModel::new(m, p)?.z_y(y)
}

/// Posterior law of the signal given the observation `y`.
pub fn posterior(m: &DiscreteMeasure, p: f64, y: &SubsetMask) -> Result<DiscreteMeasure> {
    PlantedModel::new(m, p)?.posterior(y)
}

pub fn sample_coupling<R: Rng + ?Sized>(m: &DiscreteMeasure, p: f64, rng: &mut R) -> Result<PlantedDraw> {
    Ok(PlantedModel::new(m, p)?.draw(rng))
}
