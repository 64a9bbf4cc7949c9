//! The iterated coupling.
//!
//! Round `i` draws `V_i ~ Q_q`, resamples `B_i` from the posterior of the
//! current law `π_i` given `Y_i = A_i ∪ V_i`, and shrinks to
//! `A_{i+1} = B_i \ V_i`. The law `π_{i+1}` of `A_{i+1}` given
//! `V_1, …, V_i` is carried exactly:
//!
//! ```text
//! π_{i+1}(C) = Σ_a π_i(a) Σ_b post_{π_i,q}(b | a ∪ V_i) · 1{b \ V_i = C}
//! ```
//!
//! Its support never exceeds that of `π_i`, so spread checks stay exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::numeric::{derive_seed, CompensatedSum};
use crate::planted::{BiasedSampler, PlantedModel};
use crate::setcore::SubsetMask;
use crate::spread::{check_spread, SpreadCheck};
use crate::stats::{wilson95, Interval};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CouplingConfig {
    pub q: f64,
    pub m: usize,
    pub seed: u64,
}

impl CouplingConfig {
    pub fn new(q: f64, m: usize, seed: u64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid(format!("per-round noise q must lie in (0, 1), got {q}")));
        }
        if m == 0 {
            return Err(Error::invalid("round count m must be at least 1"));
        }
        Ok(CouplingConfig { q, m, seed })
    }

    /// Test hook: `q = 1`, so every `V_i` is the whole universe.
    pub fn full_noise(m: usize, seed: u64) -> Self {
        CouplingConfig {
            q: 1.0,
            m: m.max(1),
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DefaultQ {
    /// `700³ / R`.
    pub q: f64,
    pub feasible: bool,
}

pub fn default_q_for(r: f64) -> DefaultQ {
    let q = 700f64.powi(3) / r;
    DefaultQ {
        q,
        feasible: q > 0.0 && q < 1.0,
    }
}

/// `⌈ln k⌉`, at least 1.
pub fn default_rounds(k: usize) -> usize {
    ((k.max(1) as f64).ln().ceil() as usize).max(1)
}

/// `1 − (1 − q)^m`: the law of `∪ V_i` is `Q` at this level.
pub fn effective_p(q: f64, m: usize) -> f64 {
    1.0 - (1.0 - q).powi(m as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Round {
    pub v: SubsetMask,
    pub a: SubsetMask,
    pub b: SubsetMask,
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingTrace {
    pub rounds: Vec<Round>,
    pub final_a: SubsetMask,
    pub union_v: SubsetMask,
    /// First support member of `π` inside `∪ V_i`.
    pub cover_witness: Option<SubsetMask>,
    /// `π_1, …, π_{m+1}`.
    #[serde(skip)]
    pub laws: Vec<DiscreteMeasure>,
}

impl CouplingTrace {
    /// `A_{i+1} = B_i \ V_i`, `B_i ⊆ A_i ∪ V_i`, and an empty end state has a
    /// witness inside `∪ V_i`.
    pub fn invariants_hold(&self) -> bool {
        let chained = self.rounds.iter().enumerate().all(|(i, r)| {
            let next = self.rounds.get(i + 1).map_or(self.final_a, |n| n.a);
            let b = r.b.bits();
            next.bits() == b & !r.v.bits() && b & !(r.a.bits() | r.v.bits()) == 0
        });
        let covered = !self.final_a.is_empty()
            || self
                .cover_witness
                .is_some_and(|t| t.bits() & !self.union_v.bits() == 0);
        chained && covered
    }
}

/// `π_{i+1}` from `π_i` and the realized `V_i`.
pub fn next_law(law: &DiscreteMeasure, q: f64, v: &SubsetMask, budget: &Budget) -> Result<DiscreteMeasure> {
    let m = law.support_size() as u128;
    if m * m > budget.pairs {
        return Err(Error::capacity("conditional-law update", m * m, budget.pairs));
    }
    let model = PlantedModel::new(law, q)?;
    let keep = !v.bits();
    let mut entries: Vec<(SubsetMask, f64)> = Vec::new();
    for (a, w) in law.iter() {
        let y = a.with_bits(a.bits() | v.bits());
        let post = model.posterior(&y)?;
        entries.extend(post.iter().map(|(b, pw)| (b.with_bits(b.bits() & keep), w * pw)));
    }
    DiscreteMeasure::from_weighted(law.universe(), entries)
}

/// One trace. RNG order: `A_1`, then per round `V_i` and the `B_i` draw.
pub fn run_rounds<R: Rng + ?Sized>(
    m0: &DiscreteMeasure,
    cfg: &CouplingConfig,
    budget: &Budget,
    rng: &mut R,
) -> Result<CouplingTrace> {
    let noise = BiasedSampler::new(m0.universe(), cfg.q)?;
    let mut law = m0.clone();
    let mut laws = Vec::with_capacity(cfg.m + 1);
    let mut a = m0.sample(rng);
    let mut union = m0.universe().empty();
    let mut rounds = Vec::with_capacity(cfg.m);
    for _ in 0..cfg.m {
        let v = noise.sample(rng);
        let y = a.with_bits(a.bits() | v.bits());
        let b = PlantedModel::new(&law, cfg.q)?.sample_posterior(&y, rng)?;
        rounds.push(Round { v, a, b });
        let next = next_law(&law, cfg.q, &v, budget)?;
        laws.push(std::mem::replace(&mut law, next));
        a = b.with_bits(b.bits() & !v.bits());
        union = union.with_bits(union.bits() | v.bits());
    }
    laws.push(law);
    Ok(CouplingTrace {
        rounds,
        final_a: a,
        union_v: union,
        cover_witness: cover_from_union(m0, &union),
        laws,
    })
}

/// `replicates` traces; trace `i` uses `ChaCha8Rng` seeded with
/// `derive_seed(cfg.seed, i)`.
pub fn run_traces(
    m0: &DiscreteMeasure,
    cfg: &CouplingConfig,
    replicates: usize,
    budget: &Budget,
) -> Result<Vec<CouplingTrace>> {
    (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, i as u64));
            run_rounds(m0, cfg, budget, &mut rng)
        })
        .collect()
}

/// The first support member of `m0` inside `union_v`.
pub fn cover_from_union(m0: &DiscreteMeasure, union_v: &SubsetMask) -> Option<SubsetMask> {
    let u = union_v.bits();
    m0.members().iter().find(|t| t.bits() & !u == 0).copied()
}

/// `check_spread` on each law `π_1, …, π_{m+1}` of the trace.
pub fn conditional_law_spread_check(trace: &CouplingTrace, r: f64, budget: &Budget) -> Result<Vec<SpreadCheck>> {
    trace.laws.iter().map(|law| check_spread(law, r, budget)).collect()
}

pub const MIN_DIAGNOSTIC_TRACES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShrinkageReport {
    pub traces: usize,
    pub m: usize,
    /// Estimate of `E|A_{m+1}|^{1/m}`.
    pub mean_root: f64,
    pub std_error: f64,
    /// `7 k^{1/m} / (qR)^{1/3}`.
    pub bound: f64,
    /// The same with exponent `1/4`.
    pub bound_quarter: f64,
    pub bound_nonvacuous: bool,
    pub within_bound: bool,
    /// Per-round estimates of `E[|A_{i+1}| / |A_i| · 1{A_i ≠ ∅}]`.
    pub round_ratios: Vec<f64>,
    pub nonempty: Interval,
}

pub fn shrinkage_diagnostic(traces: &[CouplingTrace], k: usize, q: f64, r: f64) -> Result<ShrinkageReport> {
    if traces.len() < MIN_DIAGNOSTIC_TRACES {
        return Err(Error::invalid(format!(
            "shrinkage diagnostic needs at least {MIN_DIAGNOSTIC_TRACES} traces, got {}",
            traces.len()
        )));
    }
    let m = traces[0].rounds.len();
    if traces.iter().any(|t| t.rounds.len() != m) {
        return Err(Error::invalid("traces have different round counts"));
    }
    let n = traces.len() as f64;
    let roots: Vec<f64> = traces
        .iter()
        .map(|t| (t.final_a.len() as f64).powf(1.0 / m as f64))
        .collect();
    let mean = roots.iter().copied().collect::<CompensatedSum>().value() / n;
    let var = roots.iter().map(|x| (x - mean).powi(2)).collect::<CompensatedSum>().value() / (n - 1.0);
    let round_ratios = (0..m)
        .map(|i| {
            traces
                .iter()
                .map(|t| {
                    let a = t.rounds[i].a.len();
                    let next = t.rounds.get(i + 1).map_or(t.final_a, |r| r.a).len();
                    if a == 0 {
                        0.0
                    } else {
                        next as f64 / a as f64
                    }
                })
                .collect::<CompensatedSum>()
                .value()
                / n
        })
        .collect();
    let scale = 7.0 * (k as f64).powf(1.0 / m as f64);
    let bound = scale / (q * r).powf(1.0 / 3.0);
    let nonempty = traces.iter().filter(|t| !t.final_a.is_empty()).count() as u64;
    Ok(ShrinkageReport {
        traces: traces.len(),
        m,
        mean_root: mean,
        std_error: (var / n).sqrt(),
        bound,
        bound_quarter: scale / (q * r).powf(0.25),
        bound_nonvacuous: bound < 1.0,
        within_bound: mean <= bound,
        round_ratios,
        nonempty: wilson95(nonempty, traces.len() as u64),
    })
}
