//! Exact spread checks.
//!
//! A measure is `R`-spread when `π(S ⊆ A) ≤ R^{-|S|}` for every nonempty
//! `S`. Only sets contained in some support member can have positive
//! probability, so the scan runs over the union of the subset lattices of the
//! support members (at most `Σ 2^{|A|}` candidates) instead of all `2^N` sets.
//! The maximal spread factor is
//!
//! ```text
//! R* = min over nonempty S with π(S ⊆ A) > 0 of π(S ⊆ A)^{-1/|S|}
//! ```
//!
//! and all comparisons are made on `ln R` to stay clear of underflow.

use std::collections::HashMap;

use serde::Serialize;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::numeric::CompensatedSum;
use crate::setcore::{for_each_subset_bits, SubsetMask};

/// Relative tolerance on `ln R` at the pass/fail boundary.
pub const SPREAD_TOL: f64 = 1e-9;

/// Relative tolerance under which two candidates count as tied for the witness.
const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpreadCheck {
    pub r: f64,
    pub passed: bool,
    /// The worst set when the check fails.
    pub witness: Option<SubsetMask>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpreadReport {
    pub max_spread_factor: f64,
    /// Minimizer, ties broken by smallest `|S|` then smallest mask value.
    pub witness: SubsetMask,
    pub witness_prob: f64,
    pub candidates: usize,
    pub checked: Option<SpreadCheck>,
}

struct Extremum {
    bits: u128,
    size: usize,
    prob: f64,
    ln_r: f64,
}

/// `π(S ⊆ A)` for every nonempty `S` contained in some support member.
fn candidate_table(m: &DiscreteMeasure, budget: &Budget) -> Result<HashMap<u128, CompensatedSum>> {
    let needed: u128 = m.members().iter().map(|a| 1u128 << a.len().min(127)).sum();
    if needed > budget.spread_candidates {
        return Err(Error::capacity("spread candidate scan", needed, budget.spread_candidates));
    }
    let mut table: HashMap<u128, CompensatedSum> = HashMap::new();
    for (a, w) in m.iter() {
        for_each_subset_bits(a.bits(), |s| {
            if s != 0 {
                table.entry(s).or_default().add(w);
            }
        });
    }
    Ok(table)
}

fn extremum(table: &HashMap<u128, CompensatedSum>) -> Option<Extremum> {
    let scored: Vec<(u128, usize, f64, f64)> = table
        .iter()
        .map(|(&bits, sum)| {
            let prob = sum.value();
            let size = bits.count_ones() as usize;
            (bits, size, prob, -prob.ln() / size as f64)
        })
        .filter(|&(_, _, prob, _)| prob > 0.0)
        .collect();
    let best = scored.iter().map(|s| s.3).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let cutoff = best + TIE_TOL * best.abs().max(1.0);
    scored
        .into_iter()
        .filter(|s| s.3 <= cutoff)
        .min_by_key(|s| (s.1, s.0))
        .map(|(bits, size, prob, ln_r)| Extremum {
            bits,
            size,
            prob,
            ln_r,
        })
}

fn validate_r(r: f64) -> Result<()> {
    if r.is_nan() || r <= 1.0 {
        return Err(Error::invalid(format!("spread parameter R must exceed 1, got {r}")));
    }
    Ok(())
}

fn verdict(best: Option<&Extremum>, r: f64, m: &DiscreteMeasure) -> SpreadCheck {
    let ln_r = r.ln();
    match best {
        Some(e) if ln_r > e.ln_r + SPREAD_TOL * e.ln_r.abs().max(1.0) => SpreadCheck {
            r,
            passed: false,
            witness: Some(m.universe().mask_unchecked(e.bits)),
        },
        _ => SpreadCheck {
            r,
            passed: true,
            witness: None,
        },
    }
}

/// Whether `m` is `R`-spread; on failure the witness is a violating set.
pub fn check_spread(m: &DiscreteMeasure, r: f64, budget: &Budget) -> Result<SpreadCheck> {
    validate_r(r)?;
    let table = candidate_table(m, budget)?;
    Ok(verdict(extremum(&table).as_ref(), r, m))
}

/// The largest `R` for which `m` is `R`-spread, with a minimizing set.
///
/// Fails with [`Error::UnboundedSpread`] when the support holds no nonempty set.
pub fn max_spread_factor(m: &DiscreteMeasure, budget: &Budget) -> Result<SpreadReport> {
    let table = candidate_table(m, budget)?;
    let best = extremum(&table).ok_or(Error::UnboundedSpread)?;
    debug_assert!(best.size > 0);
    Ok(SpreadReport {
        max_spread_factor: best.ln_r.exp(),
        witness: m.universe().mask_unchecked(best.bits),
        witness_prob: best.prob,
        candidates: table.len(),
        checked: None,
    })
}

/// [`max_spread_factor`] plus a pass/fail verdict at a caller-chosen `R`.
pub fn spread_report(m: &DiscreteMeasure, r: Option<f64>, budget: &Budget) -> Result<SpreadReport> {
    if let Some(r) = r {
        validate_r(r)?;
    }
    let table = candidate_table(m, budget)?;
    let best = extremum(&table).ok_or(Error::UnboundedSpread)?;
    Ok(SpreadReport {
        max_spread_factor: best.ln_r.exp(),
        witness: m.universe().mask_unchecked(best.bits),
        witness_prob: best.prob,
        candidates: table.len(),
        checked: r.map(|r| verdict(Some(&best), r, m)),
    })
}
