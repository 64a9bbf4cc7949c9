//! Enumeration budgets. Exact routes refuse work beyond these caps with
//! [`Error::Capacity`](crate::Error::Capacity) instead of running for hours.

/// Caps on the exact enumeration routes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    /// Ordered member pairs for the `M²` overlap loops.
    pub pairs: u128,
    /// `Σ 2^|A|` over the support for the spread candidate scan.
    pub spread_candidates: u128,
    /// Largest `N` for loops over all `2^N` subsets of the universe.
    pub enumeration_bits: u32,
    /// Total inner-loop work (`2^N · M²`) for the planted-model enumerators.
    pub planted_work: u128,
    /// Members materialized by family generators.
    pub members: u128,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            pairs: 100_000_000,
            spread_candidates: 1 << 24,
            enumeration_bits: 20,
            planted_work: 4_000_000_000,
            members: 1_000_000,
        }
    }
}
