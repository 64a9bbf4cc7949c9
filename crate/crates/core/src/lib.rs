//! Executable objects from the spread lemma and its planted-model proof:
//! spread measures over finite set systems, the planted posterior and its
//! normalizer, truncated and unrestricted second moments, the iterated
//! coupling, and the perfect-matching family where the untruncated second
//! moment fails.
//!
//! The guide under `book/` walks through each object; its code listings are
//! compiled and run as doctests of this crate.

pub mod budget;
pub mod coupling;
pub mod cover;
pub mod error;
pub mod families;
pub mod format;
pub mod measure;
pub mod moments;
pub mod numeric;
pub mod planted;
pub mod setcore;
pub mod spread;
pub mod stats;

pub use budget::Budget;
pub use coupling::{
    conditional_law_spread_check, cover_from_union, effective_p, run_rounds, run_traces, shrinkage_diagnostic,
    CouplingConfig, CouplingTrace, ShrinkageReport,
};
pub use cover::{
    cover_probability_exact, cover_probability_mc, threshold_sweep, CoverEstimate, CoverMode, SweepResult,
};
pub use error::{Error, Result};
pub use families::{
    counterexample_report, k_uniform_family, matching_overlap_stats, perfect_matchings, CounterexampleReport,
    KUniformFamily, MatchingFamily, MatchingOverlapStats,
};
pub use measure::{hypergeometric_intersection_law, DiscreteMeasure, IntersectionLaw, LawSource};
pub use setcore::{SetFamily, SubsetMask, Universe, MAX_UNIVERSE};
pub use stats::{wilson95, Interval};
pub use spread::{check_spread, max_spread_factor, spread_report, SpreadCheck, SpreadReport};
pub use planted::{
    posterior, sample_biased, sample_coupling, z_y, BiasedSampler, PlantedDraw, PlantedModel,
    TruncationParams,
};
pub use moments::{
    binomial_tail_bound, full_second_moment, lemma_chain_check, moment_report, paley_zygmund_bound,
    truncated_second_moment, MomentPath, MomentReport, OverlapSource,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/spread.md")]
    mod spread {}
    #[doc = include_str!("../../../book/src/planted.md")]
    mod planted {}
    #[doc = include_str!("../../../book/src/moments.md")]
    mod moments {}
    #[doc = include_str!("../../../book/src/coupling.md")]
    mod coupling {}
    #[doc = include_str!("../../../book/src/matchings.md")]
    mod matchings {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
