use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use spreadlab::coupling::{default_rounds, default_q_for, DefaultQ};
use spreadlab::families::{counterexample_report, matching_overlap_stats, perfect_matchings, CounterexampleReport};
use spreadlab::format::write_family_file;
use spreadlab::moments::{LemmaChainReport, MomentPath};
use spreadlab::numeric::derive_seed;
use spreadlab::planted::{
    default_delta, exceeds_fraction, observation_table, theorem21_check, PlantedModel, Theorem21Report,
};
use spreadlab::spread::{spread_report, SPREAD_TOL};
use spreadlab::{
    conditional_law_spread_check, effective_p, lemma_chain_check, max_spread_factor, moment_report, run_traces,
    shrinkage_diagnostic, threshold_sweep, wilson95, Budget, CouplingConfig, CoverMode, DiscreteMeasure, Error,
    Interval, MomentReport, ShrinkageReport, SubsetMask,
};

use crate::args::*;
use crate::error::CliError;
use crate::family::{Family, FamilySummary};
use crate::report::{csv_bytes, jsonl_bytes, Output};

/// Tolerance on `E_Q[Z_Y] = 1`.
const NORMALIZER_TOL: f64 = 1e-9;

/// Tolerance on `P_p(Y) = Q_p(Y) Z_Y`.
const RADON_NIKODYM_TOL: f64 = 1e-10;

/// `Ok(None)` for budget refusals, so optional exact sections can be skipped.
fn within_budget<T>(r: spreadlab::Result<T>) -> Result<Result<T, String>, CliError> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(e) if e.is_capacity() => Ok(Err(e.to_string())),
        Err(e) => Err(e.into()),
    }
}

/// `R*`, or `None` when the spread factor is unbounded.
fn rstar(m: &DiscreteMeasure, budget: &Budget) -> Result<Option<f64>, CliError> {
    match max_spread_factor(m, budget) {
        Ok(rep) => Ok(Some(rep.max_spread_factor)),
        Err(Error::UnboundedSpread) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn validate_probability(name: &str, p: f64) -> Result<(), CliError> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--{name} must lie in (0, 1], got {p}")))
    }
}

pub fn spread_check(a: &SpreadCheckArgs, budget: &Budget) -> Result<Output, CliError> {
    let family = Family::load(&a.family, budget)?;
    let summary = family.summary();
    let report = match (&family, family.measure()) {
        (_, Some(m)) => serde_json::to_value(spread_report(m, a.r, budget)?)?,
        (Family::KUniform(f), None) => {
            if let Some(r) = a.r {
                if r.is_nan() || r <= 1.0 {
                    return Err(Error::InvalidArgument(format!("spread parameter R must exceed 1, got {r}")).into());
                }
            }
            let (rstar, size) = f.max_spread_factor();
            let passed = a
                .r
                .map(|r| r.ln() <= rstar.ln() + SPREAD_TOL * rstar.ln().abs().max(1.0));
            json!({
                "max_spread_factor": rstar,
                "witness_size": size,
                "witness_prob": f.containment_prob(size),
                "checked": a.r.map(|r| json!({ "r": r, "passed": passed })),
            })
        }
        _ => unreachable!("only k-uniform families lack a member list"),
    };
    Output::new(json!({ "family": summary, "report": report }))
}

#[derive(Serialize)]
struct DrawRow {
    draw: usize,
    signal: String,
    noise: String,
    observation: String,
    resample: String,
    normalizer: f64,
    overlap_fraction: f64,
}

#[derive(Serialize)]
struct PlantedExact {
    theorem: Theorem21Report,
    /// `E_Q[Z_Y]`, equal to 1.
    normalizer_mean: f64,
    /// `max_Y |P_p(Y) − Q_p(Y) Z_Y|`.
    radon_nikodym_error: f64,
}

#[derive(Serialize)]
struct PlantedSummary {
    family: FamilySummary,
    p: f64,
    max_spread_factor: Option<f64>,
    delta: f64,
    draws: usize,
    mean_normalizer: f64,
    mean_overlap_fraction: f64,
    /// Share of draws with `|A′ ∩ A| > δ|A|`.
    tail: Interval,
    exact: Option<PlantedExact>,
    exact_skipped: Option<String>,
}

pub fn planted_sim(a: &PlantedSimArgs, budget: &Budget) -> Result<Output, CliError> {
    validate_probability("p", a.p)?;
    if a.replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    let family = Family::load(&a.family, budget)?;
    let m = family.require_measure("planted-sim")?;
    let model = PlantedModel::new(m, a.p)?;
    let rs = rstar(m, budget)?;
    let delta = match a.delta {
        Some(d) if d > 0.0 && d.is_finite() => d,
        Some(d) => return Err(CliError::Usage(format!("--delta must be positive, got {d}"))),
        None => default_delta(a.p, rs.unwrap_or(f64::INFINITY)),
    };
    let draws: Vec<_> = (0..a.replicates)
        .into_par_iter()
        .map(|i| model.draw(&mut ChaCha8Rng::seed_from_u64(derive_seed(a.common.seed, i as u64))))
        .collect();
    let n = draws.len() as f64;
    let tail_hits = draws
        .iter()
        .filter(|d| {
            let overlap = d.signal.intersect(&d.resample).expect("same universe").len();
            exceeds_fraction(overlap, delta, d.signal.len())
        })
        .count();

    let (exact, exact_skipped) = match within_budget(theorem21_check(m, a.p, None, budget))? {
        Ok(theorem) => match within_budget(observation_table(m, a.p, budget))? {
            Ok(table) => (
                Some(PlantedExact {
                    theorem,
                    normalizer_mean: table.normalizer_mean(),
                    radon_nikodym_error: table.radon_nikodym_error(),
                }),
                None,
            ),
            Err(why) => (None, Some(why)),
        },
        Err(why) => (None, Some(why)),
    };

    let summary = PlantedSummary {
        family: family.summary(),
        p: a.p,
        max_spread_factor: rs,
        delta,
        draws: draws.len(),
        mean_normalizer: draws.iter().map(|d| d.normalizer).sum::<f64>() / n,
        mean_overlap_fraction: draws.iter().map(|d| d.overlap_fraction()).sum::<f64>() / n,
        tail: wilson95(tail_hits as u64, draws.len() as u64),
        exact,
        exact_skipped,
    };
    let mut out = Output::new(&summary)?;
    if let Some(e) = &summary.exact {
        out.checks
            .require(e.theorem.expectation_holds, "coupling expectation exceeds 7/(pR*)^(1/3)");
        out.checks.require(e.theorem.tail_holds, "coupling tail exceeds 6δ");
        out.checks.require(
            (e.normalizer_mean - 1.0).abs() <= NORMALIZER_TOL,
            format!("E_Q[Z_Y] = {} differs from 1", e.normalizer_mean),
        );
        out.checks.require(
            e.radon_nikodym_error <= RADON_NIKODYM_TOL,
            format!("P_p(Y) vs Q_p(Y) Z_Y error {}", e.radon_nikodym_error),
        );
    }
    if let Some(path) = &a.csv {
        let rows: Vec<DrawRow> = draws
            .iter()
            .enumerate()
            .map(|(i, d)| DrawRow {
                draw: i,
                signal: d.signal.to_string(),
                noise: d.noise.to_string(),
                observation: d.observation.to_string(),
                resample: d.resample.to_string(),
                normalizer: d.normalizer,
                overlap_fraction: d.overlap_fraction(),
            })
            .collect();
        out.files.push((path.clone(), csv_bytes(&rows)?));
    }
    Ok(out)
}

fn moment_path(p: PathArg) -> MomentPath {
    match p {
        PathArg::Auto => MomentPath::Auto,
        PathArg::Pairs => MomentPath::Pairs,
        PathArg::ClosedForm => MomentPath::ClosedForm,
    }
}

#[derive(Serialize)]
struct MomentRow {
    p: f64,
    delta: f64,
    r: f64,
    truncated_value: f64,
    truncated_bound: f64,
    truncated_ratio: f64,
    truncated_bound_applies: bool,
    truncated_holds: bool,
    full_second_moment: f64,
    full_divergent: bool,
    ell_one_term: f64,
    exceeds_pz_threshold: bool,
}

impl From<&MomentReport> for MomentRow {
    fn from(r: &MomentReport) -> Self {
        MomentRow {
            p: r.p,
            delta: r.delta,
            r: r.r,
            truncated_value: r.truncated_value,
            truncated_bound: r.truncated_bound,
            truncated_ratio: r.truncated_ratio,
            truncated_bound_applies: r.truncated_bound_applies,
            truncated_holds: r.truncated_holds,
            full_second_moment: r.full_second_moment,
            full_divergent: r.full_divergent,
            ell_one_term: r.ell_one_term,
            exceeds_pz_threshold: r.exceeds_pz_threshold,
        }
    }
}

#[derive(Serialize)]
struct MomentsSummary {
    family: FamilySummary,
    max_spread_factor: Option<f64>,
    /// Whether the bounds are asserted: `R ≤ R*` and `δ = (pR)^{-1/3}`.
    asserted: bool,
    reports: Vec<MomentReport>,
    lemma_chain: Option<LemmaChainReport>,
    lemma_chain_skipped: Option<String>,
}

pub fn moments(a: &MomentsArgs, budget: &Budget) -> Result<Output, CliError> {
    let family = Family::load(&a.family, budget)?;
    let src = family.overlap_source();
    let rs = match src.spread_factor(budget) {
        Ok(r) => Some(r),
        Err(Error::UnboundedSpread) => None,
        Err(e) if e.is_capacity() => None,
        Err(e) => return Err(e.into()),
    };
    let ps: Vec<f64> = a.p_grid.clone().unwrap_or_else(|| a.p.into_iter().collect());
    let deltas: Vec<Option<f64>> = match (&a.delta_grid, a.delta) {
        (Some(g), _) => g.iter().copied().map(Some).collect(),
        (None, d) => vec![d],
    };
    for &p in &ps {
        validate_probability("p", p)?;
    }
    let path = moment_path(a.path);
    let reports: Vec<MomentReport> = ps
        .iter()
        .flat_map(|&p| deltas.iter().map(move |&d| (p, d)))
        .map(|(p, d)| moment_report(src, p, a.r, d, path, budget))
        .collect::<spreadlab::Result<_>>()?;

    let r_is_spread = match (a.r, rs) {
        (None, _) => true,
        (Some(r), Some(rs)) => r <= rs * (1.0 + SPREAD_TOL),
        (Some(_), None) => family.measure().is_some(),
    };
    let asserted = r_is_spread && deltas.iter().all(Option::is_none);

    let batch = a.p_grid.is_some() || a.delta_grid.is_some();
    let (lemma_chain, lemma_chain_skipped) = match (batch, family.measure()) {
        (false, Some(m)) => match within_budget(lemma_chain_check(m, ps[0], a.r, deltas[0], budget))? {
            Ok(rep) => (Some(rep), None),
            Err(why) => (None, Some(why)),
        },
        (false, None) => (None, Some("closed-form family has no member list".into())),
        (true, _) => (None, Some("batch mode".into())),
    };

    let summary = MomentsSummary {
        family: family.summary(),
        max_spread_factor: rs,
        asserted,
        reports,
        lemma_chain,
        lemma_chain_skipped,
    };
    let mut out = Output::new(&summary)?;
    if asserted {
        for r in &summary.reports {
            out.checks.require(
                r.truncated_holds,
                format!("truncated second moment {} exceeds 6δ² at p = {}", r.truncated_value, r.p),
            );
        }
    }
    if let Some(chain) = &summary.lemma_chain {
        out.checks
            .require(chain.first_equality_holds, "tail differs from E[Z_Y(A,δ)/Z_Y]");
        out.checks
            .require(chain.second_equality_holds, "E[Z_Y(A,δ)] differs from the truncated moment");
        out.checks.require(
            chain.small_normalizer.iter().all(|c| c.holds),
            "P_p(Z_Y ≤ ε) exceeds ε",
        );
        out.checks
            .require(chain.planting_inequality_holds, "planting inequality fails");
        if asserted {
            out.checks.require(chain.bounds_hold, "6δ² or 6δ bound fails");
        }
    }
    if let Some(csv) = &a.csv {
        let rows: Vec<MomentRow> = summary.reports.iter().map(MomentRow::from).collect();
        out.files.push((csv.clone(), csv_bytes(&rows)?));
    }
    Ok(out)
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    trace: usize,
    seed: u64,
    rounds: &'a [spreadlab::coupling::Round],
    final_a: SubsetMask,
    union_v: SubsetMask,
    cover_witness: Option<SubsetMask>,
}

#[derive(Serialize)]
struct CouplingSummary {
    family: FamilySummary,
    q: f64,
    m: usize,
    default_q: DefaultQ,
    effective_p: f64,
    max_spread_factor: Option<f64>,
    traces: usize,
    invariant_failures: usize,
    /// Empty end states with no member inside `∪ V_i`.
    cover_failures: usize,
    /// Conditional laws failing the spread check at `R*`.
    spread_failures: usize,
    laws_checked: usize,
    empty_final: Interval,
    covered: Interval,
    shrinkage: Option<ShrinkageReport>,
}

pub fn coupling_run(a: &CouplingRunArgs, budget: &Budget) -> Result<Output, CliError> {
    if a.replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    let family = Family::load(&a.family, budget)?;
    let m0 = family.require_measure("coupling-run")?;
    let rs = rstar(m0, budget)?;
    let default_q = default_q_for(rs.unwrap_or(f64::INFINITY));
    let q = match a.q {
        Some(q) => q,
        None if default_q.feasible => default_q.q,
        None => {
            return Err(CliError::Usage(format!(
                "the default q = 700³/R* = {} is not below 1; pass --q",
                default_q.q
            )))
        }
    };
    let k = m0.max_size();
    let cfg = CouplingConfig::new(q, a.m.unwrap_or_else(|| default_rounds(k)), a.common.seed)?;
    let traces = run_traces(m0, &cfg, a.replicates, budget)?;

    let checks: Vec<(bool, bool, usize, usize)> = traces
        .par_iter()
        .map(|t| {
            let spread = match rs {
                Some(r) => conditional_law_spread_check(t, r, budget),
                None => Ok(Vec::new()),
            };
            spread.map(|c| {
                let failed = c.iter().filter(|c| !c.passed).count();
                (
                    t.invariants_hold(),
                    t.final_a.is_empty() && t.cover_witness.is_none(),
                    failed,
                    c.len(),
                )
            })
        })
        .collect::<spreadlab::Result<_>>()?;
    let n = traces.len() as u64;
    let empty = traces.iter().filter(|t| t.final_a.is_empty()).count() as u64;
    let covered = traces.iter().filter(|t| t.cover_witness.is_some()).count() as u64;
    let shrinkage = if traces.len() >= spreadlab::coupling::MIN_DIAGNOSTIC_TRACES {
        Some(shrinkage_diagnostic(&traces, k, q, rs.unwrap_or(f64::INFINITY))?)
    } else {
        None
    };
    let summary = CouplingSummary {
        family: family.summary(),
        q,
        m: cfg.m,
        default_q,
        effective_p: effective_p(q, cfg.m),
        max_spread_factor: rs,
        traces: traces.len(),
        invariant_failures: checks.iter().filter(|c| !c.0).count(),
        cover_failures: checks.iter().filter(|c| c.1).count(),
        spread_failures: checks.iter().map(|c| c.2).sum(),
        laws_checked: checks.iter().map(|c| c.3).sum(),
        empty_final: wilson95(empty, n),
        covered: wilson95(covered, n),
        shrinkage,
    };
    let mut out = Output::new(&summary)?;
    out.checks.require(
        summary.invariant_failures == 0,
        format!("{} traces break A_(i+1) = B_i \\ V_i", summary.invariant_failures),
    );
    out.checks.require(
        summary.cover_failures == 0,
        format!("{} empty traces without a cover witness", summary.cover_failures),
    );
    out.checks.require(
        summary.spread_failures == 0,
        format!("{} conditional laws fail the spread check at R*", summary.spread_failures),
    );
    if let Some(path) = &a.traces {
        let records: Vec<TraceRecord> = traces
            .iter()
            .enumerate()
            .map(|(i, t)| TraceRecord {
                trace: i,
                seed: derive_seed(cfg.seed, i as u64),
                rounds: &t.rounds,
                final_a: t.final_a,
                union_v: t.union_v,
                cover_witness: t.cover_witness,
            })
            .collect();
        out.files.push((path.clone(), jsonl_bytes(&records)?));
    }
    Ok(out)
}

#[derive(Serialize)]
struct SweepRow {
    p: f64,
    estimate: f64,
    lo: f64,
    hi: f64,
    method: &'static str,
    replicates: Option<usize>,
}

pub fn sweep(a: &ThresholdSweepArgs, budget: &Budget) -> Result<Output, CliError> {
    let family = Family::load(&a.family, budget)?;
    let m = family.require_measure("threshold-sweep")?;
    let mode = match a.mode {
        SweepModeArg::Exact => CoverMode::Exact,
        SweepModeArg::Mc => CoverMode::MonteCarlo {
            replicates: a.replicates,
            seed: a.common.seed,
        },
    };
    let result = threshold_sweep(m, &a.p_grid, mode, budget)?;
    let mut out = Output::new(json!({ "family": family.summary(), "sweep": &result }))?;
    if let Some(path) = &a.csv {
        let rows: Vec<SweepRow> = result
            .points
            .iter()
            .map(|pt| SweepRow {
                p: pt.p,
                estimate: pt.estimate(),
                lo: pt.interval.lo,
                hi: pt.interval.hi,
                method: match pt.method {
                    spreadlab::cover::CoverMethod::Enumeration => "enumeration",
                    spreadlab::cover::CoverMethod::InclusionExclusion => "inclusion-exclusion",
                    spreadlab::cover::CoverMethod::MonteCarlo => "monte-carlo",
                },
                replicates: pt.replicates,
            })
            .collect();
        out.files.push((path.clone(), csv_bytes(&rows)?));
    }
    Ok(out)
}

#[derive(Serialize)]
struct DemoRow {
    n: usize,
    members: usize,
    p: f64,
    max_spread_factor: f64,
    spread_over_n: f64,
    mean_overlap: f64,
    prob_one: f64,
    ell_one_term: f64,
    full_second_moment: f64,
    unrestricted_fails: bool,
    delta: f64,
    truncated_value: f64,
    truncated_bound: f64,
}

#[derive(Serialize)]
struct DemoEntry {
    report: CounterexampleReport,
    /// Mean overlap from the pair loop, when within budget.
    pair_mean: Option<f64>,
}

pub fn matching_demo(a: &MatchingDemoArgs, budget: &Budget) -> Result<Output, CliError> {
    let entries: Vec<DemoEntry> = a
        .n
        .iter()
        .map(|&n| -> Result<DemoEntry, CliError> {
            let report = counterexample_report(n, budget)?;
            let pair_mean = within_budget(matching_overlap_stats(&perfect_matchings(n)?, budget))?
                .ok()
                .map(|s| s.mean);
            Ok(DemoEntry { report, pair_mean })
        })
        .collect::<Result<_, _>>()?;
    let mut out = Output::new(&entries)?;
    if let Some(path) = &a.csv {
        let rows: Vec<DemoRow> = entries
            .iter()
            .map(|e| {
                let r = &e.report;
                DemoRow {
                    n: r.n,
                    members: r.members,
                    p: r.p,
                    max_spread_factor: r.max_spread_factor,
                    spread_over_n: r.spread_over_n,
                    mean_overlap: r.overlap.mean,
                    prob_one: r.overlap.prob_one,
                    ell_one_term: r.ell_one_term,
                    full_second_moment: r.full_second_moment,
                    unrestricted_fails: r.unrestricted_fails,
                    delta: r.delta,
                    truncated_value: r.truncated_value,
                    truncated_bound: r.truncated_bound,
                }
            })
            .collect();
        out.files.push((path.clone(), csv_bytes(&rows)?));
    }
    Ok(out)
}

pub fn family_gen(a: &FamilyGenArgs, budget: &Budget) -> Result<Output, CliError> {
    let family = Family::load(&a.family, budget)?;
    let m = family.require_measure("family-gen")?;
    let uniform = m.weights().windows(2).all(|w| w[0] == w[1]);
    let text = write_family_file(m.universe(), m.members(), (!uniform).then(|| m.weights()));
    let mut out = Output::new(json!({
        "family": family.summary(),
        "file": a.file.as_ref().map(|p| p.display().to_string()),
    }))?;
    match &a.file {
        Some(path) => out.files.push((path.clone(), text.into_bytes())),
        None => out.stdout_override = Some(text),
    }
    Ok(out)
}
