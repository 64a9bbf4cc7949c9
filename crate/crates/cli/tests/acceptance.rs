//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spreadlab::families::{k_uniform_family, matching_overlap_stats, perfect_matchings};
use spreadlab::format::parse_family_file;
use spreadlab::moments::PZ_THRESHOLD;
use spreadlab::numeric::derive_seed;
use spreadlab::planted::{default_delta, observation_table, theorem21_check, PlantedModel};
use spreadlab::{
    check_spread, conditional_law_spread_check, cover_probability_exact, cover_probability_mc, lemma_chain_check,
    max_spread_factor, run_traces, threshold_sweep, truncated_second_moment, Budget, CouplingConfig, CoverMode,
    DiscreteMeasure, Error, MomentPath, Universe,
};

const MIXED_FAMILY: &str = "\
# mixed sizes, explicit weights
N=7
0 w=0.1
1 2 w=0.2
0 3 4 w=0.25
2 5 6 w=0.15
1 3 5 6 w=0.2
4 6 w=0.1
";

type Criterion = fn() -> Verdict;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn budget() -> Budget {
    Budget::default()
}

fn k4() -> DiscreteMeasure {
    perfect_matchings(4).unwrap().measure().clone()
}

fn pairs_of(n: usize) -> DiscreteMeasure {
    k_uniform_family(n, 2, false, &budget())
        .unwrap()
        .measure()
        .unwrap()
        .clone()
}

fn mixed() -> DiscreteMeasure {
    DiscreteMeasure::from_family_file(parse_family_file(MIXED_FAMILY).unwrap()).unwrap()
}

fn named_families() -> Vec<(&'static str, DiscreteMeasure)> {
    vec![("K_4 matchings", k4()), ("2-subsets of [6]", pairs_of(6)), ("mixed file", mixed())]
}

/// Random measure on `[n]`, `n` in `ns`, with `1..=max_m` members.
fn random_measure(rng: &mut ChaCha8Rng, ns: std::ops::RangeInclusive<usize>, max_m: usize) -> DiscreteMeasure {
    let n = rng.random_range(ns);
    let x = Universe::new(n).unwrap();
    let count = rng.random_range(1..=max_m);
    let entries: Vec<_> = (0..count)
        .map(|_| {
            let bits = rng.random::<u128>() & ((1u128 << n) - 1);
            (x.from_bits(bits).unwrap(), rng.random_range(0.05..1.0))
        })
        .collect();
    DiscreteMeasure::from_weighted(x, entries).unwrap()
}

fn c1_normalizer() -> Verdict {
    let mut worst = 0.0f64;
    let mut slowest = Duration::ZERO;
    for (_, m) in named_families() {
        for p in [0.2, 0.5, 0.8] {
            let t0 = Instant::now();
            let t = observation_table(&m, p, &budget()).unwrap();
            slowest = slowest.max(t0.elapsed());
            worst = worst.max((t.normalizer_mean() - 1.0).abs());
        }
    }
    verdict(
        worst < 1e-9 && slowest < Duration::from_secs(10),
        format!("max |E_Q Z - 1| = {worst:.2e}, slowest {:.3} s", slowest.as_secs_f64()),
    )
}

fn c2_radon_nikodym() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut instances: Vec<DiscreteMeasure> = named_families().into_iter().map(|f| f.1).collect();
    instances.extend((0..5).map(|_| random_measure(&mut rng, 10..=12, 8)));
    let mut worst = 0.0f64;
    for m in &instances {
        assert!(m.universe().size() <= 12);
        for p in [0.2, 0.5, 0.8] {
            worst = worst.max(observation_table(m, p, &budget()).unwrap().radon_nikodym_error());
        }
    }
    verdict(
        worst < 1e-10,
        format!("{} instances x 3 p, max |P_p(Y) - Q_p(Y) Z_Y| = {worst:.2e}", instances.len()),
    )
}

fn c3_lemma_chain() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = random_measure(&mut rng, 3..=8, 6);
        let p = rng.random_range(0.1..0.9);
        let rep = lemma_chain_check(&m, p, None, None, &budget()).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        worst = worst
            .max(rel(rep.tail_probability, rep.normalized_truncation))
            .max(rel(rep.planted_truncation, rep.truncated_second_moment));
        if !(rep.first_equality_holds && rep.second_equality_holds) {
            failures += 1;
        }
    }
    verdict(
        failures == 0 && worst <= 1e-9,
        format!("20 instances, {failures} failures, max relative gap {worst:.2e}"),
    )
}

fn c4_theorem() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut instances: Vec<DiscreteMeasure> = named_families().into_iter().map(|f| f.1).collect();
    instances.push(perfect_matchings(6).unwrap().measure().clone());
    instances.extend((0..20).map(|_| random_measure(&mut rng, 3..=10, 8)));
    let (mut checked, mut failures, mut tail_applies) = (0, 0, 0);
    let mut worst_ratio = 0.0f64;
    for m in &instances {
        for p in [0.2, 0.5, 0.8] {
            let rep = theorem21_check(m, p, None, &budget()).unwrap();
            checked += 1;
            if !rep.holds() {
                failures += 1;
            }
            if rep.tail_bound_applies {
                tail_applies += 1;
            }
            if rep.expectation_bound.is_finite() && rep.expectation_bound > 0.0 {
                worst_ratio = worst_ratio.max(rep.expectation / rep.expectation_bound);
            }
        }
    }
    let elapsed = t0.elapsed();
    verdict(
        failures == 0 && elapsed < Duration::from_secs(120),
        format!(
            "{checked} checks, {failures} failures, tail bound in force on {tail_applies}, \
             max expectation/bound {worst_ratio:.3}, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn c5_nonvacuous() -> Verdict {
    let t0 = Instant::now();
    let f = k_uniform_family(2000, 3, true, &budget()).unwrap();
    let p = 0.6;
    let (rstar, _) = f.max_spread_factor();
    let delta = default_delta(p, rstar);
    let value = truncated_second_moment(&f, p, delta, MomentPath::ClosedForm, &budget()).unwrap();
    let bound = 6.0 * delta * delta;
    let elapsed = t0.elapsed();
    verdict(
        7.0 * delta < 1.0 && value <= bound && elapsed < Duration::from_secs(1),
        format!(
            "pR* = {:.1}, 7δ = {:.4}, truncated = {value:.3e} <= 6δ² = {bound:.3e}, {:.3} s",
            p * rstar,
            7.0 * delta,
            elapsed.as_secs_f64()
        ),
    )
}

fn c6_counterexample() -> Verdict {
    let t0 = Instant::now();
    let mf = perfect_matchings(10).unwrap();
    let stats = matching_overlap_stats(&mf, &budget()).unwrap();
    let p = 10f64.ln() / 10.0;
    let term = stats.prob_one / p;
    let elapsed = t0.elapsed();
    verdict(
        term > PZ_THRESHOLD && (stats.mean - 5.0 / 9.0).abs() < 1e-12 && elapsed < Duration::from_secs(30),
        format!(
            "P(l=1)/p = {term:.4} > 10/9, mean overlap {:.15} vs 5/9, {:.2} s",
            stats.mean,
            elapsed.as_secs_f64()
        ),
    )
}

/// `ln R*` over all `2^N` sets, summing weights directly.
fn brute_force_ln_rstar(m: &DiscreteMeasure) -> Option<f64> {
    let n = m.universe().size();
    let mut best = f64::INFINITY;
    for s in 1u128..(1 << n) {
        let prob: f64 = m.iter().filter(|(a, _)| s & !a.bits() == 0).map(|(_, w)| w).sum();
        if prob > 0.0 {
            best = best.min(-prob.ln() / s.count_ones() as f64);
        }
    }
    best.is_finite().then_some(best)
}

fn c7_spread_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut discrepancies = 0;
    for _ in 0..100 {
        let m = random_measure(&mut rng, 1..=10, 8);
        let ok = match (brute_force_ln_rstar(&m), max_spread_factor(&m, &budget())) {
            (None, Err(Error::UnboundedSpread)) => true,
            (Some(ln), Ok(rep)) => {
                let rs = rep.max_spread_factor;
                let agree = (rs.ln() - ln).abs() <= 1e-9 * ln.abs().max(1.0);
                let below = rs * (1.0 - 1e-6);
                let above = rs * (1.0 + 1e-6);
                let verdicts = (below <= 1.0 || check_spread(&m, below, &budget()).unwrap().passed)
                    && !check_spread(&m, above, &budget()).unwrap().passed;
                agree && verdicts
            }
            _ => false,
        };
        if !ok {
            discrepancies += 1;
        }
    }
    let k4 = max_spread_factor(&k4(), &budget()).unwrap().max_spread_factor;
    verdict(
        discrepancies == 0 && (k4 - 3f64.sqrt()).abs() < 1e-9,
        format!("100 measures, {discrepancies} discrepancies, R*(K_4) = {k4:.12}"),
    )
}

fn tv(exact: &DiscreteMeasure, counts: &std::collections::HashMap<u128, u64>, n: u64) -> f64 {
    let mut total = 0.0;
    for (s, w) in exact.iter() {
        total += (counts.get(&s.bits()).copied().unwrap_or(0) as f64 / n as f64 - w).abs();
    }
    let outside: u64 = counts
        .iter()
        .filter(|(b, _)| exact.members().iter().all(|m| m.bits() != **b))
        .map(|(_, c)| c)
        .sum();
    (total + outside as f64 / n as f64) / 2.0
}

fn c8_posterior() -> Verdict {
    const DRAWS: u64 = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst_post, mut worst_marginal) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let m = random_measure(&mut rng, 4..=8, 6);
        let p = rng.random_range(0.2..0.8);
        let model = PlantedModel::new(&m, p).unwrap();
        let y = model.draw(&mut rng).observation;
        let exact = model.posterior(&y).unwrap();
        let mut counts = std::collections::HashMap::new();
        for _ in 0..DRAWS {
            *counts.entry(model.sample_posterior(&y, &mut rng).unwrap().bits()).or_insert(0) += 1;
        }
        worst_post = worst_post.max(tv(&exact, &counts, DRAWS));
        let mut marg = std::collections::HashMap::new();
        for _ in 0..DRAWS {
            *marg.entry(model.draw(&mut rng).resample.bits()).or_insert(0) += 1;
        }
        worst_marginal = worst_marginal.max(tv(&m, &marg, DRAWS));
    }
    verdict(
        worst_post < 0.01 && worst_marginal < 0.01,
        format!("10 instances, max TV posterior {worst_post:.4}, max TV marginal of A' {worst_marginal:.4}"),
    )
}

fn c9_coupling() -> Verdict {
    let m = perfect_matchings(6).unwrap().measure().clone();
    let b = budget();
    let rstar = max_spread_factor(&m, &b).unwrap().max_spread_factor;
    let cfg = CouplingConfig::new(0.9, 3, 9).unwrap();
    let traces = run_traces(&m, &cfg, 10_000, &b).unwrap();
    let chain_failures = traces.iter().filter(|t| !t.invariants_hold()).count();
    let empty: Vec<_> = traces.iter().filter(|t| t.final_a.is_empty()).collect();
    let cover_failures = empty
        .iter()
        .filter(|t| {
            t.cover_witness
                .is_none_or(|w| w.bits() & !t.union_v.bits() != 0 || m.weight_of(&w) == 0.0)
        })
        .count();
    let (mut laws, mut spread_failures) = (0, 0);
    for t in &traces {
        for c in conditional_law_spread_check(t, rstar, &b).unwrap() {
            laws += 1;
            if !c.passed {
                spread_failures += 1;
            }
        }
    }
    verdict(
        chain_failures == 0 && cover_failures == 0 && spread_failures == 0,
        format!(
            "10000 traces ({} empty): {chain_failures} chain, {cover_failures} cover, \
             {spread_failures} of {laws} spread failures at R* = {rstar:.4}",
            empty.len()
        ),
    )
}

/// Exact probability that the Wilson 95% interval from `Bin(n, p)` covers `p`.
fn wilson_coverage(n: u64, p: f64) -> f64 {
    let mut ln_pmf = n as f64 * (1.0 - p).ln();
    let mut total = 0.0;
    for s in 0..=n {
        if s > 0 {
            ln_pmf += ((n - s + 1) as f64).ln() - (s as f64).ln() + p.ln() - (1.0 - p).ln();
        }
        if spreadlab::wilson95(s, n).contains(p) {
            total += ln_pmf.exp();
        }
    }
    total
}

fn c10_sweep() -> Verdict {
    let b = budget();
    let m = pairs_of(4);
    let exact = cover_probability_exact(&m, 0.5, &b).unwrap().estimate();
    let exact_ok = (exact - 11.0 / 16.0).abs() < 1e-12;

    let root = 0.679_539_416_278_181_6;
    let step = 0.05;
    let grid: Vec<f64> = (1..20).map(|i| i as f64 * step).collect();
    let sweep = threshold_sweep(&m, &grid, CoverMode::Exact, &b).unwrap();
    let cross = sweep.p_cross.unwrap_or(f64::NAN);
    let cross_ok = (cross - root).abs() <= step;

    // replicates chosen so the exact coverage at p = 11/16 is above 0.95; seed fixed in advance
    const REPLICATES: usize = 400;
    const REPETITIONS: u64 = 200;
    let covered = (0..REPETITIONS)
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(10, i));
            cover_probability_mc(&m, 0.5, REPLICATES, &mut rng)
                .unwrap()
                .interval
                .contains(exact)
        })
        .count();
    let frac = covered as f64 / REPETITIONS as f64;
    verdict(
        exact_ok && cross_ok && frac >= 0.95,
        format!(
            "exact {exact:.15} vs 11/16; p0.9 {cross:.4} vs {root:.4} (step {step}); \
             Wilson covered {covered}/{REPETITIONS} (exact coverage at n = {REPLICATES}: {:.4})",
            wilson_coverage(REPLICATES as u64, 11.0 / 16.0)
        ),
    )
}

fn run_cli(args: &[&str], dir: &std::path::Path, threads: &str) -> bool {
    Command::new(env!("CARGO_BIN_EXE_spreadlab"))
        .args(args)
        .current_dir(dir)
        .env("RAYON_NUM_THREADS", threads)
        .env_remove("SPREADLAB_BUDGET")
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

/// Runs each command three times in fresh directories with the same relative
/// paths, so the recorded arguments match and only the outputs can differ.
fn c11_determinism() -> Verdict {
    let jobs: [(&str, &[&str], &str); 3] = [
        (
            "planted",
            &["planted-sim", "--family-file", "mixed.txt", "--p", "0.4", "--replicates", "3000", "--seed", "11"],
            "--csv",
        ),
        (
            "coupling",
            &["coupling-run", "--family", "matchings", "--n", "6", "--q", "0.5", "--m", "3", "--replicates", "2000", "--seed", "11"],
            "--traces",
        ),
        (
            "sweep",
            &["threshold-sweep", "--family", "matchings", "--n", "8", "--mode", "mc", "--replicates", "2000", "--seed", "11"],
            "--csv",
        ),
    ];
    let mut mismatches = Vec::new();
    for (name, base, table_flag) in jobs {
        let mut outputs = Vec::new();
        for threads in ["1", "4", "4"] {
            let dir = tempfile::tempdir().unwrap();
            std::fs::write(dir.path().join("mixed.txt"), MIXED_FAMILY).unwrap();
            let mut argv = base.to_vec();
            argv.extend(["--out", "summary.json", table_flag, "table.out"]);
            if !run_cli(&argv, dir.path(), threads) {
                mismatches.push(format!("{name} failed with {threads} threads"));
            }
            let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap_or_default();
            outputs.push((read("summary.json"), read("table.out")));
        }
        let empty = outputs[0].0.is_empty() || outputs[0].1.is_empty();
        if empty || outputs.windows(2).any(|w| w[0] != w[1]) {
            mismatches.push(name.to_string());
        }
    }
    verdict(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "3 commands x 3 runs (1 and 4 threads): byte-identical summaries and tables".to_string()
        } else {
            format!("differences in {mismatches:?}")
        },
    )
}

fn main() {
    let criteria: [(&str, Criterion); 11] = [
        ("normalizer identity", c1_normalizer),
        ("Radon-Nikodym identity", c2_radon_nikodym),
        ("lemma-chain equalities", c3_lemma_chain),
        ("coupling expectation and tail bounds", c4_theorem),
        ("truncated moment, nonvacuous regime", c5_nonvacuous),
        ("matching counterexample", c6_counterexample),
        ("spread checker vs brute force", c7_spread_oracle),
        ("posterior sampling", c8_posterior),
        ("iterated coupling properties", c9_coupling),
        ("threshold sweep sanity", c10_sweep),
        ("determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let v = run();
        if !v.passed {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<38} {}  {}",
            i + 1,
            name,
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
