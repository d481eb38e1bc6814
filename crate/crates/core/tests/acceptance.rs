//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod support;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestError, TestRunner};
use qprop::basinhopper::{basin_hop, scaling_trials, DurrHoyerParams};
use qprop::optimize::{
    finite_difference, minimize, DerivativeSource, Method, OptimizerConfig, QuantumSettings,
};
use qprop::report::{default_table_oracle, table1_report};
use qprop::{
    estimate_gradient, uncomputation_ablation, BoxMode, DerivativePlan, EnergyOracle,
    PerturbationDomain, PrecisionPlan,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn query_table() -> Outcome {
    let start = Instant::now();
    for d in [1, 2, 3, 5] {
        let oracle = default_table_oracle(d).map_err(err)?;
        let table = table1_report(&oracle, &[1, 2, 3, 4], 2).map_err(err)?;
        let measured: Vec<u64> = table.rows.iter().map(|r| r.quantum_measured).collect();
        ensure(measured == [1, 2, 4, 8], format!("d={d}: measured {measured:?}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("1/2/4/8 for d in 1,2,3,5 in {elapsed:.2?}"))
}

fn classical_counts() -> Outcome {
    for d in 1..=6 {
        let oracle = EnergyOracle::from_model("linear", &json!({ "gradient": vec![0.125; d] }))
            .map_err(err)?;
        let fd = finite_difference(&oracle, &vec![0.0; d], 1, 1e-5).map_err(err)?;
        ensure(
            fd.queries == d as u64 + 1 && oracle.calls() == d as u64 + 1,
            format!("d={d}: {} reported, {} counted", fd.queries, oracle.calls()),
        )?;
    }
    Ok("d+1 energy calls for d = 1..6".into())
}

fn exact_linear() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let d = rng.random_range(1..=3usize);
        let n = rng.random_range(2..=6u32);
        let points = 1i64 << n;
        let m = 1.0;
        let slopes: Vec<f64> = (0..d)
            .map(|_| rng.random_range(-points / 2 + 1..points / 2) as f64 * m / points as f64)
            .collect();
        let oracle = EnergyOracle::from_model("linear", &json!({ "gradient": slopes }))
            .map_err(err)?;
        let plan = PrecisionPlan::new(n, m, 0.5, PI / 8.0, 40).map_err(err)?;
        let domain = PerturbationDomain::new(vec![0.0; d], 0.5).map_err(err)?;
        let run = estimate_gradient(&oracle, &domain, &plan).map_err(err)?;
        let est = run.estimate;
        ensure(
            est.decoded == slopes,
            format!("case {case}: decoded {:?}, slopes {slopes:?}", est.decoded),
        )?;
        worst = worst.max((1.0 - est.success_probability).abs());
        ensure(worst < 1e-9, format!("case {case}: probability {}", est.success_probability))?;
    }
    Ok(format!("20 slopes exact, max |1 - p| = {worst:.1e}"))
}

fn precision_relation() -> Outcome {
    let oracle = EnergyOracle::from_model("quadratic_form", &json!({"matrix": [[1.0]]}))
        .map_err(err)?
        .with_derivative_bounds(vec![0.5, 1.0, 0.0])
        .map_err(err)?;
    let (n, h) = (4, 1.0 / 64.0);
    let domain = PerturbationDomain::new(vec![0.25], h).map_err(err)?;
    let mut sweep = Vec::new();
    for bits in n..=n + 4 {
        let plan = PrecisionPlan::new(n, 1.0, h, PI / 8.0, bits).map_err(err)?;
        sweep.push(estimate_gradient(&oracle, &domain, &plan).map_err(err)?.estimate.success_probability);
    }
    let at_target = sweep[4];
    ensure(at_target >= 0.80, format!("p = {at_target} at n_E = n + 4"))?;
    ensure(
        sweep.windows(2).all(|w| w[1] >= w[0]),
        format!("sweep not non-decreasing: {sweep:?}"),
    )?;
    let shown: Vec<String> = sweep.iter().map(|p| format!("{p:.4}")).collect();
    Ok(format!("p = {at_target:.4} at n_E = 8; sweep n_E 4..8: {}", shown.join(" ")))
}

fn uncomputation_necessity() -> Outcome {
    let oracle = EnergyOracle::from_model("quadratic_form", &json!({"matrix": [[0.5]]}))
        .map_err(err)?
        .with_region(vec![(-3.0, 3.0)])
        .map_err(err)?;
    let levels = vec![
        PrecisionPlan::new(4, 1.0, 1.0 / 16.0, PI / 8.0, 8).map_err(err)?,
        PrecisionPlan::new(4, 2.0, 2.0, PI / 8.0, 8).map_err(err)?,
    ];
    let step = levels[1].m / levels[1].points() as f64;
    let domain = PerturbationDomain::new(vec![0.0], 2.0).map_err(err)?;
    let rep = uncomputation_ablation(&oracle, &domain, &DerivativePlan::new(levels, BoxMode::Nested))
        .map_err(err)?;
    let (with, without) = (rep.success_with(), rep.success_without());
    ensure(with - without >= 0.1, format!("with {with}, without {without}"))?;
    let decoded = rep.reverse.entries[0];
    ensure((decoded - 0.5).abs() <= step, format!("decoded {decoded}, analytic 0.5"))?;
    Ok(format!(
        "p = {with:.4} with, {without:.4} without (global phase only: {:.4}); H = {decoded}",
        rep.global_phase_only.success_probability
    ))
}

/// Tridiagonal bowl with unit diagonal and 1/2 off the diagonal.
fn bowl(d: usize) -> EnergyOracle {
    let matrix: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| match i.abs_diff(j) {
                    0 => 1.0,
                    1 => 0.5,
                    _ => 0.0,
                })
                .collect()
        })
        .collect();
    let minimum: Vec<f64> = (0..d).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
    EnergyOracle::from_model("quadratic_form", &json!({ "matrix": matrix, "minimum": minimum }))
        .unwrap()
        .with_region(vec![(-4.0, 4.0); d])
        .unwrap()
        .with_derivative_bounds(vec![1.0, 1.0, 0.0])
        .unwrap()
}

fn newton_accounting() -> Outcome {
    for d in 1..=6 {
        let oracle = bowl(d);
        let minimum: Vec<f64> = (0..d).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let config = OptimizerConfig {
            source: DerivativeSource::Quantum,
            trust_radius: 4.0,
            quantum: QuantumSettings {
                n: if d < 6 { 4 } else { 3 },
                ..QuantumSettings::default()
            },
            ..OptimizerConfig::default()
        };
        for axis in [0, d - 1] {
            let mut start = minimum.clone();
            start[axis] += if axis == 0 { 1.0 } else { -1.0 };
            let before = oracle.calls();
            let trace = minimize(&oracle, &start, &config).map_err(err)?;
            let counted = oracle.calls() - before;
            ensure(
                trace.converged && trace.iterations() == 1 && trace.total_queries == 3 && counted == 3,
                format!(
                    "d={d}: {} iterations, {} queries ({counted} counted), converged {}",
                    trace.iterations(),
                    trace.total_queries,
                    trace.converged
                ),
            )?;
            let miss = trace
                .final_point()
                .iter()
                .zip(&minimum)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            ensure(miss < 1e-12, format!("d={d}: final point off by {miss}"))?;
        }
    }
    let morse = EnergyOracle::from_model("morse_1d", &json!({})).map_err(err)?;
    let trace = minimize(&morse, &[1.2], &OptimizerConfig::default()).map_err(err)?;
    let miss = (trace.final_point()[0] - 1.0).abs();
    ensure(trace.converged && miss < 1e-8, format!("Morse ends {miss} from R_e"))?;
    Ok(format!(
        "bowls d = 1..6: 1 iteration, 3 queries; Morse |R - R_e| = {miss:.1e} in {} iterations",
        trace.iterations()
    ))
}

fn householder_charge() -> Outcome {
    let oracle = EnergyOracle::from_model("morse_1d", &json!({})).map_err(err)?;
    let mut seen = Vec::new();
    for order in 1..=3u32 {
        let config = OptimizerConfig {
            method: Method::Householder { order },
            source: DerivativeSource::Quantum,
            max_iters: 3,
            trust_radius: 0.1,
            quantum: QuantumSettings { n: 6, ..QuantumSettings::default() },
            ..OptimizerConfig::default()
        };
        let before = oracle.calls();
        let trace = minimize(&oracle, &[1.3], &config).map_err(err)?;
        let want = (1u64 << (order + 1)) - 1;
        ensure(
            !trace.queries.is_empty() && trace.queries.iter().all(|&q| q == want),
            format!("order {order}: per-round {:?}, want {want}", trace.queries),
        )?;
        let rounds = trace.queries.len() as u64;
        ensure(
            trace.total_queries == want * rounds && oracle.calls() - before == want * rounds,
            format!("order {order}: total {} over {rounds} rounds", trace.total_queries),
        )?;
        seen.push(want);
    }
    Ok(format!("per-round charges {seen:?}"))
}

fn durr_hoyer() -> Outcome {
    let start = Instant::now();
    let rep = scaling_trials(&[16, 64, 256, 1024], 200, 8, &DurrHoyerParams::default())
        .map_err(err)?;
    let elapsed = start.elapsed();
    for s in rep.summaries.iter().filter(|s| s.k <= 256) {
        ensure(
            s.success_fraction >= 0.5,
            format!("K={}: success {}", s.k, s.success_fraction),
        )?;
    }
    ensure(rep.exponent <= 0.75, format!("exponent {}", rep.exponent))?;
    ensure(elapsed < Duration::from_secs(120), format!("took {elapsed:?}"))?;
    let worst = rep.summaries.iter().map(|s| s.success_fraction).fold(1.0, f64::min);
    Ok(format!(
        "200 trials per K, min success {worst:.3}, exponent {:.3}, {elapsed:.2?}",
        rep.exponent
    ))
}

/// Dense-grid minimum polished by analytic Newton.
fn grid_minimum(oracle: &EnergyOracle, points: usize) -> Result<f64, String> {
    let region = oracle.region();
    let coord = |axis: usize, i: usize| {
        let (lo, hi) = region[axis];
        (lo + (hi - lo) * i as f64 / (points - 1) as f64).min(hi)
    };
    let mut best = (f64::INFINITY, vec![0.0, 0.0]);
    for i in 0..points {
        for j in 0..points {
            let p = vec![coord(0, i), coord(1, j)];
            let e = oracle.peek(&p).map_err(err)?;
            if e < best.0 {
                best = (e, p);
            }
        }
    }
    let config = OptimizerConfig {
        trust_radius: 0.05,
        max_iters: 200,
        ..OptimizerConfig::default()
    };
    let trace = minimize(oracle, &best.1, &config).map_err(err)?;
    ensure(trace.converged, "grid polish did not converge")?;
    Ok(trace.final_energy())
}

fn basin_hopping() -> Outcome {
    let oracle = EnergyOracle::from_model("mueller_brown_2d", &json!({})).map_err(err)?;
    let reference = grid_minimum(&oracle, 400)?;
    let local = OptimizerConfig {
        trust_radius: 0.05,
        adaptive_trust: true,
        max_iters: 200,
        ..OptimizerConfig::default()
    };
    let (mut successes, mut worst) = (0, 0.0f64);
    let trials = 10;
    for seed in 0..trials {
        let rep = basin_hop(&oracle, 32, seed, &local, &DurrHoyerParams::default(), 1e-9)
            .map_err(err)?;
        if rep.quantum.success {
            successes += 1;
            let gap = (rep.global_energy - reference).abs();
            worst = worst.max(gap);
            ensure(gap <= 1e-3, format!("seed {seed}: {} vs {reference}", rep.global_energy))?;
        }
    }
    ensure(successes > 0, "no successful trials")?;
    Ok(format!(
        "{successes}/{trials} successful, reference {reference:.6}, max gap {worst:.1e}"
    ))
}

fn named<T: std::fmt::Debug>(name: &str, r: Result<(), TestError<T>>) -> Result<(), String> {
    r.map_err(|e| format!("{name}: {e}"))
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn property_suites() -> Outcome {
    let r = runner(48).run(&support::small_state(), |s| support::check_qft_roundtrip(&s));
    named("QFT unitarity", r)?;
    let r = runner(48).run(&(support::small_state(), -1.0f64..1.0), |(s, t)| {
        support::check_norm(&s, t)
    });
    named("norm preservation", r)?;
    let r = runner(48).run(
        &(1u32..=4).prop_flat_map(|q| (Just(q), prop::collection::vec(0usize..(1 << q), 1..=3))),
        |(q, c)| support::check_linear_phase(q, &c),
    );
    named("linear-phase exactness", r)?;
    for model in 0..support::multi_dim_models().len() {
        let r = runner(16).run(&support::unit_point(), |t| support::check_hessian_symmetry(model, &t));
        named(support::multi_dim_models()[model].0, r)?;
    }
    for model in 0..support::model_zoo().len() {
        let r = runner(100).run(&support::unit_point(), |t| support::check_analytic_vs_fd(model, &t));
        named(support::model_zoo()[model].0, r)?;
    }
    Ok("QFT unitarity, norm, linear phase, Hessian symmetry, analytic vs FD (100 points per model)".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("query-count table", query_table),
        ("classical baseline counts", classical_counts),
        ("exact-linear gradient", exact_linear),
        ("precision relation", precision_relation),
        ("uncomputation necessity", uncomputation_necessity),
        ("Newton accounting and exactness", newton_accounting),
        ("Householder charge", householder_charge),
        ("Durr-Hoyer", durr_hoyer),
        ("Muller-Brown basin hopping", basin_hopping),
        ("property suites", property_suites),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Ok(Err(why)) => {
                failed += 1;
                let why = why.split_whitespace().collect::<Vec<_>>().join(" ");
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {:>2} {name}: panicked", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
