//! Acceptance criteria. Each prints one PASS/FAIL line; the process exits
//! non-zero when any criterion fails. Runtime budgets count as part of the
//! check.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mlr_cli::benchmark::ExperimentReport;
use mlr_cli::config::{ExperimentConfig, Procedure};
use mlr_cli::{run_benchmark, run_permutation_sweep, SweepOptions};
use mlr_core::baselines::{elastic_net_cd, kkt_residual, lasso_cd, lambda_max};
use mlr_core::criterion::{mlr_gradient, mlr_value, CriterionContext};
use mlr_core::datagen::{Scenario, ScenarioSpec};
use mlr_core::estimators::{gate, ridge};
use mlr_core::metrics::mann_whitney_u;
use mlr_core::{apply_permutation, norm_n, sample_permutations, standardize, Dataset, Family, HyperParams};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = anyhow::Result<(bool, String)>;

fn gaussian_xy(n: usize, p: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let beta = Array1::from_shape_fn(p, |_| rng.sample::<f64, _>(StandardNormal));
    let y = x.dot(&beta) + Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
    (x, y)
}

fn standardized(n: usize, p: usize, seed: u64) -> Dataset {
    let (x, y) = gaussian_xy(n, p, seed);
    standardize(&Dataset::new(x, y).unwrap()).unwrap().0
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn rows<'a>(r: &'a ExperimentReport, scenario: &'a str, p: Procedure) -> impl Iterator<Item = &'a mlr_cli::RepetitionRow> {
    r.per_repetition.iter().filter(move |row| row.scenario == scenario && row.procedure == p)
}

fn twenty_reps(scenarios: Vec<ScenarioSpec>, procedures: Vec<Procedure>) -> anyhow::Result<ExperimentReport> {
    let cfg = ExperimentConfig { scenarios, procedures, repetitions: 20, seed: 0, ..ExperimentConfig::default() };
    let report = run_benchmark(&cfg)?;
    anyhow::ensure!(report.failures.is_empty(), "cell failures: {:?}", report.failures);
    Ok(report)
}

fn flatten(hp: &HyperParams) -> Vec<f64> {
    let mut v = vec![hp.log_lambda, hp.log_kappa];
    v.extend(hp.gamma.iter());
    v.push(hp.mu);
    v
}

fn unflatten(v: &[f64]) -> HyperParams {
    let p = v.len() - 3;
    HyperParams { log_lambda: v[0], log_kappa: v[1], gamma: Array1::from(v[2..2 + p].to_vec()), mu: v[p + 2] }
}

fn gradient_vs_differences() -> Check {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for family in [Family::Ridge, Family::Sparse, Family::Aggregated] {
        for seed in 0..20u64 {
            let d = standardized(20, 5, seed);
            let ctx = CriterionContext::new(d, sample_permutations(20, 5, true, seed)?, family)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let hp = HyperParams {
                log_lambda: rng.random_range(-1.0..3.0),
                log_kappa: rng.random_range(-2.0..0.0),
                gamma: Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0)),
                mu: rng.random_range(-2.0..2.0),
            };
            let analytic = mlr_gradient(&ctx, &hp)?.gradient.to_vec();
            let x0 = flatten(&hp);
            let mut fd = Vec::with_capacity(x0.len());
            for k in 0..x0.len() {
                let (mut up, mut down) = (x0.clone(), x0.clone());
                up[k] += h;
                down[k] -= h;
                fd.push((mlr_value(&ctx, &unflatten(&up))?.value - mlr_value(&ctx, &unflatten(&down))?.value) / (2.0 * h));
            }
            let diff = analytic.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let scale = fd.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-12);
            worst = worst.max(diff / scale);
        }
    }
    Ok((worst <= 1e-4, format!("worst relative error {worst:.2e} over 60 instances, limit 1e-4")))
}

/// `V diag(s / (s² + λ)) Uᵀ y` from a thin SVD.
fn ridge_by_svd(lambda: f64, x: &Array2<f64>, y: &Array1<f64>) -> DVector<f64> {
    let (n, p) = x.dim();
    let svd = DMatrix::from_fn(n, p, |i, j| x[[i, j]]).svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let uty = u.transpose() * DVector::from_iterator(n, y.iter().copied());
    let scaled = DVector::from_iterator(uty.len(), uty.iter().zip(svd.singular_values.iter()).map(|(c, s)| c * s / (s * s + lambda)));
    vt.transpose() * scaled
}

fn ridge_oracle() -> Check {
    let mut worst: f64 = 0.0;
    let mut dual = 0;
    for seed in 0..50u64 {
        let (n, p) = if seed % 4 == 0 { (15, 40) } else { (50, 5 + seed as usize % 20) };
        dual += usize::from(p > n);
        let (x, y) = gaussian_xy(n, p, seed);
        let lambda = 10f64.powf(-2.0 + (seed % 9) as f64 * 0.5);
        let got = ridge(lambda, x.view(), y.view())?;
        let want = ridge_by_svd(lambda, &x, &y);
        let diff = got.iter().zip(want.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst = worst.max(diff / want.norm());
    }
    Ok((worst <= 1e-10, format!("worst relative error {worst:.2e} over 50 instances ({dual} with p > n), limit 1e-10")))
}

fn null_model_zero() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let d = standardized(100, 80, seed);
        let ctx = CriterionContext::new(d, sample_permutations(100, 30, true, seed)?, Family::Ridge)?;
        worst = worst.max(mlr_value(&ctx, &HyperParams::ridge(1e12, 80))?.value.abs());
    }
    Ok((worst <= 1e-6, format!("max |value| at λ = 1e12 is {worst:.2e}, limit 1e-6")))
}

fn support_recovery(b: &ExperimentReport) -> Check {
    let s = mean(rows(b, "B_sigma10", Procedure::SMlr).map(|r| r.support_accuracy));
    let cv = mean(rows(b, "B_sigma10", Procedure::CvLasso).map(|r| r.support_accuracy));
    let ok = s >= 0.90 && s >= cv - 0.02;
    Ok((ok, format!("mean support accuracy S-MLR {s:.4} (need >= 0.90 and >= {:.4}); CV-LASSO {cv:.4}", cv - 0.02)))
}

fn aggregation_selector(b: &ExperimentReport) -> Check {
    let weights: Vec<f64> = rows(b, "B_sigma10", Procedure::AMlr).map(|r| r.aggregation_weight.unwrap_or(f64::NAN)).collect();
    let small = weights.iter().filter(|w| **w <= 0.002).count();
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((small >= 18 && weights.len() == 20, format!("S(mu) <= 0.002 in {small}/{} repetitions (need 18), max {max:.2e}", weights.len())))
}

fn convergence_budget() -> Check {
    let scenarios = [Scenario::A, Scenario::B, Scenario::C]
        .into_iter()
        .flat_map(|s| [10.0, 50.0].map(|sigma| ScenarioSpec::new(s).with_sigma(sigma)))
        .collect();
    let report = twenty_reps(scenarios, vec![Procedure::RMlr, Procedure::SMlr, Procedure::AMlr])?;
    let mut its: Vec<usize> = report.per_repetition.iter().map(|r| r.iterations.unwrap_or(usize::MAX)).collect();
    let unconverged = report.per_repetition.iter().filter(|r| !r.converged || r.iterations > Some(1000)).count();
    its.sort_unstable();
    let median = (its[its.len() / 2 - 1] + its[its.len() / 2]) as f64 / 2.0;
    let ok = unconverged == 0 && median <= 100.0 && its.len() == 360;
    Ok((ok, format!("{} fits, {unconverged} not converged within 1000, median iterations {median}, max {}", its.len(), its[its.len() - 1])))
}

fn generalization_parity() -> Check {
    let report = twenty_reps(vec![ScenarioSpec::new(Scenario::A)], vec![Procedure::RMlr, Procedure::CvRidge])?;
    let r = mean(rows(&report, "A_sigma10", Procedure::RMlr).map(|r| r.r2_test));
    let cv = mean(rows(&report, "A_sigma10", Procedure::CvRidge).map(|r| r.r2_test));
    Ok((r >= cv - 0.02, format!("mean test R2 R-MLR {r:.4} vs CV-Ridge {cv:.4} (need >= {:.4})", cv - 0.02)))
}

fn permutation_plateau() -> Check {
    let sweep = run_permutation_sweep(&ScenarioSpec::new(Scenario::A), &[10, 30], 20, 0, &SweepOptions::default())?;
    let gap = (sweep[0].r2_mean - sweep[1].r2_mean).abs();
    Ok((gap <= 0.02, format!("mean test R2 T=10 {:.4}, T=30 {:.4}, gap {gap:.4}, limit 0.02", sweep[0].r2_mean, sweep[1].r2_mean)))
}

/// Two-sided p by relabelling every size-`|a|` subset of the pooled values.
fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let doubled_u = |a: &[f64], b: &[f64]| -> u64 {
        a.iter().flat_map(|x| b.iter().map(move |y| if x > y { 2 } else { u64::from(x == y) })).sum()
    };
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let observed = doubled_u(a, b);
    let (mut le, mut ge, mut total) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << pooled.len()) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let (mut sa, mut sb) = (Vec::new(), Vec::new());
        for (i, &v) in pooled.iter().enumerate() {
            if mask & (1 << i) != 0 {
                sa.push(v);
            } else {
                sb.push(v);
            }
        }
        let u = doubled_u(&sa, &sb);
        total += 1;
        le += u64::from(u <= observed);
        ge += u64::from(u >= observed);
    }
    (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
}

fn mann_whitney_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut checked, mut mismatched) = (0, Vec::new());
    for na in 1..=8usize {
        for nb in 1..=8usize {
            for tied in [true, false] {
                let mut draw = || if tied { rng.random_range(0..5) as f64 } else { rng.random::<f64>() };
                let a: Vec<f64> = (0..na).map(|_| draw()).collect();
                let b: Vec<f64> = (0..nb).map(|_| draw()).collect();
                let got = mann_whitney_u(&a, &b)?;
                let want = enumerated_p(&a, &b);
                checked += 1;
                if !got.exact || got.p_value != want {
                    mismatched.push((na, nb, got.p_value, want));
                }
            }
        }
    }
    Ok((mismatched.is_empty(), format!("{checked} sample pairs, {} mismatches {:?}", mismatched.len(), mismatched.first())))
}

fn property_suites() -> Check {
    let mut broken: Vec<&str> = Vec::new();
    let mut check = |name: &'static str, ok: bool| {
        if !ok {
            broken.push(name);
        }
    };

    let mut derangements = true;
    let mut norms = true;
    for n in 2..40usize {
        let set = sample_permutations(n, 10, true, n as u64)?;
        let y = Array1::from_shape_fn(n, |i| (i as f64 * 1.7).sin() * 3.0);
        for perm in set.iter() {
            let mut seen = vec![false; n];
            perm.iter().for_each(|&j| seen[j] = true);
            derangements &= seen.iter().all(|s| *s) && perm.iter().enumerate().all(|(i, &j)| i != j);
            let py = apply_permutation(y.view(), perm)?;
            norms &= (norm_n(py.view()) - norm_n(y.view())).abs() <= 1e-12 * norm_n(y.view());
        }
    }
    check("derangement laws", derangements);
    check("permutation norm invariance", norms);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut range, mut shift, mut anti) = (true, true, true);
    for _ in 0..200 {
        let kappa = rng.random_range(0.01..10.0);
        let g = Array1::from_shape_fn(6, |_| rng.random_range(-5.0..5.0));
        let s = gate(kappa, g.view())?.into_inner();
        range &= s.iter().all(|v| *v > 0.0 && *v < 1.0);
        let shifted = gate(kappa, (&g + rng.random_range(-50.0..50.0)).view())?.into_inner();
        shift &= s.iter().zip(shifted.iter()).all(|(a, b)| (a - b).abs() <= 1e-12);
        let pair = gate(kappa, ndarray::array![g[0], g[1]].view())?.into_inner();
        anti &= (pair[0] + pair[1] - 1.0).abs() <= f64::EPSILON;
    }
    check("gate range", range);
    check("gate shift invariance", shift);
    check("gate antisymmetry", anti);

    let (x, y) = gaussian_xy(30, 8, 2);
    let norms: Vec<f64> = (-3..=6).map(|k| ridge(10f64.powi(k), x.view(), y.view()).map(|b| b.dot(&b))).collect::<Result<_, _>>()?;
    check("ridge monotone shrinkage", norms.windows(2).all(|w| w[1] < w[0]));

    let d = standardized(60, 12, 3);
    let (xs, ys) = (d.x().view(), d.y().view());
    let top = lambda_max(xs, ys);
    let mut kkt = true;
    let mut reductions = true;
    for frac in [0.5, 0.1, 0.01] {
        let l = frac * top;
        let b = lasso_cd(l, xs, ys, 1e-9, 100_000)?;
        kkt &= kkt_residual(xs, ys, b.view(), l, 0.0) <= 1e-9;
        let e1 = elastic_net_cd(l, 1.0, xs, ys, 1e-12, 100_000)?;
        let lasso_tight = lasso_cd(l, xs, ys, 1e-12, 100_000)?;
        reductions &= e1.iter().zip(lasso_tight.iter()).all(|(a, c)| (a - c).abs() <= 1e-10);
        let e0 = elastic_net_cd(l, 0.0, xs, ys, 1e-12, 100_000)?;
        let r = ridge(60.0 * l, xs, ys)?;
        reductions &= e0.iter().zip(r.iter()).all(|(a, c)| (a - c).abs() <= 1e-8);
    }
    check("lasso KKT residuals", kkt);
    check("elastic-net reductions", reductions);

    let (x, y) = gaussian_xy(25, 4, 4);
    let x = x.mapv(|v| 3.0 * v + 7.0);
    let (_, st) = standardize(&Dataset::new(x.clone(), y.clone())?)?;
    let back = st.inverse_x(&st.transform_x(&x));
    let yb = st.inverse_y(&st.transform_y(&y));
    check(
        "standardize round trip",
        back.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0))
            && yb.iter().zip(y.iter()).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0)),
    );

    let cfg = ExperimentConfig {
        scenarios: vec![ScenarioSpec { n_train: 40, n_test: 50, p: 12, ..ScenarioSpec::new(Scenario::B) }],
        procedures: Procedure::ALL.to_vec(),
        repetitions: 2,
        seed: 17,
        record_wall_time: false,
        ..ExperimentConfig::default()
    };
    let first = run_benchmark(&ExperimentConfig { workers: Some(1), ..cfg.clone() })?;
    let again = run_benchmark(&ExperimentConfig { workers: Some(1), ..cfg.clone() })?;
    let parallel = run_benchmark(&ExperimentConfig { workers: Some(2), ..cfg })?;
    // the config echo records the worker count, so compare the result tables across pools
    check(
        "benchmark seed determinism",
        serde_json::to_string(&first)? == serde_json::to_string(&again)?
            && first.per_repetition == parallel.per_repetition
            && first.summaries == parallel.summaries
            && first.mw_matrix == parallel.mw_matrix
            && first.per_repetition.len() == 16,
    );

    Ok((broken.is_empty(), if broken.is_empty() { "11 property groups hold".into() } else { format!("broken: {broken:?}") }))
}

fn run(number: usize, name: &str, budget: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f));
    let elapsed = start.elapsed();
    let (ok, detail) = match outcome {
        Ok(Ok((ok, detail))) => (ok, detail),
        Ok(Err(e)) => (false, format!("error: {e:#}")),
        Err(_) => (false, "panicked".to_string()),
    };
    let in_time = elapsed <= budget;
    let pass = ok && in_time;
    println!(
        "criterion {number:>2} {name}: {} ({detail}; {:.1}s of {}s budget{})",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", over budget" }
    );
    pass
}

fn main() {
    let secs = Duration::from_secs;
    let mut results = vec![
        run(1, "gradient vs finite differences", secs(10), gradient_vs_differences),
        run(2, "ridge oracle", secs(5), ridge_oracle),
        run(3, "null-model zero", secs(1), null_model_zero),
    ];

    // criteria 4 and 5 read the same Scenario B benchmark; its time counts toward both
    let start = Instant::now();
    let b = twenty_reps(vec![ScenarioSpec::new(Scenario::B)], vec![Procedure::SMlr, Procedure::AMlr, Procedure::CvLasso]);
    let shared = start.elapsed();
    let with_shared = |f: fn(&ExperimentReport) -> Check| {
        let b = &b;
        move || -> Check {
            match b {
                Ok(report) => f(report),
                Err(e) => Err(anyhow::anyhow!("scenario B benchmark: {e:#}")),
            }
        }
    };
    let budget_b = secs(300).saturating_sub(shared);
    results.push(run(4, "scenario B support recovery", budget_b, with_shared(support_recovery)));
    results.push(run(5, "aggregation selector", budget_b, with_shared(aggregation_selector)));
    println!("   (shared scenario B benchmark took {:.1}s)", shared.as_secs_f64());

    results.push(run(6, "convergence budget", secs(900), convergence_budget));
    results.push(run(7, "generalization parity", secs(300), generalization_parity));
    results.push(run(8, "permutation-count plateau", secs(600), permutation_plateau));
    results.push(run(9, "mann-whitney exactness", secs(30), mann_whitney_exactness));
    results.push(run(10, "property suites", secs(120), property_suites));

    let passed = results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
