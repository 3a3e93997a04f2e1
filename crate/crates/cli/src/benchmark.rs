use std::time::Instant;

use anyhow::Context;
use mlr_core::baselines::{cv_grid_search, mlr_grid_search, CvConfig, CvFamily, GridFit};
use mlr_core::datagen::{generate, ScenarioSpec, SyntheticInstance};
use mlr_core::metrics::{best_by_mann_whitney, l2_error, mann_whitney_u, r2_score, support_accuracy};
use mlr_core::optimizer::{fit_mlr, FitResult, MlrConfig};
use mlr_core::{Dataset, Family};
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Procedure};
use crate::stats::{mean, quantile};

/// Significance level for the pairwise rank tests.
pub const MW_ALPHA: f64 = 0.05;

/// Coefficients and diagnostics of one fitted procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcedureFit {
    pub beta_hat: Array1<f64>,
    pub intercept: f64,
    /// ADAM iterations; `None` for grid searches.
    pub iterations: Option<usize>,
    /// ADAM stopped on tolerance, or every grid solve reached its tolerance.
    pub converged: bool,
    pub aggregation_weight: Option<f64>,
}

impl ProcedureFit {
    pub fn predict(&self, x: &Array2<f64>) -> Array1<f64> {
        x.dot(&self.beta_hat) + self.intercept
    }
}

impl From<FitResult> for ProcedureFit {
    fn from(f: FitResult) -> Self {
        Self {
            beta_hat: f.beta_hat,
            intercept: f.intercept,
            iterations: Some(f.iterations),
            converged: f.converged,
            aggregation_weight: f.aggregation_weight,
        }
    }
}

impl From<GridFit> for ProcedureFit {
    fn from(g: GridFit) -> Self {
        Self {
            beta_hat: g.beta_hat,
            intercept: g.intercept,
            iterations: None,
            converged: g.unconverged_fits == 0,
            aggregation_weight: None,
        }
    }
}

pub fn mlr_config(cfg: &ExperimentConfig) -> MlrConfig {
    MlrConfig { adam: cfg.adam, n_permutations: cfg.n_permutations, ..MlrConfig::default() }
}

/// Fits `procedure` on `train`; `seed` drives permutations and fold splits.
pub fn fit_procedure(procedure: Procedure, train: &Dataset, cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<ProcedureFit> {
    let cv = CvConfig { seed, ..cfg.cv.clone() };
    let fit = match procedure {
        Procedure::RMlr => fit_mlr(train, Family::Ridge, &mlr_config(cfg), seed)?.into(),
        Procedure::SMlr => fit_mlr(train, Family::Sparse, &mlr_config(cfg), seed)?.into(),
        Procedure::AMlr => fit_mlr(train, Family::Aggregated, &mlr_config(cfg), seed)?.into(),
        Procedure::CvRidge => cv_grid_search(CvFamily::Ridge, train, &cv)?.into(),
        Procedure::CvLasso => cv_grid_search(CvFamily::Lasso, train, &cv)?.into(),
        Procedure::CvEnet => cv_grid_search(CvFamily::ElasticNet, train, &cv)?.into(),
        Procedure::GridMlrRidge => mlr_grid_search(CvFamily::Ridge, train, &cv, cfg.n_permutations, true)?.into(),
        Procedure::GridMlrLasso => mlr_grid_search(CvFamily::Lasso, train, &cv, cfg.n_permutations, true)?.into(),
    };
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRow {
    pub scenario: String,
    pub procedure: Procedure,
    pub repetition: usize,
    pub seed: u64,
    pub r2_test: f64,
    pub l2_error: f64,
    pub support_accuracy: f64,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub wall_seconds: f64,
    pub aggregation_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub scenario: String,
    pub procedure: Procedure,
    pub repetition: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub procedure: Procedure,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Pairwise two-sided rank tests between procedures on one metric of one
/// scenario. `p_values[i][j]` compares `procedures[i]` with `procedures[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwMatrix {
    pub scenario: String,
    pub metric: String,
    pub procedures: Vec<Procedure>,
    pub p_values: Vec<Vec<Option<f64>>>,
    /// Procedures that no other procedure beats at `MW_ALPHA`.
    pub best: Vec<Procedure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub per_repetition: Vec<RepetitionRow>,
    pub failures: Vec<Failure>,
    pub summaries: Vec<SummaryRow>,
    pub mw_matrix: Vec<MwMatrix>,
}

impl ExperimentReport {
    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }
}

enum Cell {
    Row(RepetitionRow),
    Failed(Failure),
}

fn score(
    procedure: Procedure,
    inst: &SyntheticInstance,
    label: &str,
    repetition: usize,
    seed: u64,
    cfg: &ExperimentConfig,
) -> anyhow::Result<RepetitionRow> {
    let start = Instant::now();
    let fit = fit_procedure(procedure, &inst.train, cfg, seed)?;
    let wall = start.elapsed().as_secs_f64();
    let pred = fit.predict(inst.test.x());
    let beta = fit.beta_hat.to_vec();
    let truth = inst.beta_star.to_vec();
    Ok(RepetitionRow {
        scenario: label.to_string(),
        procedure,
        repetition,
        seed,
        r2_test: r2_score(&inst.test.y().to_vec(), &pred.to_vec(), true)?,
        l2_error: l2_error(&beta, &truth)?,
        support_accuracy: support_accuracy(&beta, &truth, cfg.support_threshold)?,
        iterations: fit.iterations,
        converged: fit.converged,
        wall_seconds: if cfg.record_wall_time { wall } else { 0.0 },
        aggregation_weight: fit.aggregation_weight,
    })
}

fn run_cell(spec: &ScenarioSpec, label: &str, repetition: usize, cfg: &ExperimentConfig) -> Vec<Cell> {
    let seed = cfg.repetition_seed(repetition);
    let inst = match generate(&ScenarioSpec { seed, ..spec.clone() }) {
        Ok(i) => i,
        Err(e) => {
            return cfg
                .procedures
                .iter()
                .map(|&procedure| {
                    Cell::Failed(Failure {
                        scenario: label.to_string(),
                        procedure,
                        repetition,
                        error: format!("data generation: {e}"),
                    })
                })
                .collect()
        }
    };
    cfg.procedures
        .iter()
        .map(|&procedure| match score(procedure, &inst, label, repetition, seed, cfg) {
            Ok(row) => Cell::Row(row),
            Err(e) => Cell::Failed(Failure { scenario: label.to_string(), procedure, repetition, error: format!("{e:#}") }),
        })
        .collect()
}

/// Scenario labels, suffixed with their position when two specs share one.
pub fn scenario_labels(scenarios: &[ScenarioSpec]) -> Vec<String> {
    let base: Vec<String> = scenarios.iter().map(ScenarioSpec::label).collect();
    base.iter()
        .enumerate()
        .map(|(i, l)| if base.iter().filter(|b| *b == l).count() > 1 { format!("{l}#{i}") } else { l.clone() })
        .collect()
}

/// Runs every (scenario, repetition) cell on a pool of `cfg.workers`
/// threads. Rows come back in (scenario, procedure, repetition) order
/// whatever the thread count.
pub fn run_benchmark(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentReport> {
    cfg.validate()?;
    let labels = scenario_labels(&cfg.scenarios);
    let jobs: Vec<(usize, usize)> =
        (0..cfg.scenarios.len()).flat_map(|s| (0..cfg.repetitions).map(move |r| (s, r))).collect();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().context("building worker pool")?;
    let cells: Vec<Vec<Cell>> =
        pool.install(|| jobs.par_iter().map(|&(s, r)| run_cell(&cfg.scenarios[s], &labels[s], r, cfg)).collect());

    let n_proc = cfg.procedures.len();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    // cells are (scenario, repetition)-major; rows go out (scenario, procedure, repetition)-major
    for per_scenario in cells.chunks(cfg.repetitions) {
        for p in 0..n_proc {
            for cell in per_scenario {
                match &cell[p] {
                    Cell::Row(row) => rows.push(row.clone()),
                    Cell::Failed(f) => failures.push(f.clone()),
                }
            }
        }
    }
    let summaries = summarize(&rows, &labels, &cfg.procedures);
    let mw_matrix = mann_whitney_matrices(&rows, &labels, &cfg.procedures)?;
    Ok(ExperimentReport { config: cfg.clone(), per_repetition: rows, failures, summaries, mw_matrix })
}

type Metric = (&'static str, fn(&RepetitionRow) -> Option<f64>);

const METRICS: [Metric; 4] = [
    ("r2_test", |r| Some(r.r2_test)),
    ("l2_error", |r| Some(r.l2_error)),
    ("support_accuracy", |r| Some(r.support_accuracy)),
    ("iterations", |r| r.iterations.map(|i| i as f64)),
];

fn column(rows: &[RepetitionRow], scenario: &str, procedure: Procedure, get: fn(&RepetitionRow) -> Option<f64>) -> Vec<f64> {
    rows.iter().filter(|r| r.scenario == scenario && r.procedure == procedure).filter_map(get).collect()
}

pub fn summarize(rows: &[RepetitionRow], scenarios: &[String], procedures: &[Procedure]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for s in scenarios {
        for &p in procedures {
            for (metric, get) in METRICS {
                let mut v = column(rows, s, p, get);
                if v.is_empty() {
                    continue;
                }
                v.sort_by(f64::total_cmp);
                out.push(SummaryRow {
                    scenario: s.clone(),
                    procedure: p,
                    metric: metric.to_string(),
                    n: v.len(),
                    mean: mean(&v),
                    median: quantile(&v, 0.5),
                    q1: quantile(&v, 0.25),
                    q3: quantile(&v, 0.75),
                });
            }
        }
    }
    out
}

fn mann_whitney_matrices(rows: &[RepetitionRow], scenarios: &[String], procedures: &[Procedure]) -> anyhow::Result<Vec<MwMatrix>> {
    let mut out = Vec::new();
    for s in scenarios {
        for (metric, get) in &METRICS[..3] {
            let present: Vec<(Procedure, Vec<f64>)> = procedures
                .iter()
                .map(|&p| (p, column(rows, s, p, *get)))
                .filter(|(_, v)| !v.is_empty())
                .collect();
            if present.is_empty() {
                continue;
            }
            let mut p_values = vec![vec![None; present.len()]; present.len()];
            for i in 0..present.len() {
                for j in 0..present.len() {
                    if i != j {
                        p_values[i][j] = Some(mann_whitney_u(&present[i].1, &present[j].1)?.p_value);
                    }
                }
            }
            // smaller l2 error is better, so flip its sign for the "larger wins" rule
            let oriented: Vec<Vec<f64>> = present
                .iter()
                .map(|(_, v)| if *metric == "l2_error" { v.iter().map(|x| -x).collect() } else { v.clone() })
                .collect();
            let best = best_by_mann_whitney(&oriented, MW_ALPHA)?.into_iter().map(|i| present[i].0).collect();
            out.push(MwMatrix {
                scenario: s.clone(),
                metric: metric.to_string(),
                procedures: present.iter().map(|(p, _)| *p).collect(),
                p_values,
                best,
            });
        }
    }
    Ok(out)
}
