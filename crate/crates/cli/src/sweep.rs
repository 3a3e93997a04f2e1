use anyhow::ensure;
use mlr_core::datagen::{generate, ScenarioSpec};
use mlr_core::metrics::r2_score;
use mlr_core::optimizer::{fit_mlr, MlrConfig};
use mlr_core::Family;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::stats::{mean, sample_sd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Number of permuted copies; 0 is the fit-term-only ablation.
    #[serde(rename = "T")]
    pub t: usize,
    pub repetitions: usize,
    pub r2_mean: f64,
    pub r2_sd: f64,
    pub iterations_mean: f64,
    pub iterations_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub family: Family,
    /// Adds a leading T = 0 row.
    pub ablation: bool,
    pub base: MlrConfig,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { family: Family::Ridge, ablation: false, base: MlrConfig::default() }
    }
}

/// Test R² and iteration counts per permutation count. Repetition `r` draws
/// its instance with seed `seed ^ r`, shared by every `T`.
pub fn run_permutation_sweep(
    spec: &ScenarioSpec,
    t_values: &[usize],
    repetitions: usize,
    seed: u64,
    opts: &SweepOptions,
) -> anyhow::Result<Vec<SweepRow>> {
    ensure!(!t_values.is_empty(), "T_values must not be empty");
    ensure!(t_values.iter().all(|&t| t >= 1), "every T must be >= 1");
    ensure!(repetitions >= 1, "repetitions must be >= 1");
    let ts: Vec<usize> = opts.ablation.then_some(0).into_iter().chain(t_values.iter().copied()).collect();

    let per_rep: Vec<Vec<(f64, f64)>> = (0..repetitions)
        .into_par_iter()
        .map(|r| -> anyhow::Result<Vec<(f64, f64)>> {
            let s = seed ^ r as u64;
            let inst = generate(&ScenarioSpec { seed: s, ..spec.clone() })?;
            let y_test = inst.test.y().to_vec();
            ts.iter()
                .map(|&t| {
                    let cfg = MlrConfig { n_permutations: t, ..opts.base.clone() };
                    let fit = fit_mlr(&inst.train, opts.family, &cfg, s)?;
                    let r2 = r2_score(&y_test, &fit.predict(inst.test.x())?.to_vec(), true)?;
                    Ok((r2, fit.iterations as f64))
                })
                .collect()
        })
        .collect::<anyhow::Result<_>>()?;

    Ok(ts
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let r2: Vec<f64> = per_rep.iter().map(|v| v[k].0).collect();
            let it: Vec<f64> = per_rep.iter().map(|v| v[k].1).collect();
            SweepRow {
                t,
                repetitions,
                r2_mean: mean(&r2),
                r2_sd: sample_sd(&r2),
                iterations_mean: mean(&it),
                iterations_sd: sample_sd(&it),
            }
        })
        .collect())
}
