use anyhow::{bail, ensure};
use mlr_core::baselines::{cv_grid_search, mlr_grid_search, penalty_path, CvConfig, CvFamily};
use mlr_core::criterion::argmin_prefer_large;
use mlr_core::datagen::{generate, ScenarioSpec};
use mlr_core::metrics::{r2_score, rescale_curve};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub lambda: f64,
    pub mlr: f64,
    pub cv_error: f64,
    pub r2_test: f64,
    pub mlr_rescaled: f64,
    pub cv_error_rescaled: f64,
    pub r2_test_rescaled: f64,
    pub mlr_argmin: bool,
    pub cv_error_argmin: bool,
    /// Best test score, so this marks the maximum.
    pub r2_test_argmax: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub scenario: ScenarioSpec,
    pub family: CvFamily,
    pub rows: Vec<CurveRow>,
    pub mlr_argmin: usize,
    pub cv_error_argmin: usize,
    pub r2_test_argmax: usize,
}

impl CurveTable {
    /// Test score at the penalty the criterion picks.
    pub fn mlr_selected_r2(&self) -> f64 {
        self.rows[self.mlr_argmin].r2_test
    }

    pub fn best_r2(&self) -> f64 {
        self.rows[self.r2_test_argmax].r2_test
    }
}

/// Criterion, cross-validation error and test R² over one shared penalty
/// grid. Ties in the markers go to the larger penalty, as in selection.
pub fn run_curve(
    spec: &ScenarioSpec,
    family: CvFamily,
    grid_size: usize,
    seed: u64,
    n_permutations: usize,
) -> anyhow::Result<CurveTable> {
    ensure!(grid_size >= 2, "grid_size must be >= 2, got {grid_size}");
    if family == CvFamily::ElasticNet {
        bail!("curves are drawn for RIDGE or LASSO");
    }
    let spec = ScenarioSpec { seed, ..spec.clone() };
    let inst = generate(&spec)?;
    let mut cv = CvConfig { grid_size, seed, ..CvConfig::default() };
    let (path, _) = penalty_path(family, &inst.train, &cv)?;
    let lambdas: Vec<f64> = path.iter().map(|p| p.lambda).collect();
    cv.lambda_grid = Some(lambdas.clone());

    let cv_error: Vec<f64> = cv_grid_search(family, &inst.train, &cv)?.curve.iter().map(|g| g.score).collect();
    let mlr: Vec<f64> =
        mlr_grid_search(family, &inst.train, &cv, n_permutations, true)?.curve.iter().map(|g| g.score).collect();
    let y_test = inst.test.y().to_vec();
    let r2_test = path
        .iter()
        .map(|p| r2_score(&y_test, &(inst.test.x().dot(&p.beta_hat) + p.intercept).to_vec(), true))
        .collect::<Result<Vec<_>, _>>()?;

    let pick = |v: &[f64]| argmin_prefer_large(v, &lambdas).ok_or_else(|| anyhow::anyhow!("curve is NaN everywhere"));
    let mlr_argmin = pick(&mlr)?;
    let cv_error_argmin = pick(&cv_error)?;
    let r2_test_argmax = pick(&r2_test.iter().map(|r| -r).collect::<Vec<_>>())?;
    let (mlr_r, cv_r, r2_r) = (rescale_curve(&mlr)?, rescale_curve(&cv_error)?, rescale_curve(&r2_test)?);

    let rows = (0..lambdas.len())
        .map(|i| CurveRow {
            lambda: lambdas[i],
            mlr: mlr[i],
            cv_error: cv_error[i],
            r2_test: r2_test[i],
            mlr_rescaled: mlr_r[i],
            cv_error_rescaled: cv_r[i],
            r2_test_rescaled: r2_r[i],
            mlr_argmin: i == mlr_argmin,
            cv_error_argmin: i == cv_error_argmin,
            r2_test_argmax: i == r2_test_argmax,
        })
        .collect();
    Ok(CurveTable { scenario: spec, family, rows, mlr_argmin, cv_error_argmin, r2_test_argmax })
}
