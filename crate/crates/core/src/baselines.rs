//! Grid-search comparators: k-fold cross-validated ridge, lasso and elastic
//! net, plus exhaustive criterion minimization over ridge and lasso grids.
//!
//! All searches standardize the training set once, exactly as the descent
//! procedures do, so that penalties mean the same thing everywhere. Folds
//! are re-centered on their own training rows.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::criterion::{argmin_prefer_large, grid_select, mlr_value_with, CriterionContext};
use crate::dataset::{Dataset, Standardizer};
use crate::error::{MlrError, Result};
use crate::estimators::{Family, HyperParams};
use crate::linalg::{Cholesky, RidgeSystem};
use crate::permutation::{sample_permutations, PermutationSet};

pub const DEFAULT_GRID_SIZE: usize = 100;
pub const DEFAULT_L1_RATIOS: [f64; 7] = [0.1, 0.5, 0.7, 0.9, 0.95, 0.99, 1.0];

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Largest violation of the optimality conditions of
/// `(1/2n)‖y − Xβ‖² + l1‖β‖₁ + (l2/2)‖β‖²`.
pub fn kkt_residual(x: ArrayView2<f64>, y: ArrayView1<f64>, beta: ArrayView1<f64>, l1: f64, l2: f64) -> f64 {
    let n = x.nrows() as f64;
    let r = &y - &x.dot(&beta);
    let corr = x.t().dot(&r) / n;
    corr.iter()
        .zip(beta.iter())
        .map(|(&c, &b)| {
            let g = c - l2 * b;
            if b != 0.0 {
                (g - l1 * b.signum()).abs()
            } else {
                (g.abs() - l1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

struct CdOutcome {
    beta: Array1<f64>,
    converged: bool,
    residual: f64,
}

/// Cyclic coordinate descent for `(1/2n)‖y − Xβ‖² + l1‖β‖₁ + (l2/2)‖β‖²`,
/// stopping once the KKT residual is at most `tol`.
fn coordinate_descent(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    l1: f64,
    l2: f64,
    warm: Option<&Array1<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<Array1<f64>> {
    let out = descend(x, y, l1, l2, warm, tol, max_iter)?;
    if out.converged {
        Ok(out.beta)
    } else {
        Err(MlrError::NoConvergence { iterations: max_iter, residual: out.residual })
    }
}

/// As [`coordinate_descent`] but hands back the last iterate when the
/// sweep budget runs out.
fn descend(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    l1: f64,
    l2: f64,
    warm: Option<&Array1<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<CdOutcome> {
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(MlrError::ShapeMismatch(format!("X has {n} rows, y has {}", y.len())));
    }
    if !(l1 >= 0.0 && l2 >= 0.0) || !l1.is_finite() || !l2.is_finite() {
        return Err(MlrError::InvalidInput(format!("penalties must be finite and non-negative, got {l1}, {l2}")));
    }
    if !(tol > 0.0) {
        return Err(MlrError::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let nf = n as f64;
    let xt = x.t().as_standard_layout().into_owned();
    let col_sq: Vec<f64> = xt.rows().into_iter().map(|c| c.dot(&c) / nf).collect();
    let mut beta = match warm {
        Some(b) if b.len() == p => b.clone(),
        _ => Array1::zeros(p),
    };
    let mut r = &y - &x.dot(&beta);
    let mut last = f64::INFINITY;
    let mut next_polish = POLISH_EVERY;
    for sweep in 0..max_iter {
        if sweep + 1 == next_polish {
            if let Some(b) = polish(x, y, &beta, l1, l2, tol) {
                let residual = kkt_residual(x, y, b.view(), l1, l2);
                return Ok(CdOutcome { beta: b, converged: true, residual });
            }
            // failed attempts back off so hard problems stay sweep-bound
            next_polish *= 2;
        }
        let mut max_step: f64 = 0.0;
        for j in 0..p {
            let old = beta[j];
            let new = if col_sq[j] == 0.0 {
                0.0
            } else {
                let xj = xt.row(j);
                let z = xj.dot(&r) / nf + col_sq[j] * old;
                soft_threshold(z, l1) / (col_sq[j] + l2)
            };
            if new != old {
                r.scaled_add(old - new, &xt.row(j));
                beta[j] = new;
                max_step = max_step.max((new - old).abs() * col_sq[j].sqrt());
            }
        }
        // a full KKT check costs as much as a sweep; skip it while coordinates still move
        if max_step > tol && sweep + 1 < max_iter {
            continue;
        }
        last = kkt_residual(x, y, beta.view(), l1, l2);
        if last <= tol {
            return Ok(CdOutcome { beta, converged: true, residual: last });
        }
    }
    Ok(CdOutcome { beta, converged: false, residual: last })
}

/// Sweeps before the first attempt to solve the active set exactly.
const POLISH_EVERY: usize = 10;

/// Active-set corrections tried per refinement attempt.
const POLISH_ROUNDS: usize = 4;

/// Active-set refinement of `beta`: solves the stationarity equations on
/// the current active set with its signs, drops coordinates whose sign
/// flips and adds inactive ones that violate the optimality conditions.
/// Cyclic descent crawls when the active columns are nearly collinear; once
/// the active set is right this lands on the optimum directly. Gives up
/// (returning `None`) after [`POLISH_ROUNDS`] corrections.
fn polish(x: ArrayView2<f64>, y: ArrayView1<f64>, beta: &Array1<f64>, l1: f64, l2: f64, tol: f64) -> Option<Array1<f64>> {
    let (n, p) = x.dim();
    let nf = n as f64;
    let mut signs: Vec<(usize, f64)> = (0..p).filter(|&j| beta[j] != 0.0).map(|j| (j, beta[j].signum())).collect();
    for _ in 0..POLISH_ROUNDS {
        if signs.is_empty() || signs.len() > n {
            return None;
        }
        let active: Vec<usize> = signs.iter().map(|s| s.0).collect();
        let xa = x.select(Axis(1), &active);
        let mut gram = xa.t().dot(&xa) / nf;
        for i in 0..active.len() {
            gram[[i, i]] += l2;
        }
        let sv: Array1<f64> = signs.iter().map(|s| s.1).collect();
        let rhs = xa.t().dot(&y) / nf - &(&sv * l1);
        let sol = Cholesky::factor(gram.view()).ok()?.solve(rhs.view());
        let flipped: Vec<usize> = (0..active.len()).filter(|&k| sol[k] * sv[k] <= 0.0).collect();
        if !flipped.is_empty() {
            signs = signs.into_iter().enumerate().filter(|(k, _)| !flipped.contains(k)).map(|(_, s)| s).collect();
            continue;
        }
        let mut candidate = Array1::zeros(p);
        for (k, &j) in active.iter().enumerate() {
            candidate[j] = sol[k];
        }
        let r = &y - &x.dot(&candidate);
        let corr = x.t().dot(&r) / nf;
        let entering: Vec<(usize, f64)> =
            (0..p).filter(|&j| candidate[j] == 0.0 && corr[j].abs() - l1 > tol).map(|j| (j, corr[j].signum())).collect();
        if entering.is_empty() {
            return (kkt_residual(x, y, candidate.view(), l1, l2) <= tol).then_some(candidate);
        }
        signs.extend(entering);
        signs.sort_unstable_by_key(|s| s.0);
    }
    None
}

/// Lasso on `(1/2n)‖y − Xβ‖² + λ‖β‖₁`.
pub fn lasso_cd(lambda: f64, x: ArrayView2<f64>, y: ArrayView1<f64>, tol: f64, max_iter: usize) -> Result<Array1<f64>> {
    coordinate_descent(x, y, lambda, 0.0, None, tol, max_iter)
}

/// Elastic net on `(1/2n)‖y − Xβ‖² + λ(α‖β‖₁ + (1 − α)/2 ‖β‖²)`. At
/// `α = 0` this is ridge with penalty `n·λ` in the `(XᵀX + λI)` convention.
pub fn elastic_net_cd(
    lambda: f64,
    l1_ratio: f64,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Array1<f64>> {
    check_ratio(l1_ratio)?;
    coordinate_descent(x, y, lambda * l1_ratio, lambda * (1.0 - l1_ratio), None, tol, max_iter)
}

fn check_ratio(r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(MlrError::InvalidInput(format!("l1_ratio must lie in [0, 1], got {r}")))
    }
}

/// `max_j |X_jᵀy| / n`, the smallest lasso penalty giving `β = 0`.
pub fn lambda_max(x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
    let n = x.nrows() as f64;
    x.t().dot(&y).iter().fold(0.0f64, |m, v| m.max(v.abs())) / n
}

/// `size` points log-spaced from `lo` to `hi`, ascending.
pub fn log_grid(lo: f64, hi: f64, size: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || size == 0 {
        return Err(MlrError::InvalidInput(format!("invalid grid [{lo}, {hi}] with {size} points")));
    }
    if size == 1 {
        return Ok(vec![hi]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..size)
        .map(|i| {
            if i + 1 == size {
                hi
            } else {
                (a + (b - a) * i as f64 / (size - 1) as f64).exp()
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CvFamily {
    Ridge,
    Lasso,
    #[serde(rename = "ENET")]
    ElasticNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub n_folds: usize,
    /// Explicit penalty grid; `None` derives the default grid from the data.
    pub lambda_grid: Option<Vec<f64>>,
    pub l1_ratio_grid: Vec<f64>,
    pub grid_size: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            n_folds: 5,
            lambda_grid: None,
            l1_ratio_grid: DEFAULT_L1_RATIOS.to_vec(),
            grid_size: DEFAULT_GRID_SIZE,
            seed: 0,
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

fn check_sorted_grid(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(MlrError::InvalidInput(format!("{what} grid is empty")));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(MlrError::InvalidInput(format!("{what} grid must be sorted ascending")));
    }
    Ok(())
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_folds < 2 {
            return Err(MlrError::InvalidInput(format!("n_folds must be >= 2, got {}", self.n_folds)));
        }
        if let Some(g) = &self.lambda_grid {
            check_sorted_grid(g, "lambda")?;
            if g.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
                return Err(MlrError::InvalidInput("lambda grid entries must be positive".into()));
            }
        }
        check_sorted_grid(&self.l1_ratio_grid, "l1_ratio")?;
        for &r in &self.l1_ratio_grid {
            check_ratio(r)?;
        }
        if self.grid_size == 0 {
            return Err(MlrError::InvalidInput("grid_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Shuffled partition of `0..n` into `k` folds whose sizes differ by at
/// most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(MlrError::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    if n / k < 2 {
        return Err(MlrError::InvalidInput(format!("{n} rows give a fold with fewer than 2 rows at k = {k}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub l1_ratio: Option<f64>,
    /// Mean validation error for CV, criterion value for the label-muddling search.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFit {
    pub family: CvFamily,
    pub best_index: usize,
    pub best_lambda: f64,
    pub best_l1_ratio: Option<f64>,
    pub curve: Vec<GridPoint>,
    pub beta_standardized: Array1<f64>,
    pub beta_hat: Array1<f64>,
    pub intercept: f64,
    /// Solver runs that hit the sweep budget; their last iterate was used.
    pub unconverged_fits: usize,
}

impl GridFit {
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.beta_hat.len() {
            return Err(MlrError::ShapeMismatch(format!("{} columns for {} coefficients", x.ncols(), self.beta_hat.len())));
        }
        Ok(x.dot(&self.beta_hat) + self.intercept)
    }
}

/// Penalty candidates as `(l1_ratio, λ)` pairs for `family` on standardized data.
fn candidates(family: CvFamily, d: &Dataset, cfg: &CvConfig) -> Result<Vec<(Option<f64>, f64)>> {
    let l1_grid = |scale: f64| -> Result<Vec<f64>> {
        let top = lambda_max(d.x().view(), d.y().view()) / scale;
        if top <= 0.0 {
            return Err(MlrError::InvalidInput("response is orthogonal to every feature".into()));
        }
        log_grid(1e-4 * top, top, cfg.grid_size)
    };
    Ok(match family {
        CvFamily::Ridge => {
            let grid = match &cfg.lambda_grid {
                Some(g) => g.clone(),
                None => log_grid(1e-4, 1e4, cfg.grid_size)?,
            };
            grid.into_iter().map(|l| (None, l)).collect()
        }
        CvFamily::Lasso => {
            let grid = match &cfg.lambda_grid {
                Some(g) => g.clone(),
                None => l1_grid(1.0)?,
            };
            grid.into_iter().map(|l| (None, l)).collect()
        }
        CvFamily::ElasticNet => {
            let mut out = Vec::new();
            for &r in &cfg.l1_ratio_grid {
                let grid = match &cfg.lambda_grid {
                    Some(g) => g.clone(),
                    None => l1_grid(r.max(1e-3))?,
                };
                out.extend(grid.into_iter().map(|l| (Some(r), l)));
            }
            out
        }
    })
}

/// Coefficients for every candidate on one (centered) design, warm-starting
/// each L1 path from the largest penalty down.
fn fit_candidates(
    family: CvFamily,
    x: &Array2<f64>,
    y: &Array1<f64>,
    cands: &[(Option<f64>, f64)],
    cfg: &CvConfig,
) -> Result<(Vec<Array1<f64>>, usize)> {
    let mut out = vec![Array1::zeros(x.ncols()); cands.len()];
    if family == CvFamily::Ridge {
        for (slot, &(_, l)) in out.iter_mut().zip(cands) {
            *slot = RidgeSystem::new(x.clone(), l)?.coef(y.view());
        }
        return Ok((out, 0));
    }
    let mut unconverged = 0;
    let mut order: Vec<usize> = (0..cands.len()).collect();
    // same ratio together, penalties descending inside each ratio
    order.sort_by(|&a, &b| {
        let (ra, la) = cands[a];
        let (rb, lb) = cands[b];
        ra.partial_cmp(&rb).unwrap().then(lb.total_cmp(&la))
    });
    let mut warm: Option<(Option<f64>, Array1<f64>)> = None;
    let mut prev: Option<usize> = None;
    for i in order {
        // repeated candidates reuse the solve so they score identically
        if let Some(j) = prev.filter(|&j| cands[j] == cands[i]) {
            out[i] = out[j].clone();
            continue;
        }
        prev = Some(i);
        let (ratio, l) = cands[i];
        let alpha = ratio.unwrap_or(1.0);
        let start = warm.as_ref().filter(|(r, _)| *r == ratio).map(|(_, b)| b);
        let fit = descend(x.view(), y.view(), l * alpha, l * (1.0 - alpha), start, cfg.tol, cfg.max_iter)?;
        unconverged += usize::from(!fit.converged);
        warm = Some((ratio, fit.beta.clone()));
        out[i] = fit.beta;
    }
    Ok((out, unconverged))
}

fn center(x: &Array2<f64>, y: &Array1<f64>) -> (Array2<f64>, Array1<f64>, Array1<f64>, f64) {
    let xm = x.mean_axis(Axis(0)).expect("non-empty design");
    let ym = y.mean().expect("non-empty response");
    (x - &xm, y - ym, xm, ym)
}

fn finish(
    family: CvFamily,
    std_data: &Dataset,
    standardizer: &Standardizer,
    cands: &[(Option<f64>, f64)],
    scores: Vec<f64>,
    unconverged: usize,
    cfg: &CvConfig,
) -> Result<GridFit> {
    let lambdas: Vec<f64> = cands.iter().map(|c| c.1).collect();
    let best_index = argmin_prefer_large(&scores, &lambdas)
        .ok_or_else(|| MlrError::NonFinite("every grid score is NaN".into()))?;
    let (best_l1_ratio, best_lambda) = cands[best_index];
    let (mut refit, refit_unconverged) =
        fit_candidates(family, std_data.x(), std_data.y(), &cands[best_index..=best_index], cfg)?;
    let beta_standardized = refit.remove(0);
    let (beta_hat, intercept) = standardizer.coefficients_to_raw(&beta_standardized);
    let curve = cands
        .iter()
        .zip(&scores)
        .map(|(&(l1_ratio, lambda), &score)| GridPoint { lambda, l1_ratio, score })
        .collect();
    Ok(GridFit {
        family,
        best_index,
        best_lambda,
        best_l1_ratio,
        curve,
        beta_standardized,
        beta_hat,
        intercept,
        unconverged_fits: unconverged + refit_unconverged,
    })
}

/// k-fold cross-validated grid search; ties go to the larger penalty.
pub fn cv_grid_search(family: CvFamily, d: &Dataset, cfg: &CvConfig) -> Result<GridFit> {
    cfg.validate()?;
    let standardizer = Standardizer::fit(d, true)?;
    let std_data = standardizer.transform(d)?;
    let cands = candidates(family, &std_data, cfg)?;
    let folds = kfold_indices(d.n_samples(), cfg.n_folds, cfg.seed)?;
    let mut sq_err = vec![0.0; cands.len()];
    let mut unconverged = 0;
    for (f, val_idx) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
        let train = std_data.select_rows(&train_idx)?;
        let val = std_data.select_rows(val_idx)?;
        let (xc, yc, xm, ym) = center(train.x(), train.y());
        let xv = val.x() - &xm;
        let (betas, missed) = fit_candidates(family, &xc, &yc, &cands, cfg)?;
        unconverged += missed;
        for (acc, beta) in sq_err.iter_mut().zip(betas) {
            let pred = xv.dot(&beta) + ym;
            *acc += (val.y() - &pred).mapv(|e| e * e).sum();
        }
    }
    let n = d.n_samples() as f64;
    let scores = sq_err.into_iter().map(|s| s / n).collect();
    finish(family, &std_data, &standardizer, &cands, scores, unconverged, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub l1_ratio: Option<f64>,
    pub beta_hat: Array1<f64>,
    pub intercept: f64,
}

/// Raw-scale fits on all of `d` at every candidate penalty, in candidate
/// order, plus the number of solves that hit the sweep budget.
pub fn penalty_path(family: CvFamily, d: &Dataset, cfg: &CvConfig) -> Result<(Vec<PathPoint>, usize)> {
    cfg.validate()?;
    let standardizer = Standardizer::fit(d, true)?;
    let std_data = standardizer.transform(d)?;
    let cands = candidates(family, &std_data, cfg)?;
    let (betas, unconverged) = fit_candidates(family, std_data.x(), std_data.y(), &cands, cfg)?;
    let path = cands
        .iter()
        .zip(betas)
        .map(|(&(l1_ratio, lambda), b)| {
            let (beta_hat, intercept) = standardizer.coefficients_to_raw(&b);
            PathPoint { lambda, l1_ratio, beta_hat, intercept }
        })
        .collect();
    Ok((path, unconverged))
}

/// Exhaustive minimization of the label-muddling criterion over a ridge or
/// lasso penalty grid. `cfg.n_folds` and `cfg.l1_ratio_grid` are unused.
pub fn mlr_grid_search(
    family: CvFamily,
    d: &Dataset,
    cfg: &CvConfig,
    n_permutations: usize,
    derangements: bool,
) -> Result<GridFit> {
    cfg.validate()?;
    let standardizer = Standardizer::fit(d, true)?;
    let std_data = standardizer.transform(d)?;
    let perms = if n_permutations == 0 {
        PermutationSet::empty()
    } else {
        sample_permutations(d.n_samples(), n_permutations, derangements, cfg.seed)?
    };
    let cands = candidates(family, &std_data, cfg)?;
    let mut unconverged = 0;
    let scores = match family {
        CvFamily::Ridge => {
            let ctx = CriterionContext::new(std_data.clone(), perms, Family::Ridge)?;
            let p = d.n_features();
            let grid: Vec<HyperParams> = cands.iter().map(|c| HyperParams::ridge(c.1, p)).collect();
            grid_select(&ctx, &grid)?.curve
        }
        CvFamily::Lasso => {
            let mut scores = vec![0.0; cands.len()];
            let mut order: Vec<usize> = (0..cands.len()).collect();
            order.sort_by(|&a, &b| cands[b].1.total_cmp(&cands[a].1));
            // one warm start per response: the real labels, then each permuted copy
            let mut warm: Vec<Option<Array1<f64>>> = vec![None; perms.len() + 1];
            for i in order {
                let l = cands[i].1;
                let mut k = 0;
                let eval = mlr_value_with(&std_data, &perms, |y| {
                    let fit = descend(std_data.x().view(), y, l, 0.0, warm[k].as_ref(), cfg.tol, cfg.max_iter)?;
                    unconverged += usize::from(!fit.converged);
                    warm[k] = Some(fit.beta.clone());
                    k += 1;
                    Ok(fit.beta)
                })?;
                scores[i] = eval.value;
            }
            scores
        }
        CvFamily::ElasticNet => {
            return Err(MlrError::InvalidInput("criterion grid search supports RIDGE and LASSO only".into()))
        }
    };
    finish(family, &std_data, &standardizer, &cands, scores, unconverged, cfg)
}
