//! ADAM minimization of the criterion and the end-to-end procedures that
//! train a ridge, gated or aggregated model in a single descent.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::criterion::{mlr_gradient, CriterionContext};
use crate::dataset::{standardize_with, Dataset, Standardizer};
use crate::error::{MlrError, Result};
use crate::estimators::{gate_with, Family, GateSpread, GateVector, HyperParams};
use crate::permutation::{sample_permutations, PermutationSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Relative change of the objective below which descent stops.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.5, beta1: 0.5, beta2: 0.9, epsilon: 1e-8, tolerance: 1e-4, max_iterations: 1000 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.learning_rate > 0.0
            && self.tolerance > 0.0
            && self.epsilon >= 0.0
            && self.max_iterations >= 1;
        if ok {
            Ok(())
        } else {
            Err(MlrError::InvalidInput(format!("invalid ADAM configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamOutcome {
    pub x: Vec<f64>,
    /// Objective at `x0`.
    pub initial_value: f64,
    /// Objective after each update; its length is the iteration count.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl AdamOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_value(&self) -> f64 {
        self.trace.last().copied().unwrap_or(self.initial_value)
    }
}

/// Minimizes `objective` (returning value and gradient) from `x0`.
pub fn adam_minimize<F>(mut objective: F, x0: Vec<f64>, cfg: &AdamConfig) -> Result<AdamOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let dim = x0.len();
    let check = |k: usize, f: f64, g: &[f64]| -> Result<()> {
        if g.len() != dim {
            return Err(MlrError::ShapeMismatch(format!("gradient has {} entries, expected {dim}", g.len())));
        }
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(MlrError::NonFinite(format!("objective or gradient at iteration {k}: value {f}")));
        }
        Ok(())
    };

    let mut x = x0;
    let (mut f, mut g) = objective(&x)?;
    check(0, f, &g)?;
    let initial_value = f;
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut trace = Vec::new();
    let mut converged = false;
    for k in 1..=cfg.max_iterations {
        let c1 = 1.0 - cfg.beta1.powi(k as i32);
        let c2 = 1.0 - cfg.beta2.powi(k as i32);
        for i in 0..dim {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            let denom = v_hat.sqrt() + cfg.epsilon;
            if denom > 0.0 {
                x[i] -= cfg.learning_rate * m_hat / denom;
            }
        }
        let (f_new, g_new) = objective(&x)?;
        check(k, f_new, &g_new)?;
        trace.push(f_new);
        let rel = (f_new - f).abs() / f.abs().max(1e-12);
        f = f_new;
        g = g_new;
        if rel < cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok(AdamOutcome { x, initial_value, trace, converged })
}

/// Settings shared by the three descent procedures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlrConfig {
    pub adam: AdamConfig,
    /// Number of muddled copies `T`; zero leaves only the fit term.
    pub n_permutations: usize,
    pub derangements: bool,
    pub standardize_x: bool,
    pub train_kappa: bool,
    pub spread: GateSpread,
    /// Holds `μ` at this value instead of training it.
    pub frozen_mu: Option<f64>,
}

impl Default for MlrConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            n_permutations: 30,
            derangements: true,
            standardize_x: true,
            train_kappa: true,
            spread: GateSpread::Sum,
            frozen_mu: None,
        }
    }
}

/// Which parameters the descent moves, and where they sit in the flat
/// parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    family: Family,
    p: usize,
    train_kappa: bool,
    train_mu: bool,
}

impl Layout {
    fn new(family: Family, p: usize, cfg: &MlrConfig) -> Self {
        let gated = family != Family::Ridge;
        Self {
            family,
            p,
            train_kappa: gated && cfg.train_kappa,
            train_mu: family == Family::Aggregated && cfg.frozen_mu.is_none(),
        }
    }

    fn gated(&self) -> bool {
        self.family != Family::Ridge
    }

    fn pack(&self, hp: &HyperParams) -> Vec<f64> {
        let mut v = vec![hp.log_lambda];
        if self.train_kappa {
            v.push(hp.log_kappa);
        }
        if self.gated() {
            v.extend(hp.gamma.iter().copied());
        }
        if self.train_mu {
            v.push(hp.mu);
        }
        v
    }

    fn unpack(&self, v: &[f64], base: &HyperParams) -> HyperParams {
        let mut hp = base.clone();
        let mut i = 0;
        hp.log_lambda = v[i];
        i += 1;
        if self.train_kappa {
            hp.log_kappa = v[i];
            i += 1;
        }
        if self.gated() {
            hp.gamma = Array1::from(v[i..i + self.p].to_vec());
            i += self.p;
        }
        if self.train_mu {
            hp.mu = v[i];
        }
        hp
    }

    fn pack_gradient(&self, g: &crate::criterion::ParamGradient) -> Vec<f64> {
        let mut v = vec![g.log_lambda];
        if self.train_kappa {
            v.push(g.log_kappa);
        }
        if self.gated() {
            v.extend(g.gamma.iter().copied());
        }
        if self.train_mu {
            v.push(g.mu);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    /// Coefficients in the units of the raw design.
    pub beta_hat: Array1<f64>,
    pub intercept: f64,
    /// Coefficients in standardized units.
    pub beta_standardized: Array1<f64>,
    pub standardizer: Standardizer,
    pub theta_hat: HyperParams,
    pub iterations: usize,
    pub initial_criterion: f64,
    pub criterion_trace: Vec<f64>,
    pub converged: bool,
    pub gate_values: Option<GateVector>,
    /// `S(μ̂)`, the weight on the ridge member, for the aggregated family.
    pub aggregation_weight: Option<f64>,
}

impl FitResult {
    pub fn final_criterion(&self) -> f64 {
        self.criterion_trace.last().copied().unwrap_or(self.initial_criterion)
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.beta_hat.len() {
            return Err(MlrError::ShapeMismatch(format!(
                "{} columns for {} coefficients",
                x.ncols(),
                self.beta_hat.len()
            )));
        }
        Ok(x.dot(&self.beta_hat) + self.intercept)
    }
}

/// Standardizes `d`, draws the permutation set and returns the criterion
/// context the procedures descend on.
pub fn prepare_context(d: &Dataset, family: Family, cfg: &MlrConfig, seed: u64) -> Result<(CriterionContext, Standardizer)> {
    let (std_data, standardizer) = standardize_with(d, cfg.standardize_x)?;
    let perms = if cfg.n_permutations == 0 {
        PermutationSet::empty()
    } else {
        sample_permutations(d.n_samples(), cfg.n_permutations, cfg.derangements, seed)?
    };
    let ctx = CriterionContext::new(std_data, perms, family)?.with_spread(cfg.spread);
    Ok((ctx, standardizer))
}

/// Runs the descent for `family` from the default starting point.
pub fn fit_mlr(d: &Dataset, family: Family, cfg: &MlrConfig, seed: u64) -> Result<FitResult> {
    let (ctx, standardizer) = prepare_context(d, family, cfg, seed)?;
    let mut start = HyperParams::initial(d.n_features());
    if let Some(mu) = cfg.frozen_mu {
        start.mu = mu;
    }
    fit_from(&ctx, standardizer, start, cfg)
}

/// Descent on an already-built context from `start`.
pub fn fit_from(ctx: &CriterionContext, standardizer: Standardizer, start: HyperParams, cfg: &MlrConfig) -> Result<FitResult> {
    let family = ctx.family();
    let layout = Layout::new(family, ctx.dataset().n_features(), cfg);
    let objective = |v: &[f64]| -> Result<(f64, Vec<f64>)> {
        let hp = layout.unpack(v, &start);
        let g = mlr_gradient(ctx, &hp)?;
        Ok((g.eval.value, layout.pack_gradient(&g.gradient)))
    };
    let outcome = adam_minimize(objective, layout.pack(&start), &cfg.adam)?;
    let theta_hat = layout.unpack(&outcome.x, &start);
    let beta_standardized = ctx.coefficients(&theta_hat)?;
    let (beta_hat, intercept) = standardizer.coefficients_to_raw(&beta_standardized);
    let gate_values = if layout.gated() {
        Some(gate_with(theta_hat.kappa(), theta_hat.gamma.view(), cfg.spread)?)
    } else {
        None
    };
    let aggregation_weight = (family == Family::Aggregated).then(|| theta_hat.aggregation_weight());
    Ok(FitResult {
        family,
        beta_hat,
        intercept,
        beta_standardized,
        standardizer,
        iterations: outcome.iterations(),
        initial_criterion: outcome.initial_value,
        converged: outcome.converged,
        criterion_trace: outcome.trace,
        theta_hat,
        gate_values,
        aggregation_weight,
    })
}

/// Ridge calibrated over `log λ` only.
pub fn fit_r_mlr(d: &Dataset, cfg: &MlrConfig, seed: u64) -> Result<FitResult> {
    fit_mlr(d, Family::Ridge, cfg, seed)
}

/// Gated ridge over `(log λ, log κ, γ)`.
pub fn fit_s_mlr(d: &Dataset, cfg: &MlrConfig, seed: u64) -> Result<FitResult> {
    fit_mlr(d, Family::Sparse, cfg, seed)
}

/// Aggregate of ridge and gated ridge over `(log λ, log κ, γ, μ)`.
pub fn fit_a_mlr(d: &Dataset, cfg: &MlrConfig, seed: u64) -> Result<FitResult> {
    fit_mlr(d, Family::Aggregated, cfg, seed)
}
