//! The label-muddling criterion
//!
//! `C(θ) = ‖Y − Xβ(θ, X, Y)‖_n − (1/T) Σ_t ‖π_t(Y) − Xβ(θ, X, π_t(Y))‖_n`
//!
//! and its exact gradient with respect to the unconstrained parameters
//! `(log λ, log κ, γ, μ)`.
//!
//! Every family predicts through a ridge solve on either `X` or the gated
//! design `Z = X diag(s)`, so one factorization per evaluation serves all
//! `T + 1` responses. Derivatives of a residual `ρ = y − Z b`, with
//! `b = (ZᵀZ + λI)⁻¹Zᵀy`, are contracted against an adjoint vector `u`
//! using `w = (ZᵀZ + λI)⁻¹Zᵀu`:
//!
//! * `uᵀ ∂ρ/∂λ   = wᵀ b`
//! * `uᵀ ∂ρ/∂s_j = −(X_jᵀu) b_j − w_j (X_jᵀρ) + (X_jᵀZw) b_j`

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{norm_n, Dataset};
use crate::error::{MlrError, Result};
use crate::estimators::{gate_parts, gate_with, gated_design, Family, GateParts, GateSpread, HyperParams};
use crate::linalg::RidgeSystem;
use crate::permutation::{apply_permutation, PermutationSet};

/// Residual norms below this have no usable derivative.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Standardized data, a fixed permutation set and an estimator family.
#[derive(Debug, Clone)]
pub struct CriterionContext {
    dataset: Dataset,
    perms: PermutationSet,
    family: Family,
    spread: GateSpread,
    /// `Y` followed by each permuted copy.
    responses: Vec<Array1<f64>>,
    gram: Array2<f64>,
}

impl CriterionContext {
    pub fn new(dataset: Dataset, perms: PermutationSet, family: Family) -> Result<Self> {
        if let Some(n) = perms.n() {
            if n != dataset.n_samples() {
                return Err(MlrError::ShapeMismatch(format!(
                    "permutations act on {n} points but the dataset has {} rows",
                    dataset.n_samples()
                )));
            }
        }
        let y = dataset.y();
        let mut responses = Vec::with_capacity(perms.len() + 1);
        responses.push(y.clone());
        for p in perms.iter() {
            responses.push(apply_permutation(y.view(), p)?);
        }
        let gram = dataset.x().t().dot(dataset.x());
        Ok(Self { dataset, perms, family, spread: GateSpread::Sum, responses, gram })
    }

    pub fn with_spread(mut self, spread: GateSpread) -> Self {
        self.spread = spread;
        self
    }

    pub fn with_family(mut self, family: Family) -> Self {
        self.family = family;
        self
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn perms(&self) -> &PermutationSet {
        &self.perms
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn spread(&self) -> GateSpread {
        self.spread
    }

    /// `Y` first, then `π_1(Y), …, π_T(Y)`.
    pub fn responses(&self) -> &[Array1<f64>] {
        &self.responses
    }

    /// Coefficients of the context's family fitted on the real labels.
    pub fn coefficients(&self, hp: &HyperParams) -> Result<Array1<f64>> {
        self.family.estimate(hp, self.dataset.x().view(), self.dataset.y().view(), self.spread)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionEval {
    pub value: f64,
    pub fit_term: f64,
    pub muddle_term: f64,
}

/// Gradient over `(log λ, log κ, γ, μ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGradient {
    pub log_lambda: f64,
    pub log_kappa: f64,
    pub gamma: Array1<f64>,
    pub mu: f64,
}

impl ParamGradient {
    pub fn zeros(p: usize) -> Self {
        Self { log_lambda: 0.0, log_kappa: 0.0, gamma: Array1::zeros(p), mu: 0.0 }
    }

    /// Flattened as `[log λ, log κ, γ_1..γ_p, μ]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.gamma.len() + 3);
        v.push(self.log_lambda);
        v.push(self.log_kappa);
        v.extend(self.gamma.iter().copied());
        v.push(self.mu);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEval {
    pub eval: CriterionEval,
    pub gradient: ParamGradient,
    /// Number of residual norms below [`DEGENERATE_NORM`] whose derivative
    /// was replaced by zero.
    pub degenerate_terms: usize,
}

impl GradientEval {
    pub fn is_degenerate(&self) -> bool {
        self.degenerate_terms > 0
    }
}

struct GatedSystem {
    system: RidgeSystem,
    s: Array1<f64>,
    parts: GateParts,
}

struct Systems {
    plain: Option<RidgeSystem>,
    gated: Option<GatedSystem>,
    weight: f64,
}

fn build_systems(ctx: &CriterionContext, hp: &HyperParams) -> Result<Systems> {
    let x = ctx.dataset.x();
    let lambda = hp.lambda();
    let need_plain = matches!(ctx.family, Family::Ridge | Family::Aggregated);
    let need_gated = matches!(ctx.family, Family::Sparse | Family::Aggregated);
    if need_gated {
        hp.validate(x.ncols())?;
    }
    let plain = if need_plain {
        Some(RidgeSystem::from_gram(x.clone(), ctx.gram.clone(), lambda)?)
    } else {
        None
    };
    let gated = if need_gated {
        let s = gate_with(hp.kappa(), hp.gamma.view(), ctx.spread)?.into_inner();
        let parts = gate_parts(hp.kappa(), hp.gamma.view(), ctx.spread);
        let z = gated_design(x.view(), s.view());
        let outer = &s.view().insert_axis(Axis(1)) * &s.view().insert_axis(Axis(0));
        let gram_z = &ctx.gram * &outer;
        Some(GatedSystem { system: RidgeSystem::from_gram(z, gram_z, lambda)?, s, parts })
    } else {
        None
    };
    Ok(Systems { plain, gated, weight: hp.aggregation_weight() })
}

/// Residuals of one response under the family, before and after mixing.
struct Residuals {
    total: Array1<f64>,
    plain: Option<(Array1<f64>, Array1<f64>)>,
    gated: Option<(Array1<f64>, Array1<f64>)>,
}

fn residuals(sys: &Systems, x: &Array2<f64>, family: Family, y: &Array1<f64>) -> Residuals {
    let plain = sys.plain.as_ref().map(|r| {
        let b = r.coef(y.view());
        (y - &x.dot(&b), b)
    });
    let gated = sys.gated.as_ref().map(|g| {
        let b = g.system.coef(y.view());
        (y - &g.system.design().dot(&b), b)
    });
    let total = match family {
        Family::Ridge => plain.as_ref().unwrap().0.clone(),
        Family::Sparse => gated.as_ref().unwrap().0.clone(),
        Family::Aggregated => {
            let w = sys.weight;
            &plain.as_ref().unwrap().0 * w + &gated.as_ref().unwrap().0 * (1.0 - w)
        }
    };
    Residuals { total, plain, gated }
}

/// Per-response derivative of the residual norm with respect to `log λ`,
/// the gate values `s`, and `μ`.
struct TermGrad {
    log_lambda: f64,
    s: Option<Array1<f64>>,
    mu: f64,
}

fn term_gradient(sys: &Systems, x: &Array2<f64>, res: &Residuals, norm: f64) -> TermGrad {
    let n = res.total.len() as f64;
    let u = &res.total / (n * norm);
    let lambda_contract = |system: &RidgeSystem, b: &Array1<f64>| -> (Array1<f64>, f64) {
        let w = system.solve(system.design().t().dot(&u).view());
        let d = w.dot(b);
        (w, d)
    };
    let (wt_plain, wt_gated) = match (res.plain.is_some(), res.gated.is_some()) {
        (true, true) => (sys.weight, 1.0 - sys.weight),
        _ => (1.0, 1.0),
    };
    let mut d_lambda = 0.0;
    if let (Some(system), Some((_, b))) = (sys.plain.as_ref(), res.plain.as_ref()) {
        d_lambda += wt_plain * lambda_contract(system, b).1;
    }
    let mut d_s = None;
    if let (Some(g), Some((rho, b))) = (sys.gated.as_ref(), res.gated.as_ref()) {
        let (w, d) = lambda_contract(&g.system, b);
        d_lambda += wt_gated * d;
        let xt_u = x.t().dot(&u);
        let xt_rho = x.t().dot(rho);
        let xt_zw = x.t().dot(&g.system.design().dot(&w));
        let ds = (-&xt_u * b - &w * &xt_rho + &xt_zw * b) * wt_gated;
        d_s = Some(ds);
    }
    let mu = match (res.plain.as_ref(), res.gated.as_ref()) {
        (Some((rp, _)), Some((rg, _))) => {
            let w = sys.weight;
            u.dot(&(rp - rg)) * w * (1.0 - w)
        }
        _ => 0.0,
    };
    let lambda = sys
        .plain
        .as_ref()
        .map(RidgeSystem::lambda)
        .or_else(|| sys.gated.as_ref().map(|g| g.system.lambda()))
        .unwrap_or(0.0);
    TermGrad { log_lambda: d_lambda * lambda, s: d_s, mu }
}

/// Pulls a gradient over the gate values back to `(log κ, γ)`.
fn gate_chain(g: &GatedSystem, kappa: f64, spread: GateSpread, d_s: &Array1<f64>) -> (f64, Array1<f64>) {
    let s = &g.s;
    let d_a = d_s * &s.mapv(|v| v * (1.0 - v));
    let p = s.len() as f64;
    let centered = &g.parts.centered;
    let slope = kappa * (g.parts.spread + crate::estimators::GATE_SPREAD_OFFSET);
    let spread_scale = match spread {
        GateSpread::Sum => 2.0,
        GateSpread::Mean => 2.0 / p,
    };
    let da_dot_c = d_a.dot(centered);
    let da_mean = d_a.sum() / p;
    let d_gamma = centered * (kappa * spread_scale * da_dot_c) + d_a.mapv(|v| slope * (v - da_mean));
    let d_log_kappa = d_a.dot(&g.parts.logits);
    (d_log_kappa, d_gamma)
}

/// Mean over the muddled copies, summed in sorted order so the result does
/// not depend on the order of the permutations. Zero for an empty set.
fn mean_of_sorted(mut norms: Vec<f64>) -> f64 {
    if norms.is_empty() {
        return 0.0;
    }
    norms.sort_by(f64::total_cmp);
    norms.iter().sum::<f64>() / norms.len() as f64
}

fn evaluate(ctx: &CriterionContext, hp: &HyperParams, with_gradient: bool) -> Result<GradientEval> {
    let x = ctx.dataset.x();
    let p = x.ncols();
    let sys = build_systems(ctx, hp)?;
    let t_count = ctx.responses.len() - 1;
    let mut fit_term = 0.0;
    let mut muddle_norms = Vec::with_capacity(t_count);
    let mut grad = ParamGradient::zeros(p);
    let mut d_s_total: Array1<f64> = Array1::zeros(p);
    let mut degenerate = 0;
    for (t, y) in ctx.responses.iter().enumerate() {
        let res = residuals(&sys, x, ctx.family, y);
        let norm = norm_n(res.total.view());
        if !norm.is_finite() {
            return Err(MlrError::NonFinite(format!("residual norm for response {t}")));
        }
        let sign = if t == 0 {
            fit_term = norm;
            1.0
        } else {
            muddle_norms.push(norm);
            -1.0 / t_count as f64
        };
        if !with_gradient {
            continue;
        }
        if norm < DEGENERATE_NORM {
            degenerate += 1;
            continue;
        }
        let tg = term_gradient(&sys, x, &res, norm);
        grad.log_lambda += sign * tg.log_lambda;
        grad.mu += sign * tg.mu;
        if let Some(ds) = tg.s {
            d_s_total.scaled_add(sign, &ds);
        }
    }
    if with_gradient {
        if let Some(g) = sys.gated.as_ref() {
            let (d_kappa, d_gamma) = gate_chain(g, hp.kappa(), ctx.spread, &d_s_total);
            grad.log_kappa = d_kappa;
            grad.gamma = d_gamma;
        }
    }
    let muddle_term = mean_of_sorted(muddle_norms);
    Ok(GradientEval {
        eval: CriterionEval { value: fit_term - muddle_term, fit_term, muddle_term },
        gradient: grad,
        degenerate_terms: degenerate,
    })
}

pub fn mlr_value(ctx: &CriterionContext, hp: &HyperParams) -> Result<CriterionEval> {
    Ok(evaluate(ctx, hp, false)?.eval)
}

/// Value and analytic gradient in one pass.
pub fn mlr_gradient(ctx: &CriterionContext, hp: &HyperParams) -> Result<GradientEval> {
    evaluate(ctx, hp, true)
}

/// Central-difference gradient; a debugging oracle for [`mlr_gradient`].
pub fn finite_difference_gradient(ctx: &CriterionContext, hp: &HyperParams, h: f64) -> Result<ParamGradient> {
    let p = hp.gamma.len();
    let f = |hp: &HyperParams| mlr_value(ctx, hp).map(|e| e.value);
    let diff = |plus: HyperParams, minus: HyperParams| -> Result<f64> { Ok((f(&plus)? - f(&minus)?) / (2.0 * h)) };
    let mut out = ParamGradient::zeros(p);
    out.log_lambda = diff(
        HyperParams { log_lambda: hp.log_lambda + h, ..hp.clone() },
        HyperParams { log_lambda: hp.log_lambda - h, ..hp.clone() },
    )?;
    out.log_kappa = diff(
        HyperParams { log_kappa: hp.log_kappa + h, ..hp.clone() },
        HyperParams { log_kappa: hp.log_kappa - h, ..hp.clone() },
    )?;
    for j in 0..p {
        let mut plus = hp.clone();
        plus.gamma[j] += h;
        let mut minus = hp.clone();
        minus.gamma[j] -= h;
        out.gamma[j] = diff(plus, minus)?;
    }
    out.mu = diff(HyperParams { mu: hp.mu + h, ..hp.clone() }, HyperParams { mu: hp.mu - h, ..hp.clone() })?;
    Ok(out)
}

/// The criterion for an arbitrary estimator `y ↦ β`, e.g. the lasso at a
/// fixed penalty. No gradient is available on this path.
pub fn mlr_value_with<F>(dataset: &Dataset, perms: &PermutationSet, mut estimator: F) -> Result<CriterionEval>
where
    F: FnMut(ArrayView1<f64>) -> Result<Array1<f64>>,
{
    let x = dataset.x();
    let y = dataset.y();
    let norm_for = |target: &Array1<f64>, beta: Array1<f64>| norm_n((target - &x.dot(&beta)).view());
    let fit_term = norm_for(y, estimator(y.view())?);
    let mut muddle_norms = Vec::with_capacity(perms.len());
    for p in perms.iter() {
        let yp = apply_permutation(y.view(), p)?;
        let beta = estimator(yp.view())?;
        muddle_norms.push(norm_for(&yp, beta));
    }
    let muddle_term = mean_of_sorted(muddle_norms);
    Ok(CriterionEval { value: fit_term - muddle_term, fit_term, muddle_term })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSelection {
    pub best_index: usize,
    pub best: HyperParams,
    pub curve: Vec<f64>,
}

/// Index of the minimum of `values`; ties go to the candidate with the
/// largest `lambdas` entry, then to the earliest index.
pub fn argmin_prefer_large(values: &[f64], lambdas: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) if v < values[b] || (v == values[b] && lambdas[i] > lambdas[b]) => Some(i),
            keep => keep,
        };
    }
    best
}

/// Exhaustive criterion minimization over `grid`.
pub fn grid_select(ctx: &CriterionContext, grid: &[HyperParams]) -> Result<GridSelection> {
    if grid.is_empty() {
        return Err(MlrError::InvalidInput("grid is empty".into()));
    }
    let curve = grid.iter().map(|hp| mlr_value(ctx, hp).map(|e| e.value)).collect::<Result<Vec<_>>>()?;
    let lambdas: Vec<f64> = grid.iter().map(HyperParams::lambda).collect();
    let best_index = argmin_prefer_large(&curve, &lambdas)
        .ok_or_else(|| MlrError::NonFinite("criterion is NaN over the whole grid".into()))?;
    Ok(GridSelection { best_index, best: grid[best_index].clone(), curve })
}
