//! Closed-form estimator families indexed by regularization parameters:
//! ridge, feature-gated ("quasi-sparse") ridge, and their sigmoid-weighted
//! aggregate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, MlrError, Result};
use crate::linalg::RidgeSystem;

/// Offset added to the gamma spread inside the gate slope.
pub const GATE_SPREAD_OFFSET: f64 = 1e-2;

/// Regularization parameters in their unconstrained parametrization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub log_lambda: f64,
    pub log_kappa: f64,
    pub gamma: Array1<f64>,
    pub mu: f64,
}

impl HyperParams {
    /// Default starting point: `λ = 1e3`, `κ = 0.1`, `γ = 0`, `μ = 0`.
    pub fn initial(p: usize) -> Self {
        Self {
            log_lambda: 1e3f64.ln(),
            log_kappa: 0.1f64.ln(),
            gamma: Array1::zeros(p),
            mu: 0.0,
        }
    }

    /// Ridge-only parameters; the gate fields hold their defaults.
    pub fn ridge(lambda: f64, p: usize) -> Self {
        Self { log_lambda: lambda.ln(), ..Self::initial(p) }
    }

    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }

    pub fn kappa(&self) -> f64 {
        self.log_kappa.exp()
    }

    /// Aggregation weight `S(μ)` given to the ridge member.
    pub fn aggregation_weight(&self) -> f64 {
        sigmoid(self.mu)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.gamma.len() != p {
            return Err(MlrError::ShapeMismatch(format!(
                "gamma has length {} but the design has {p} columns",
                self.gamma.len()
            )));
        }
        let (l, k) = (self.lambda(), self.kappa());
        if !(l > 0.0 && l.is_finite()) || !(k > 0.0 && k.is_finite()) {
            return Err(MlrError::InvalidInput(format!("lambda={l}, kappa={k} must be positive and finite")));
        }
        ensure_finite("gamma", self.gamma.iter().copied())?;
        ensure_finite("mu", [self.mu])
    }
}

/// Estimator families that can be calibrated by gradient descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    Ridge,
    Sparse,
    Aggregated,
}

/// How the spread of `γ` enters the gate slope.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateSpread {
    /// Sum of squared deviations from the mean.
    #[default]
    Sum,
    /// Mean of squared deviations (sensitivity variant).
    Mean,
}

/// Diagonal of the gating matrix; entries lie strictly inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateVector(Array1<f64>);

impl GateVector {
    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }
}

// Largest double below one; saturated gates are pinned here so they stay
// inside the open interval.
const GATE_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gate logits `a_j = κ (spread + 1e-2)(γ_j − γ̄)` together with the
/// spread and the centered scores; shared by the gate and its derivative.
pub(crate) struct GateParts {
    pub logits: Array1<f64>,
    pub centered: Array1<f64>,
    pub spread: f64,
}

pub(crate) fn gate_parts(kappa: f64, gamma: ArrayView1<f64>, spread_kind: GateSpread) -> GateParts {
    let p = gamma.len() as f64;
    let mean = gamma.sum() / p;
    let centered = gamma.mapv(|g| g - mean);
    let ss = centered.dot(&centered);
    let spread = match spread_kind {
        GateSpread::Sum => ss,
        GateSpread::Mean => ss / p,
    };
    let slope = kappa * (spread + GATE_SPREAD_OFFSET);
    let logits = centered.mapv(|c| slope * c);
    GateParts { logits, centered, spread }
}

pub fn gate(kappa: f64, gamma: ArrayView1<f64>) -> Result<GateVector> {
    gate_with(kappa, gamma, GateSpread::Sum)
}

pub fn gate_with(kappa: f64, gamma: ArrayView1<f64>, spread: GateSpread) -> Result<GateVector> {
    if gamma.is_empty() {
        return Err(MlrError::InvalidInput("gate needs at least one score".into()));
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(MlrError::InvalidInput(format!("gate sharpness must be positive, got {kappa}")));
    }
    ensure_finite("gamma", gamma.iter().copied())?;
    let parts = gate_parts(kappa, gamma, spread);
    Ok(GateVector(parts.logits.mapv(|a| sigmoid(a).clamp(f64::MIN_POSITIVE, GATE_MAX))))
}

/// `X · diag(s)`.
pub fn gated_design(x: ArrayView2<f64>, s: ArrayView1<f64>) -> Array2<f64> {
    &x * &s.insert_axis(Axis(0))
}

fn check_shapes(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(MlrError::ShapeMismatch(format!("design has {} rows, response {}", x.nrows(), y.len())));
    }
    ensure_finite("x", x.iter().copied())?;
    ensure_finite("y", y.iter().copied())
}

/// `(XᵀX + λI)⁻¹ Xᵀ Y`; switches to the `n × n` dual system when `p > n`.
pub fn ridge(lambda: f64, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_shapes(x, y)?;
    Ok(RidgeSystem::new(x.to_owned(), lambda)?.coef(y))
}

/// Gated ridge: `s ⊙ ridge(λ, X diag(s), Y)` with `s = gate(κ, γ)`.
pub fn sparse_estimator(
    lambda: f64,
    kappa: f64,
    gamma: ArrayView1<f64>,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    sparse_estimator_with(lambda, kappa, gamma, x, y, GateSpread::Sum)
}

pub fn sparse_estimator_with(
    lambda: f64,
    kappa: f64,
    gamma: ArrayView1<f64>,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    spread: GateSpread,
) -> Result<Array1<f64>> {
    check_shapes(x, y)?;
    if gamma.len() != x.ncols() {
        return Err(MlrError::ShapeMismatch(format!("gamma length {} vs {} columns", gamma.len(), x.ncols())));
    }
    let s = gate_with(kappa, gamma, spread)?.into_inner();
    let b = RidgeSystem::new(gated_design(x, s.view()), lambda)?.coef(y);
    Ok(b * s)
}

/// `S(μ) β^R + (1 − S(μ)) β^S`, with the same `λ` in both members.
pub fn aggregated_estimator(hp: &HyperParams, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
    aggregated_estimator_with(hp, x, y, GateSpread::Sum)
}

pub fn aggregated_estimator_with(
    hp: &HyperParams,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    spread: GateSpread,
) -> Result<Array1<f64>> {
    hp.validate(x.ncols())?;
    let w = hp.aggregation_weight();
    let br = ridge(hp.lambda(), x, y)?;
    let bs = sparse_estimator_with(hp.lambda(), hp.kappa(), hp.gamma.view(), x, y, spread)?;
    Ok(br * w + bs * (1.0 - w))
}

impl Family {
    /// Coefficients of this family at `hp` fitted on `(x, y)`.
    pub fn estimate(
        self,
        hp: &HyperParams,
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        spread: GateSpread,
    ) -> Result<Array1<f64>> {
        match self {
            Family::Ridge => ridge(hp.lambda(), x, y),
            Family::Sparse => {
                hp.validate(x.ncols())?;
                sparse_estimator_with(hp.lambda(), hp.kappa(), hp.gamma.view(), x, y, spread)
            }
            Family::Aggregated => aggregated_estimator_with(hp, x, y, spread),
        }
    }
}

/// `Xβ`.
pub fn predict(beta: ArrayView1<f64>, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    if x.ncols() != beta.len() {
        return Err(MlrError::ShapeMismatch(format!("{} coefficients for {} columns", beta.len(), x.ncols())));
    }
    Ok(x.dot(&beta))
}
