//! Dataset container, column standardization and the empirical `n`-norm.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, MlrError, Result};

/// Design matrix `x` (rows are observations) paired with a response `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let (n, p) = x.dim();
        if n != y.len() {
            return Err(MlrError::ShapeMismatch(format!(
                "design has {n} rows but response has {} entries",
                y.len()
            )));
        }
        if n < 2 {
            return Err(MlrError::InvalidInput(format!("need at least 2 observations, got {n}")));
        }
        if p < 1 {
            return Err(MlrError::InvalidInput("need at least 1 feature".into()));
        }
        ensure_finite("x", x.iter().copied())?;
        ensure_finite("y", y.iter().copied())?;
        Ok(Self { x, y, feature_names: None })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features() {
            return Err(MlrError::ShapeMismatch(format!(
                "{} feature names for {} columns",
                names.len(),
                self.n_features()
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Rows selected by `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let x = self.x.select(Axis(0), indices);
        let y = self.y.select(Axis(0), indices);
        let mut out = Self::new(x, y)?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }
}

/// Affine map between raw and standardized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_means: Array1<f64>,
    pub x_scales: Array1<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

fn mean_and_sd(v: ArrayView1<f64>) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.sum() / n;
    let ss: f64 = v.iter().map(|a| (a - mean) * (a - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

// Columns whose sample sd is below this (relative to their magnitude) are
// treated as constant.
fn is_degenerate(sd: f64, mean: f64) -> bool {
    sd <= 1e-12 * mean.abs().max(1.0)
}

impl Standardizer {
    /// Fit on `d`; when `scale_x` is false the columns are centered only.
    pub fn fit(d: &Dataset, scale_x: bool) -> Result<Self> {
        let n = d.n_samples();
        if n < 2 {
            return Err(MlrError::InvalidInput("standard deviation needs n >= 2".into()));
        }
        let p = d.n_features();
        let mut x_means = Array1::zeros(p);
        let mut x_scales = Array1::ones(p);
        for (j, col) in d.x.axis_iter(Axis(1)).enumerate() {
            let (m, sd) = mean_and_sd(col);
            x_means[j] = m;
            if scale_x && !is_degenerate(sd, m) {
                x_scales[j] = sd;
            }
        }
        let (y_mean, y_sd) = mean_and_sd(d.y.view());
        let y_scale = if is_degenerate(y_sd, y_mean) { 1.0 } else { y_sd };
        Ok(Self { x_means, x_scales, y_mean, y_scale })
    }

    pub fn transform_x(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x - &self.x_means.view().insert_axis(Axis(0));
        out /= &self.x_scales.view().insert_axis(Axis(0));
        out
    }

    pub fn transform_y(&self, y: &Array1<f64>) -> Array1<f64> {
        y.mapv(|v| (v - self.y_mean) / self.y_scale)
    }

    pub fn transform(&self, d: &Dataset) -> Result<Dataset> {
        let mut out = Dataset::new(self.transform_x(&d.x), self.transform_y(&d.y))?;
        out.feature_names = d.feature_names.clone();
        Ok(out)
    }

    pub fn inverse_x(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x * &self.x_scales.view().insert_axis(Axis(0));
        out += &self.x_means.view().insert_axis(Axis(0));
        out
    }

    pub fn inverse_y(&self, y: &Array1<f64>) -> Array1<f64> {
        y.mapv(|v| v * self.y_scale + self.y_mean)
    }

    /// Maps standardized-space coefficients to raw units, returning
    /// `(coefficients, intercept)`.
    pub fn coefficients_to_raw(&self, beta_std: &Array1<f64>) -> (Array1<f64>, f64) {
        let beta = beta_std * self.y_scale / &self.x_scales;
        let intercept = self.y_mean - self.x_means.dot(&beta);
        (beta, intercept)
    }
}

/// Standardizes both the columns of `x` and the response.
pub fn standardize(d: &Dataset) -> Result<(Dataset, Standardizer)> {
    standardize_with(d, true)
}

pub fn standardize_with(d: &Dataset, scale_x: bool) -> Result<(Dataset, Standardizer)> {
    let s = Standardizer::fit(d, scale_x)?;
    Ok((s.transform(d)?, s))
}

/// Root-mean-square of the entries, `(1/n sum v_i^2)^(1/2)`.
pub fn norm_n(v: ArrayView1<f64>) -> f64 {
    debug_assert!(!v.is_empty());
    (v.dot(&v) / v.len() as f64).sqrt()
}
