//! Dense Cholesky factorization and the factorized ridge system shared by
//! every estimator family.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{MlrError, Result};

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(MlrError::ShapeMismatch(format!("cholesky of {}x{} matrix", n, a.ncols())));
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(MlrError::NotPositiveDefinite { pivot: j, value: d });
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let l = &self.l;
        let mut x = b.to_owned();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[[i, k]] * x[k];
            }
            x[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * x[k];
            }
            x[i] = s / l[[i, i]];
        }
        x
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(MlrError::InvalidInput(format!("ridge strength must be positive, got {lambda}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Form {
    /// Factor of `ZᵀZ + λI_p`.
    Primal(Cholesky),
    /// Factor of `ZZᵀ + λI_n`, used when `p > n`.
    Dual(Cholesky),
}

/// `(ZᵀZ + λI)` for a fixed design `Z`, factorized once and reused for
/// many right-hand sides.
#[derive(Debug, Clone)]
pub struct RidgeSystem {
    z: Array2<f64>,
    lambda: f64,
    form: Form,
}

impl RidgeSystem {
    pub fn new(z: Array2<f64>, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let (n, p) = z.dim();
        if p > n {
            let mut k = z.dot(&z.t());
            k.diag_mut().mapv_inplace(|v| v + lambda);
            Ok(Self { z, lambda, form: Form::Dual(Cholesky::factor(k.view())?) })
        } else {
            let gram = z.t().dot(&z);
            Self::from_gram(z, gram, lambda)
        }
    }

    /// Primal-form system from a precomputed `ZᵀZ` (consumed).
    pub fn from_gram(z: Array2<f64>, mut gram: Array2<f64>, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if z.ncols() > z.nrows() {
            return Self::new(z, lambda);
        }
        gram.diag_mut().mapv_inplace(|v| v + lambda);
        let chol = Cholesky::factor(gram.view())?;
        Ok(Self { z, lambda, form: Form::Primal(chol) })
    }

    pub fn design(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_dual(&self) -> bool {
        matches!(self.form, Form::Dual(_))
    }

    /// Ridge coefficients `(ZᵀZ + λI)⁻¹ Zᵀ y`.
    pub fn coef(&self, y: ArrayView1<f64>) -> Array1<f64> {
        match &self.form {
            Form::Primal(c) => c.solve(self.z.t().dot(&y).view()),
            Form::Dual(c) => self.z.t().dot(&c.solve(y)),
        }
    }

    /// `(ZᵀZ + λI)⁻¹ v` for a length-`p` vector.
    pub fn solve(&self, v: ArrayView1<f64>) -> Array1<f64> {
        match &self.form {
            Form::Primal(c) => c.solve(v),
            Form::Dual(c) => {
                // Woodbury: (ZᵀZ + λI)⁻¹ = (I - Zᵀ(ZZᵀ + λI)⁻¹Z) / λ
                let zv = self.z.dot(&v);
                let corr = self.z.t().dot(&c.solve(zv.view()));
                (&v - &corr) / self.lambda
            }
        }
    }
}
