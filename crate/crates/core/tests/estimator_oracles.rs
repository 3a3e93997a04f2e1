use mlr_core::estimators::{gate, gate_with, ridge, sparse_estimator};
use mlr_core::{standardize, Dataset, GateSpread};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_xy(n: usize, p: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
    (x, y)
}

/// `(XᵀX + λI)⁻¹ Xᵀ y` via a dense LU solve.
fn ridge_oracle(lambda: f64, x: &Array2<f64>, y: &Array1<f64>) -> DVector<f64> {
    let (n, p) = x.dim();
    let xm = DMatrix::from_fn(n, p, |i, j| x[[i, j]]);
    let yv = DVector::from_iterator(n, y.iter().copied());
    let a = xm.transpose() * &xm + DMatrix::identity(p, p) * lambda;
    a.lu().solve(&(xm.transpose() * yv)).expect("regularized system is invertible")
}

#[test]
fn ridge_matches_dense_solver() {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        // every fifth instance takes the p > n path
        let (n, p) = if seed % 5 == 0 { (12, 30) } else { (40, 8 + (seed as usize % 7)) };
        let (x, y) = random_xy(n, p, seed);
        let lambda = 10f64.powf(-2.0 + (seed % 7) as f64 * 0.7);
        let got = ridge(lambda, x.view(), y.view()).unwrap();
        let want = ridge_oracle(lambda, &x, &y);
        let diff: f64 = got.iter().zip(want.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst = worst.max(diff / want.norm());
    }
    assert!(worst <= 1e-10, "worst relative error {worst:e}");
}

#[test]
fn ridge_shrinks_monotonically() {
    for seed in 0..10u64 {
        let (x, y) = random_xy(30, 6, seed);
        let mut prev = f64::INFINITY;
        for k in -3..=6 {
            let b = ridge(10f64.powi(k), x.view(), y.view()).unwrap();
            let norm = b.dot(&b).sqrt();
            assert!(norm < prev, "seed {seed}, λ=1e{k}: {norm} >= {prev}");
            prev = norm;
        }
    }
}

#[test]
fn half_open_gates_equal_ridge_on_scaled_design() {
    // with γ = 0 every gate is 1/2, so the gated estimator is ridge on X/2 scaled by 1/2
    let (x, y) = random_xy(25, 5, 3);
    let g = gate(0.7, Array1::zeros(5).view()).unwrap();
    assert!(g.values().iter().all(|s| *s == 0.5));
    let b = sparse_estimator(2.0, 0.7, Array1::zeros(5).view(), x.view(), y.view()).unwrap();
    let half = ridge(2.0, (&x * 0.5).view(), y.view()).unwrap() * 0.5;
    for (a, c) in b.iter().zip(half.iter()) {
        assert!((a - c).abs() <= 1e-12);
    }
}

#[test]
fn standardize_round_trip() {
    for seed in 0..10u64 {
        let (mut x, y) = random_xy(20, 4, seed);
        x.column_mut(2).mapv_inplace(|v| 3.0 * v + 100.0);
        let y = y * 7.0 - 2.0;
        let d = Dataset::new(x.clone(), y.clone()).unwrap();
        let (s, st) = standardize(&d).unwrap();
        let xr = st.inverse_x(s.x());
        let yr = st.inverse_y(s.y());
        assert!(xr.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0)));
        assert!(yr.iter().zip(y.iter()).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0)));
    }
}

fn gamma_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 1..12)
}

proptest! {
    #[test]
    fn gates_lie_in_open_unit_interval(gamma in gamma_strategy(), log_kappa in -3.0f64..3.0) {
        for spread in [GateSpread::Sum, GateSpread::Mean] {
            let g = gate_with(log_kappa.exp(), Array1::from(gamma.clone()).view(), spread).unwrap();
            prop_assert!(g.values().iter().all(|s| *s > 0.0 && *s < 1.0));
        }
    }

    #[test]
    fn gates_ignore_common_shifts(gamma in gamma_strategy(), shift in -5.0f64..5.0, kappa in 0.05f64..5.0) {
        let g = Array1::from(gamma);
        let a = gate(kappa, g.view()).unwrap();
        let b = gate(kappa, (&g + shift).view()).unwrap();
        for (u, v) in a.values().iter().zip(b.values().iter()) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn negated_scores_give_complementary_gates(gamma in gamma_strategy(), kappa in 0.05f64..5.0) {
        let g = Array1::from(gamma);
        let a = gate(kappa, g.view()).unwrap();
        let b = gate(kappa, (-&g).view()).unwrap();
        for (u, v) in a.values().iter().zip(b.values().iter()) {
            prop_assert!((u + v - 1.0).abs() <= f64::EPSILON);
        }
    }
}
