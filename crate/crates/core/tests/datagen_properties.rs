use mlr_core::datagen::{generate, read_csv_dataset, Scenario, ScenarioSpec};
use nalgebra::{DMatrix, DVector};

#[test]
fn noiseless_data_recovers_truth_by_least_squares() {
    for sc in [Scenario::A, Scenario::B, Scenario::C] {
        let mut spec = ScenarioSpec::new(sc).with_sigma(0.0).with_seed(3);
        spec.n_train = 200;
        let inst = generate(&spec).unwrap();
        let x = inst.train.x();
        let xm = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]]);
        let y = DVector::from_vec(inst.train.y().to_vec());
        let ols = (xm.transpose() * &xm).lu().solve(&(xm.transpose() * y)).unwrap();
        let err = ols.iter().zip(inst.beta_star.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-8, "{sc}: {err:e}");
    }
}

#[test]
fn toeplitz_adjacent_correlation() {
    let mut spec = ScenarioSpec::new(Scenario::A).with_seed(1);
    spec.n_train = 100_000;
    spec.n_test = 2;
    spec.p = 6;
    let inst = generate(&spec).unwrap();
    let x = inst.train.x();
    let n = x.nrows() as f64;
    for j in 0..5 {
        let (a, b) = (x.column(j), x.column(j + 1));
        let (ma, mb) = (a.sum() / n, b.sum() / n);
        let cov = a.iter().zip(b.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / n;
        let sa = (a.iter().map(|u| (u - ma) * (u - ma)).sum::<f64>() / n).sqrt();
        let sb = (b.iter().map(|v| (v - mb) * (v - mb)).sum::<f64>() / n).sqrt();
        let r = cov / (sa * sb);
        assert!((r - 0.8).abs() <= 0.01, "columns {j},{}: {r}", j + 1);
        assert!((sa - 1.0).abs() <= 0.01);
    }
}

#[test]
fn independent_design_has_no_correlation() {
    let mut spec = ScenarioSpec::new(Scenario::B).with_seed(2);
    spec.n_train = 50_000;
    spec.p = 8;
    let inst = generate(&spec).unwrap();
    let x = inst.train.x();
    let n = x.nrows() as f64;
    let r = x.column(0).dot(&x.column(1)) / n;
    assert!(r.abs() <= 0.02, "{r}");
}

#[test]
fn written_instance_reads_back() {
    let inst = generate(&ScenarioSpec::new(Scenario::C).with_seed(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    inst.write_to_dir(dir.path()).unwrap();
    for f in ["X_train.csv", "y_train.csv", "X_test.csv", "y_test.csv", "beta_star.csv", "meta.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let meta: ScenarioSpec = serde_json::from_str(&std::fs::read_to_string(dir.path().join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta, inst.spec);
    let y: Vec<f64> = std::fs::read_to_string(dir.path().join("y_train.csv"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(y, inst.train.y().to_vec());

    // a headed copy loads through the generic reader
    let mut body = String::from("f0,f1,target\n");
    for i in 0..inst.train.n_samples() {
        body.push_str(&format!("{:?},{:?},{:?}\n", inst.train.x()[[i, 0]], inst.train.x()[[i, 1]], inst.train.y()[i]));
    }
    let path = dir.path().join("headed.csv");
    std::fs::write(&path, body).unwrap();
    let d = read_csv_dataset(&path, "target").unwrap();
    assert_eq!(d.y(), inst.train.y());
    assert_eq!(d.x().column(1), inst.train.x().column(1));
}
