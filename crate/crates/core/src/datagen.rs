//! Synthetic benchmark scenarios and CSV ingestion.
//!
//! Scenario A has correlated features and a dense coefficient vector,
//! scenario B independent features and a sparse one, scenario C combines
//! correlation with sparsity. Correlated designs use the AR(1) construction
//! `x_j = ρ x_{j-1} + sqrt(1 − ρ²) z_j`, whose covariance is the Toeplitz
//! matrix `ρ^{|i−j|}`.

use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{MlrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B,
    C,
}

impl Scenario {
    pub fn correlated(self) -> bool {
        matches!(self, Scenario::A | Scenario::C)
    }

    pub fn sparse(self) -> bool {
        matches!(self, Scenario::B | Scenario::C)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::A => "A",
            Scenario::B => "B",
            Scenario::C => "C",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Scenario {
    type Err = MlrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            other => Err(MlrError::InvalidInput(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    #[serde(default = "defaults::n_train")]
    pub n_train: usize,
    #[serde(default = "defaults::n_test")]
    pub n_test: usize,
    #[serde(default = "defaults::p")]
    pub p: usize,
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    /// Adjacent-feature correlation for scenarios A and C.
    #[serde(default = "defaults::rho")]
    pub rho: f64,
    /// Number of non-zero coefficients for scenarios B and C.
    #[serde(default = "defaults::sparsity")]
    pub sparsity: usize,
    /// Magnitude of each dense coefficient (scenario A).
    #[serde(default = "defaults::dense_magnitude")]
    pub dense_magnitude: f64,
    /// Magnitude of each non-zero sparse coefficient (scenarios B, C).
    #[serde(default = "defaults::sparse_magnitude")]
    pub sparse_magnitude: f64,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn n_train() -> usize {
        100
    }
    pub fn n_test() -> usize {
        1000
    }
    pub fn p() -> usize {
        80
    }
    pub fn sigma() -> f64 {
        10.0
    }
    pub fn rho() -> f64 {
        0.8
    }
    pub fn sparsity() -> usize {
        8
    }
    pub fn dense_magnitude() -> f64 {
        1.0
    }
    pub fn sparse_magnitude() -> f64 {
        10.0
    }
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            n_train: defaults::n_train(),
            n_test: defaults::n_test(),
            p: defaults::p(),
            sigma: defaults::sigma(),
            rho: defaults::rho(),
            sparsity: defaults::sparsity(),
            dense_magnitude: defaults::dense_magnitude(),
            sparse_magnitude: defaults::sparse_magnitude(),
            seed: 0,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Short label such as `A_sigma10`.
    pub fn label(&self) -> String {
        format!("{}_sigma{}", self.scenario, self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(MlrError::InvalidInput(msg));
        if self.n_train < 2 || self.n_test < 2 {
            return fail(format!("n_train={} and n_test={} must be >= 2", self.n_train, self.n_test));
        }
        if self.p < 1 {
            return fail("p must be >= 1".into());
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return fail(format!("sigma must be finite and non-negative, got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return fail(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if self.scenario.sparse() && self.sparsity > self.p {
            return fail(format!("sparsity {} exceeds p = {}", self.sparsity, self.p));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticInstance {
    pub spec: ScenarioSpec,
    pub train: Dataset,
    pub test: Dataset,
    pub beta_star: Array1<f64>,
    pub support_star: Vec<usize>,
}

fn random_sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn draw_design(rng: &mut ChaCha8Rng, n: usize, p: usize, rho: Option<f64>) -> Array2<f64> {
    let mut x = Array2::<f64>::zeros((n, p));
    for mut row in x.rows_mut() {
        for j in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            row[j] = match rho {
                Some(r) if j > 0 => r * row[j - 1] + (1.0 - r * r).sqrt() * z,
                _ => z,
            };
        }
    }
    x
}

fn draw_response(rng: &mut ChaCha8Rng, x: &Array2<f64>, beta: &Array1<f64>, sigma: f64) -> Array1<f64> {
    let mut y = x.dot(beta);
    for v in y.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += sigma * e;
    }
    y
}

/// Draws one train/test pair; deterministic in `spec.seed`.
pub fn generate(spec: &ScenarioSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.p;
    let mut beta_star = Array1::<f64>::zeros(p);
    if spec.scenario.sparse() {
        let mut support = index::sample(&mut rng, p, spec.sparsity).into_vec();
        support.sort_unstable();
        for j in support {
            beta_star[j] = spec.sparse_magnitude * random_sign(&mut rng);
        }
    } else {
        for b in beta_star.iter_mut() {
            *b = spec.dense_magnitude * random_sign(&mut rng);
        }
    }
    let rho = spec.scenario.correlated().then_some(spec.rho);
    let x_train = draw_design(&mut rng, spec.n_train, p, rho);
    let y_train = draw_response(&mut rng, &x_train, &beta_star, spec.sigma);
    let x_test = draw_design(&mut rng, spec.n_test, p, rho);
    let y_test = draw_response(&mut rng, &x_test, &beta_star, spec.sigma);
    let support_star = beta_star.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect();
    Ok(SyntheticInstance {
        spec: spec.clone(),
        train: Dataset::new(x_train, y_train)?,
        test: Dataset::new(x_test, y_test)?,
        beta_star,
        support_star,
    })
}

fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| MlrError::Csv(e.to_string()))?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| format!("{v:?}"))).map_err(|e| MlrError::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_vector(path: &Path, v: &Array1<f64>) -> Result<()> {
    let body: String = v.iter().map(|x| format!("{x:?}\n")).collect();
    fs::write(path, body)?;
    Ok(())
}

impl SyntheticInstance {
    /// Writes `X_train.csv`, `y_train.csv`, `X_test.csv`, `y_test.csv`,
    /// `beta_star.csv` and `meta.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_matrix(&dir.join("X_train.csv"), self.train.x())?;
        write_vector(&dir.join("y_train.csv"), self.train.y())?;
        write_matrix(&dir.join("X_test.csv"), self.test.x())?;
        write_vector(&dir.join("y_test.csv"), self.test.y())?;
        write_vector(&dir.join("beta_star.csv"), &self.beta_star)?;
        let meta = serde_json::to_string_pretty(&self.spec).map_err(|e| MlrError::InvalidInput(e.to_string()))?;
        fs::write(dir.join("meta.json"), meta)?;
        Ok(())
    }
}

/// Reads a headed, comma-separated numeric file with `target_column` as
/// the response and every other column as a feature.
pub fn read_csv_dataset(path: &Path, target_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| MlrError::Csv(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| MlrError::Csv(e.to_string()))?.iter().map(str::to_string).collect();
    let target = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| MlrError::Csv(format!("target column {target_column:?} not found")))?;
    let features: Vec<usize> = (0..headers.len()).filter(|&j| j != target).collect();
    if features.is_empty() {
        return Err(MlrError::Csv("no feature columns besides the target".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| MlrError::Csv(format!("row {row_idx}: {e}")))?;
        let mut row = Vec::with_capacity(headers.len());
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                MlrError::Csv(format!("column {:?} is not numeric (row {row_idx}: {field:?})", headers[j]))
            })?;
            if !v.is_finite() {
                return Err(MlrError::Csv(format!("row {row_idx} has a non-finite value in column {:?}", headers[j])));
            }
            row.push(v);
        }
        if row.len() != headers.len() {
            return Err(MlrError::Csv(format!("row {row_idx} has {} fields, expected {}", row.len(), headers.len())));
        }
        ys.push(row[target]);
        xs.extend(features.iter().map(|&j| row[j]));
    }
    let n = ys.len();
    let x = Array2::from_shape_vec((n, features.len()), xs).map_err(|e| MlrError::Csv(e.to_string()))?;
    let names = features.iter().map(|&j| headers[j].clone()).collect();
    Dataset::new(x, Array1::from(ys))?.with_feature_names(names)
}

/// Random train/test split of `d`; the test side gets
/// `round(n · test_fraction)` rows.
pub fn split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(MlrError::InvalidInput(format!("test_fraction must lie in (0, 1), got {test_fraction}")));
    }
    let n = d.n_samples();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test < 2 || n - n_test < 2 {
        return Err(MlrError::InvalidInput(format!("{n} rows cannot be split into two sides of >= 2 rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test_idx, train_idx) = idx.split_at(n_test);
    Ok((d.select_rows(train_idx)?, d.select_rows(test_idx)?))
}

pub fn load_csv(path: &Path, target_column: &str, seed: u64, test_fraction: f64) -> Result<(Dataset, Dataset)> {
    split(&read_csv_dataset(path, target_column)?, test_fraction, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn sparse_scenarios_have_declared_support() {
        for sc in [Scenario::B, Scenario::C] {
            let inst = generate(&ScenarioSpec::new(sc).with_seed(4)).unwrap();
            assert_eq!(inst.support_star.len(), 8);
            assert!(inst.support_star.iter().all(|&j| inst.beta_star[j].abs() == 10.0));
        }
        let a = generate(&ScenarioSpec::new(Scenario::A).with_seed(4)).unwrap();
        assert_eq!(a.support_star.len(), 80);
        assert!(a.beta_star.iter().all(|b| b.abs() == 1.0));
    }

    #[test]
    fn shapes_and_determinism() {
        let spec = ScenarioSpec::new(Scenario::C).with_seed(11);
        let a = generate(&spec).unwrap();
        assert_eq!(a.train.x().dim(), (100, 80));
        assert_eq!(a.test.x().dim(), (1000, 80));
        assert_eq!(a, generate(&spec).unwrap());
        assert_ne!(a.train, generate(&spec.clone().with_seed(12)).unwrap().train);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = ScenarioSpec::new(Scenario::B);
        s.sparsity = 81;
        assert!(generate(&s).is_err());
        let mut s = ScenarioSpec::new(Scenario::A);
        s.rho = 1.0;
        assert!(generate(&s).is_err());
        assert!(generate(&ScenarioSpec::new(Scenario::A).with_sigma(-1.0)).is_err());
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_split_sizes() {
        let mut body = String::from("a,b,target\n");
        for i in 0..10 {
            body.push_str(&format!("{i},{},{}\n", i * i, 2 * i));
        }
        let f = write_tmp(&body);
        let (train, test) = load_csv(f.path(), "target", 7, 0.2).unwrap();
        assert_eq!(train.n_samples(), 8);
        assert_eq!(test.n_samples(), 2);
        assert_eq!(train.feature_names().unwrap(), ["a", "b"]);
        let mut seen: Vec<f64> = train.x().column(0).iter().chain(test.x().column(0).iter()).copied().collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..10).map(f64::from).collect::<Vec<_>>());
        let (train2, test2) = load_csv(f.path(), "target", 7, 0.2).unwrap();
        assert_eq!((train, test), (train2, test2));
    }

    #[test]
    fn csv_errors_name_the_problem() {
        let f = write_tmp("a,city,y\n1,paris,2\n2,rome,3\n3,oslo,4\n");
        let err = read_csv_dataset(f.path(), "y").unwrap_err().to_string();
        assert!(err.contains("\"city\""), "{err}");
        let f = write_tmp("a,y\n1,2\n2,NaN\n3,4\n");
        let err = read_csv_dataset(f.path(), "y").unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");
        let f = write_tmp("a,y\n1,2\n2,3\n");
        assert!(read_csv_dataset(f.path(), "missing").is_err());
    }
}
