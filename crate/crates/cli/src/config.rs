use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use mlr_core::baselines::CvConfig;
use mlr_core::datagen::{Scenario, ScenarioSpec};
use mlr_core::metrics::DEFAULT_SUPPORT_THRESHOLD;
use mlr_core::optimizer::AdamConfig;
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "MLR_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "mlr-output";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Procedure {
    RMlr,
    SMlr,
    AMlr,
    CvRidge,
    CvLasso,
    CvEnet,
    GridMlrRidge,
    GridMlrLasso,
}

impl Procedure {
    pub const ALL: [Procedure; 8] = [
        Procedure::RMlr,
        Procedure::SMlr,
        Procedure::AMlr,
        Procedure::CvRidge,
        Procedure::CvLasso,
        Procedure::CvEnet,
        Procedure::GridMlrRidge,
        Procedure::GridMlrLasso,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Procedure::RMlr => "R_MLR",
            Procedure::SMlr => "S_MLR",
            Procedure::AMlr => "A_MLR",
            Procedure::CvRidge => "CV_RIDGE",
            Procedure::CvLasso => "CV_LASSO",
            Procedure::CvEnet => "CV_ENET",
            Procedure::GridMlrRidge => "GRID_MLR_RIDGE",
            Procedure::GridMlrLasso => "GRID_MLR_LASSO",
        }
    }

    /// Trained by gradient descent on the criterion.
    pub fn is_descent(self) -> bool {
        matches!(self, Procedure::RMlr | Procedure::SMlr | Procedure::AMlr)
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Procedure {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        Procedure::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .with_context(|| format!("unknown procedure {s:?}; expected one of {}", list_names()))
    }
}

fn list_names() -> String {
    Procedure::ALL.iter().map(|p| p.name()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenarios: Vec<ScenarioSpec>,
    pub procedures: Vec<Procedure>,
    pub repetitions: usize,
    pub adam: AdamConfig,
    /// Number of permuted copies in the criterion.
    #[serde(rename = "T")]
    pub n_permutations: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub cv: CvConfig,
    pub support_threshold: f64,
    /// Worker threads; `None` lets the pool decide.
    pub workers: Option<usize>,
    /// When false every `wall_seconds` entry is written as 0 so that
    /// reports are byte-for-byte reproducible.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenarios: [Scenario::A, Scenario::B, Scenario::C].into_iter().map(ScenarioSpec::new).collect(),
            procedures: vec![
                Procedure::RMlr,
                Procedure::SMlr,
                Procedure::AMlr,
                Procedure::CvRidge,
                Procedure::CvLasso,
                Procedure::CvEnet,
            ],
            repetitions: 100,
            adam: AdamConfig::default(),
            n_permutations: 30,
            seed: 0,
            output_dir: None,
            cv: CvConfig::default(),
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
            workers: None,
            record_wall_time: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.repetitions < 1 {
            bail!("repetitions must be >= 1");
        }
        if self.procedures.is_empty() {
            bail!("at least one procedure is required");
        }
        if self.scenarios.is_empty() {
            bail!("at least one scenario is required");
        }
        if !(self.support_threshold > 0.0) {
            bail!("support_threshold must be positive");
        }
        if self.workers == Some(0) {
            bail!("workers must be >= 1");
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        self.adam.validate()?;
        self.cv.validate()?;
        Ok(())
    }

    /// Output directory: the configured one, else the environment
    /// variable, else the built-in default.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    /// Seed of repetition `r`.
    pub fn repetition_seed(&self, r: usize) -> u64 {
        self.seed ^ r as u64
    }
}
