use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mlr_cli::benchmark::{fit_procedure, run_benchmark};
use mlr_cli::config::{ExperimentConfig, Procedure};
use mlr_cli::curve::run_curve;
use mlr_cli::output::{compare_columns, write_curve, write_report, write_sweep, Columns};
use mlr_cli::sweep::{run_permutation_sweep, SweepOptions};
use mlr_core::baselines::CvFamily;
use mlr_core::datagen::{generate, load_csv, Scenario, ScenarioSpec};
use mlr_core::metrics::r2_score;
use mlr_core::Family;
use serde_json::json;

#[derive(Parser)]
#[command(name = "mlr", version, about = "Label-muddling regularization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic train/test instances as CSV.
    Generate(Common),
    /// Fit one procedure on one dataset and print the result as JSON.
    Fit(FitArgs),
    /// Run every scenario x procedure x repetition and write the reports.
    Benchmark(BenchArgs),
    /// Criterion, CV error and test R² along a penalty grid.
    Curve(CurveArgs),
    /// Test R² and iteration counts as the number of permutations varies.
    Sweep(SweepArgs),
    /// Two-sided Mann-Whitney test between two columns of a CSV file.
    Mwtest(MwArgs),
}

/// Options shared with the JSON config; flags override the file.
#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenarios (A, B, C); replaces the configured list.
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<Scenario>,
    /// Noise levels; crossed with the scenarios.
    #[arg(long, value_delimiter = ',')]
    sigma: Vec<f64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of permuted copies.
    #[arg(long = "T")]
    t: Option<usize>,
    /// Defaults to $MLR_OUTPUT_DIR, then ./mlr-output.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    procedures: Vec<Procedure>,
    #[arg(long)]
    workers: Option<usize>,
    /// Write 0 for every wall time so reports are reproducible.
    #[arg(long)]
    no_wall_time: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    procedure: Procedure,
    /// CSV file with a header row; omitted means a generated scenario.
    #[arg(long, requires = "target")]
    csv: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum CurveFamily {
    Ridge,
    Lasso,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "ridge")]
    family: CurveFamily,
    #[arg(long, default_value_t = 50)]
    grid_size: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "T-values", value_delimiter = ',', default_values_t = [1, 2, 5, 10, 20, 30])]
    t_values: Vec<usize>,
    /// R_MLR, S_MLR or A_MLR.
    #[arg(long, default_value = "R_MLR")]
    procedure: Procedure,
    /// Add a T = 0 row where the criterion is the fit term alone.
    #[arg(long)]
    ablation: bool,
}

#[derive(Args)]
struct MwArgs {
    csv: PathBuf,
    /// First column, or first procedure when --metric is given.
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    /// Metric column of a per_repetition.csv; switches to procedure mode.
    #[arg(long)]
    metric: Option<String>,
    #[arg(long, requires = "metric")]
    scenario: Option<String>,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)?,
            None => ExperimentConfig::default(),
        };
        let base: Vec<ScenarioSpec> = if self.scenario.is_empty() {
            cfg.scenarios.clone()
        } else {
            self.scenario.iter().map(|&s| ScenarioSpec::new(s)).collect()
        };
        cfg.scenarios = if self.sigma.is_empty() {
            base
        } else {
            base.iter().flat_map(|b| self.sigma.iter().map(|&s| b.clone().with_sigma(s))).collect()
        };
        if let Some(r) = self.repetitions {
            cfg.repetitions = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.t {
            cfg.n_permutations = t;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = Some(d.clone());
        }
        Ok(cfg)
    }

    /// The single scenario a curve, sweep or fit works on.
    fn one_scenario(cfg: &ExperimentConfig) -> anyhow::Result<ScenarioSpec> {
        match cfg.scenarios.as_slice() {
            [one] => Ok(one.clone()),
            many => Err(anyhow::anyhow!("expected exactly one scenario, got {}", many.len())),
        }
    }
}

fn validated(cfg: ExperimentConfig) -> anyhow::Result<ExperimentConfig> {
    cfg.validate()?;
    Ok(cfg)
}

fn generate_cmd(args: &Common) -> anyhow::Result<ExitCode> {
    let cfg = validated(args.resolve()?)?;
    let root = cfg.resolved_output_dir();
    for spec in &cfg.scenarios {
        for r in 0..cfg.repetitions {
            let inst = generate(&ScenarioSpec { seed: cfg.repetition_seed(r), ..spec.clone() })?;
            let dir = root.join(spec.label()).join(format!("rep_{r:03}"));
            inst.write_to_dir(&dir)?;
            println!("{}", dir.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn fit_cmd(args: &FitArgs) -> anyhow::Result<ExitCode> {
    let cfg = validated(args.common.resolve()?)?;
    let (train, test, truth) = match (&args.csv, &args.target) {
        (Some(path), Some(target)) => {
            let (tr, te) = load_csv(path, target, cfg.seed, args.test_fraction)?;
            (tr, te, None)
        }
        _ => {
            let spec = Common::one_scenario(&cfg)?;
            let inst = generate(&ScenarioSpec { seed: cfg.seed, ..spec })?;
            (inst.train, inst.test, Some(inst.beta_star))
        }
    };
    let fit = fit_procedure(args.procedure, &train, &cfg, cfg.seed)?;
    let r2 = r2_score(&test.y().to_vec(), &fit.predict(test.x()).to_vec(), true)?;
    let out = json!({
        "procedure": args.procedure,
        "r2_test": r2,
        "intercept": fit.intercept,
        "beta_hat": fit.beta_hat.to_vec(),
        "beta_star": truth.map(|b| b.to_vec()),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "aggregation_weight": fit.aggregation_weight,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(ExitCode::SUCCESS)
}

fn benchmark_cmd(args: &BenchArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = args.common.resolve()?;
    if !args.procedures.is_empty() {
        cfg.procedures = args.procedures.clone();
    }
    if args.workers.is_some() {
        cfg.workers = args.workers;
    }
    if args.no_wall_time {
        cfg.record_wall_time = false;
    }
    let cfg = validated(cfg)?;
    let report = run_benchmark(&cfg)?;
    for p in write_report(&cfg.resolved_output_dir(), &report)? {
        println!("{}", p.display());
    }
    if report.has_failures() {
        for f in &report.failures {
            eprintln!("failed: {} {} rep {}: {}", f.scenario, f.procedure, f.repetition, f.error);
        }
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn curve_cmd(args: &CurveArgs) -> anyhow::Result<ExitCode> {
    let cfg = validated(args.common.resolve()?)?;
    if args.grid_size < 2 {
        return Err(anyhow::anyhow!("grid_size must be >= 2"));
    }
    let family = match args.family {
        CurveFamily::Ridge => CvFamily::Ridge,
        CurveFamily::Lasso => CvFamily::Lasso,
    };
    let spec = Common::one_scenario(&cfg)?;
    let table = run_curve(&spec, family, args.grid_size, cfg.seed, cfg.n_permutations)?;
    println!("{}", write_curve(&cfg.resolved_output_dir(), &table)?.display());
    Ok(ExitCode::SUCCESS)
}

fn sweep_cmd(args: &SweepArgs) -> anyhow::Result<ExitCode> {
    let cfg = validated(args.common.resolve()?)?;
    let family = match args.procedure {
        Procedure::RMlr => Family::Ridge,
        Procedure::SMlr => Family::Sparse,
        Procedure::AMlr => Family::Aggregated,
        other => return Err(anyhow::anyhow!("sweep needs a descent procedure, got {other}")),
    };
    if args.t_values.is_empty() || args.t_values.contains(&0) {
        return Err(anyhow::anyhow!("T-values must be non-empty and >= 1; use --ablation for T = 0"));
    }
    let spec = Common::one_scenario(&cfg)?;
    let opts = SweepOptions { family, ablation: args.ablation, base: mlr_cli::benchmark::mlr_config(&cfg) };
    let rows = run_permutation_sweep(&spec, &args.t_values, cfg.repetitions, cfg.seed, &opts)?;
    println!("{}", write_sweep(&cfg.resolved_output_dir(), &rows)?.display());
    Ok(ExitCode::SUCCESS)
}

fn mwtest_cmd(args: &MwArgs) -> anyhow::Result<ExitCode> {
    let cols = match &args.metric {
        Some(metric) => Columns::Long { a: args.a.clone(), b: args.b.clone(), metric: metric.clone(), scenario: args.scenario.clone() },
        None => Columns::Wide { a: args.a.clone(), b: args.b.clone() },
    };
    let t = compare_columns(Path::new(&args.csv), &cols)?;
    println!("{}", serde_json::to_string_pretty(&t).context("serializing result")?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => generate_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Benchmark(a) => benchmark_cmd(a),
        Command::Curve(a) => curve_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Mwtest(a) => mwtest_cmd(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
