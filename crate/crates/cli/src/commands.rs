//! The three subcommands.

use std::path::{Path, PathBuf};

use abvr_core::inference::{compare_methods_with, Estimator};
use abvr_core::numeric::mix_seed;
use abvr_core::regression::HcVariant;
use abvr_core::simulation::{convergence_scan, run, SimSettings};
use clap::Args;
use serde::Serialize;

use crate::config::{
    dedup_methods, load_json, resolve_seed, AnalysisConfig, ConvergenceScenario, FrameworkChoice,
    OutputFormat, SimulationScenario,
};
use crate::input::read_experiment_csv;
use crate::manifest::{resolve_timestamp, RunManifest};
use crate::report::{analysis_rows, emit, simulation_rows, ConvergenceRow, Report};
use crate::{CliError, Env};

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Output encoding. Defaults to the config value, then the output file
    /// extension, then csv.
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// RFC 3339 timestamp recorded in the manifest. Falls back to
    /// SOURCE_DATE_EPOCH, then the current time.
    #[arg(long)]
    pub timestamp: Option<String>,
}

impl OutputArgs {
    fn format(&self, configured: Option<OutputFormat>) -> OutputFormat {
        self.format.or(configured).unwrap_or_else(|| {
            match self
                .output
                .as_deref()
                .and_then(Path::extension)
                .and_then(|e| e.to_str())
            {
                Some(ext) if ext.eq_ignore_ascii_case("json") => OutputFormat::Json,
                _ => OutputFormat::Csv,
            }
        })
    }
}

/// Overrides shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct MethodArgs {
    /// Estimator to include; repeat or comma-separate. Defaults to all.
    #[arg(long = "method", value_delimiter = ',')]
    pub methods: Vec<Estimator>,
    /// Variance framework(s) to run.
    #[arg(long, value_enum)]
    pub framework: Option<FrameworkChoice>,
    /// Sandwich variant for the regression estimators (HC0..HC3).
    #[arg(long)]
    pub hc: Option<HcVariant>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AnalyzeArgs {
    /// Experiment CSV with columns t, y, x and optionally unit_id.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// JSON analysis config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Two-sided significance level.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Master seed; overrides AB_SEED and the file value.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub methods: MethodArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    /// JSON scenario file.
    #[arg(long)]
    pub config: PathBuf,
    /// Replications per configuration.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Master seed; overrides AB_SEED and the file value.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Two-sided significance level.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub methods: MethodArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConvergenceArgs {
    /// JSON scenario file.
    #[arg(long)]
    pub config: PathBuf,
    /// Replications per configuration.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Master seed; overrides AB_SEED and the file value.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ascending sample sizes, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Vec<usize>,
    #[command(flatten)]
    pub methods: MethodArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn apply_methods(
    target: &mut Vec<Estimator>,
    framework: &mut FrameworkChoice,
    hc: &mut HcVariant,
    args: &MethodArgs,
) {
    if !args.methods.is_empty() {
        *target = args.methods.clone();
    }
    dedup_methods(target);
    if let Some(f) = args.framework {
        *framework = f;
    }
    if let Some(h) = args.hc {
        *hc = h;
    }
}

fn write_report<R: Serialize + serde::de::DeserializeOwned>(
    report: &Report<R>,
    out: &OutputArgs,
    configured: Option<OutputFormat>,
) -> Result<(), CliError> {
    let text = report.render(out.format(configured))?;
    emit(&text, out.output.as_deref())
}

/// Runs every requested estimator on one dataset. Exit 3 when all fail; the
/// report is still written.
pub fn cmd_analyze(args: &AnalyzeArgs, env: &Env) -> Result<(), CliError> {
    let mut cfg: AnalysisConfig = match &args.config {
        Some(p) => load_json(p)?,
        None => AnalysisConfig::default(),
    };
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(p) = &args.input {
        cfg.input_path = Some(p.clone());
    }
    if let Some(f) = args.out.format {
        cfg.output_format = f;
    }
    apply_methods(
        &mut cfg.methods,
        &mut cfg.framework,
        &mut cfg.hc_variant,
        &args.methods,
    );
    cfg.validate().map_err(CliError::Usage)?;
    let input = cfg
        .input_path
        .clone()
        .ok_or_else(|| CliError::Usage("no input file: pass --input or set input_path".into()))?;
    let seed = match (args.seed, env.ab_seed.as_deref()) {
        (None, None) => None,
        (flag, env_seed) => Some(resolve_seed(0, env_seed, flag)?),
    };
    let timestamp = resolve_timestamp(
        args.out.timestamp.as_deref(),
        env.source_date_epoch.as_deref(),
    )?;

    let dataset = read_experiment_csv(&input)?;
    let table = compare_methods_with(
        &dataset.data,
        cfg.alpha,
        &cfg.methods,
        &cfg.framework.frameworks(),
        cfg.hc_variant,
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;

    let report = Report {
        manifest: RunManifest::new("analyze", seed, timestamp, &cfg),
        rows: analysis_rows(&table, cfg.alpha),
    };
    let configured = args.config.as_ref().map(|_| cfg.output_format);
    write_report(&report, &args.out, configured)?;
    if table.all_failed() {
        let reasons: Vec<String> = table.rows.iter().filter_map(|r| r.error.clone()).collect();
        return Err(CliError::AllFailed(reasons.join("; ")));
    }
    Ok(())
}

/// Replication study over a scenario grid. Configuration `i` runs with seed
/// `mix_seed(seed, i)`.
pub fn cmd_simulate(args: &SimulateArgs, env: &Env) -> Result<(), CliError> {
    let mut sc: SimulationScenario = load_json(&args.config)?;
    sc.seed = resolve_seed(sc.seed, env.ab_seed.as_deref(), args.seed)?;
    if let Some(r) = args.reps {
        sc.reps = r;
    }
    if let Some(a) = args.alpha {
        sc.alpha = a;
    }
    apply_methods(
        &mut sc.methods,
        &mut sc.framework,
        &mut sc.hc_variant,
        &args.methods,
    );
    sc.validate().map_err(|m| CliError::Config {
        path: args.config.display().to_string(),
        message: m,
    })?;
    let timestamp = resolve_timestamp(
        args.out.timestamp.as_deref(),
        env.source_date_epoch.as_deref(),
    )?;

    let settings = SimSettings {
        reps: sc.reps,
        methods: sc.methods.clone(),
        alpha: sc.alpha,
        hc: sc.hc_variant,
    };
    let mut rows = Vec::new();
    for c in sc.configurations() {
        let seed = mix_seed(sc.seed, c.index as u64);
        let report = run(&c.dgp, c.framework, &settings, seed).map_err(|e| CliError::Config {
            path: args.config.display().to_string(),
            message: e.to_string(),
        })?;
        rows.extend(simulation_rows(c.index, &c.dgp, &report));
    }
    let report = Report {
        manifest: RunManifest::new("simulate", Some(sc.seed), timestamp, &sc),
        rows,
    };
    write_report(&report, &args.out, None)
}

/// Estimator discrepancy and scaled-variance quantiles over a grid of sample
/// sizes. Framework `j` (design, then model) scans with seed `mix_seed(seed, j)`.
pub fn cmd_convergence(args: &ConvergenceArgs, env: &Env) -> Result<(), CliError> {
    let mut sc: ConvergenceScenario = load_json(&args.config)?;
    sc.seed = resolve_seed(sc.seed, env.ab_seed.as_deref(), args.seed)?;
    if let Some(r) = args.reps {
        sc.reps = r;
    }
    if !args.n_grid.is_empty() {
        sc.n_grid = args.n_grid.clone();
    }
    apply_methods(
        &mut sc.methods,
        &mut sc.framework,
        &mut sc.hc_variant,
        &args.methods,
    );
    let config_error = |message: String| CliError::Config {
        path: args.config.display().to_string(),
        message,
    };
    sc.validate().map_err(config_error)?;
    let timestamp = resolve_timestamp(
        args.out.timestamp.as_deref(),
        env.source_date_epoch.as_deref(),
    )?;

    let settings = SimSettings {
        reps: sc.reps,
        methods: sc.methods.clone(),
        alpha: 0.05,
        hc: sc.hc_variant,
    };
    let mut rows = Vec::new();
    for framework in sc.framework.frameworks() {
        let j = abvr_core::Framework::ALL
            .iter()
            .position(|f| *f == framework)
            .unwrap() as u64;
        let scan = convergence_scan(
            &sc.dgp(sc.n_grid[0]),
            framework,
            &sc.n_grid,
            &settings,
            mix_seed(sc.seed, j),
        )
        .map_err(|e| config_error(e.to_string()))?;
        rows.extend(scan.iter().map(|r| ConvergenceRow::from_scan(framework, r)));
    }
    let report = Report {
        manifest: RunManifest::new("convergence", Some(sc.seed), timestamp, &sc),
        rows,
    };
    write_report(&report, &args.out, None)
}
