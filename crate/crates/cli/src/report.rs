//! Output tables and their CSV / JSON encodings.
//!
//! CSV files open with `#`-prefixed lines carrying the manifest as compact
//! JSON, followed by a header and one record per row. JSON files hold
//! `{"manifest": ..., "rows": [...]}`. Reals use the shortest representation
//! that parses back to the identical `f64`; non-finite values are written as
//! empty fields / `null`.

use std::fs;
use std::io::Write;
use std::path::Path;

use abvr_core::inference::{ComparisonTable, Estimator, Framework};
use abvr_core::simulation::{ScanRow, ScanSeries, SimReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::OutputFormat;
use crate::manifest::RunManifest;
use crate::CliError;

const MANIFEST_PREFIX: &str = "# manifest: ";

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub method: Estimator,
    pub framework: Framework,
    pub status: String,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub alpha: f64,
    pub n: usize,
    pub n_t: usize,
    pub n_c: usize,
    pub error: Option<String>,
}

pub fn analysis_rows(table: &ComparisonTable, alpha: f64) -> Vec<AnalysisRow> {
    table
        .rows
        .iter()
        .map(|r| {
            let res = r.result.as_ref();
            let get = |f: fn(&abvr_core::TestResult) -> f64| res.and_then(|t| finite(f(t)));
            AnalysisRow {
                method: r.estimator,
                framework: r.framework,
                status: if res.is_some() { "ok" } else { "failed" }.into(),
                estimate: get(|t| t.estimate),
                se: get(|t| t.se),
                z: get(|t| t.z),
                p_value: get(|t| t.p_two_sided),
                ci_low: get(|t| t.ci_low),
                ci_high: get(|t| t.ci_high),
                alpha,
                n: table.n,
                n_t: table.n_t,
                n_c: table.n_c,
                error: r.error.clone(),
            }
        })
        .collect()
}

/// One `(configuration, method)` cell of a replication study. `rejection_rate`
/// and `coverage` use the framework's own variance estimator (design-based for
/// a finite population, model-based for a superpopulation); both variants are
/// also reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub config_id: usize,
    pub framework: Framework,
    pub n: usize,
    pub p_t: f64,
    pub ate: f64,
    pub hte: f64,
    pub method: Estimator,
    pub rejection_rate: Option<f64>,
    pub coverage: Option<f64>,
    pub rejection_design: Option<f64>,
    pub rejection_model: Option<f64>,
    pub coverage_design: Option<f64>,
    pub coverage_model: Option<f64>,
    pub mean_estimate: Option<f64>,
    pub target: Option<f64>,
    pub empirical_variance: Option<f64>,
    pub mean_var_design: Option<f64>,
    pub mean_var_model: Option<f64>,
    pub reps: usize,
    pub failed_reps: usize,
    pub seed: u64,
}

pub fn simulation_rows(
    config_id: usize,
    dgp: &abvr_core::DgpConfig,
    report: &SimReport,
) -> Vec<SimulationRow> {
    let mut methods: Vec<Estimator> = Vec::new();
    for r in &report.results {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let d = report.get(m, Framework::DesignBased).expect("design row");
            let md = report.get(m, Framework::ModelBased).expect("model row");
            let p = report.primary(m).expect("primary row");
            SimulationRow {
                config_id,
                framework: report.framework,
                n: dgp.n,
                p_t: dgp.p_t,
                ate: dgp.ate,
                hte: dgp.hte,
                method: m,
                rejection_rate: finite(p.rejection_rate),
                coverage: finite(p.coverage),
                rejection_design: finite(d.rejection_rate),
                rejection_model: finite(md.rejection_rate),
                coverage_design: finite(d.coverage),
                coverage_model: finite(md.coverage),
                mean_estimate: finite(p.mean_estimate),
                target: finite(p.target),
                empirical_variance: finite(p.empirical_variance),
                mean_var_design: finite(d.mean_var_estimate),
                mean_var_model: finite(md.mean_var_estimate),
                reps: p.reps,
                failed_reps: p.failed_reps,
                seed: report.seed,
            }
        })
        .collect()
}

/// Long-format plot data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub framework: Framework,
    pub n: usize,
    pub series: ScanSeries,
    pub method: Estimator,
    pub variance: Option<Framework>,
    pub quantile: f64,
    pub value: Option<f64>,
}

impl ConvergenceRow {
    pub fn from_scan(framework: Framework, r: &ScanRow) -> Self {
        Self {
            framework,
            n: r.n,
            series: r.series,
            method: r.method,
            variance: r.variance,
            quantile: r.quantile,
            value: finite(r.value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<R> {
    pub manifest: RunManifest,
    pub rows: Vec<R>,
}

impl<R: Serialize + DeserializeOwned> Report<R> {
    pub fn to_csv(&self) -> Result<String, CliError> {
        if self.rows.is_empty() {
            return Err(CliError::Output(
                "refusing to write a CSV report without rows".into(),
            ));
        }
        let mut out = Vec::new();
        let manifest = serde_json::to_string(&self.manifest).expect("manifest serializes");
        writeln!(out, "{MANIFEST_PREFIX}{manifest}").expect("write to memory");
        {
            let mut w = csv::WriterBuilder::new()
                .has_headers(true)
                .from_writer(&mut out);
            for row in &self.rows {
                w.serialize(row)
                    .map_err(|e| CliError::Output(e.to_string()))?;
            }
            w.flush().map_err(|e| CliError::Output(e.to_string()))?;
        }
        Ok(String::from_utf8(out).expect("csv output is UTF-8"))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render(&self, format: OutputFormat) -> Result<String, CliError> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => Ok(self.to_json()),
        }
    }

    pub fn from_csv(text: &str) -> Result<Self, CliError> {
        let bad = |m: String| CliError::Output(format!("cannot parse CSV report: {m}"));
        let mut manifest = None;
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            if !line.starts_with('#') {
                break;
            }
            if let Some(json) = line.trim_end().strip_prefix(MANIFEST_PREFIX) {
                manifest = Some(serde_json::from_str(json).map_err(|e| bad(e.to_string()))?);
            }
            body_start += line.len();
        }
        let manifest = manifest.ok_or_else(|| bad("no manifest line".into()))?;
        let mut rdr = csv::Reader::from_reader(&text.as_bytes()[body_start..]);
        let rows = rdr
            .deserialize()
            .collect::<Result<Vec<R>, _>>()
            .map_err(|e| bad(e.to_string()))?;
        Ok(Self { manifest, rows })
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Output(format!("cannot parse JSON report: {e}")))
    }

    /// Parses either encoding.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_csv(text)
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

/// Writes to `path`, or to stdout when absent.
pub fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}
