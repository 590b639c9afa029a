//! JSON configuration files and command-line overrides.
//!
//! Precedence, lowest first: file values, the `AB_SEED` environment variable
//! (seed only), command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use abvr_core::inference::{Estimator, Framework};
use abvr_core::regression::HcVariant;
use abvr_core::simulation::{treated_count, DgpConfig};
use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FrameworkChoice {
    Design,
    Model,
    #[default]
    Both,
}

impl FrameworkChoice {
    pub fn frameworks(self) -> Vec<Framework> {
        match self {
            FrameworkChoice::Design => vec![Framework::DesignBased],
            FrameworkChoice::Model => vec![Framework::ModelBased],
            FrameworkChoice::Both => Framework::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

fn default_alpha() -> f64 {
    0.05
}

fn all_methods() -> Vec<Estimator> {
    Estimator::ALL.to_vec()
}

fn default_x_var() -> f64 {
    DgpConfig::default().x_var
}

fn default_noise_var() -> f64 {
    DgpConfig::default().noise_var
}

fn default_intercept() -> f64 {
    DgpConfig::default().intercept
}

/// Settings for `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "all_methods")]
    pub methods: Vec<Estimator>,
    #[serde(default)]
    pub framework: FrameworkChoice,
    #[serde(default)]
    pub hc_variant: HcVariant,
    #[serde(default)]
    pub input_path: Option<PathBuf>,
    #[serde(default)]
    pub output_format: OutputFormat,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            methods: all_methods(),
            framework: FrameworkChoice::Both,
            hc_variant: HcVariant::HC0,
            input_path: None,
            output_format: OutputFormat::Csv,
        }
    }
}

/// Grid of data-generating configurations for `simulate`. Every combination
/// of `framework x p_t x ate x hte` is one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationScenario {
    #[serde(default)]
    pub seed: u64,
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "all_methods")]
    pub methods: Vec<Estimator>,
    #[serde(default)]
    pub framework: FrameworkChoice,
    #[serde(default)]
    pub hc_variant: HcVariant,
    pub n: usize,
    pub p_t: Vec<f64>,
    pub ate: Vec<f64>,
    pub hte: Vec<f64>,
    #[serde(default = "default_x_var")]
    pub x_var: f64,
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    #[serde(default = "default_intercept")]
    pub intercept: f64,
}

/// One cell of a scenario grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Configuration {
    pub index: usize,
    pub framework: Framework,
    pub dgp: DgpConfig,
}

impl SimulationScenario {
    pub fn configurations(&self) -> Vec<Configuration> {
        let mut out = Vec::new();
        for framework in self.framework.frameworks() {
            for &p_t in &self.p_t {
                for &ate in &self.ate {
                    for &hte in &self.hte {
                        out.push(Configuration {
                            index: out.len(),
                            framework,
                            dgp: DgpConfig {
                                n: self.n,
                                p_t,
                                ate,
                                hte,
                                x_var: self.x_var,
                                noise_var: self.noise_var,
                                intercept: self.intercept,
                            },
                        });
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), String> {
        check_common(self.alpha, &self.methods, self.reps)?;
        if self.p_t.is_empty() || self.ate.is_empty() || self.hte.is_empty() {
            return Err("p_t, ate and hte must each list at least one value".into());
        }
        for c in self.configurations() {
            c.dgp.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

/// Sample-size scan for `convergence`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceScenario {
    #[serde(default)]
    pub seed: u64,
    pub reps: usize,
    #[serde(default = "all_methods")]
    pub methods: Vec<Estimator>,
    #[serde(default)]
    pub framework: FrameworkChoice,
    #[serde(default)]
    pub hc_variant: HcVariant,
    pub n_grid: Vec<usize>,
    pub p_t: f64,
    #[serde(default)]
    pub ate: f64,
    pub hte: f64,
    #[serde(default = "default_x_var")]
    pub x_var: f64,
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    #[serde(default = "default_intercept")]
    pub intercept: f64,
}

impl ConvergenceScenario {
    pub fn dgp(&self, n: usize) -> DgpConfig {
        DgpConfig {
            n,
            p_t: self.p_t,
            ate: self.ate,
            hte: self.hte,
            x_var: self.x_var,
            noise_var: self.noise_var,
            intercept: self.intercept,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        check_common(0.05, &self.methods, self.reps)?;
        if self.n_grid.is_empty() {
            return Err("n_grid is empty".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err("n_grid must be strictly ascending".into());
        }
        for &n in &self.n_grid {
            treated_count(n, self.p_t).map_err(|e| e.to_string())?;
            self.dgp(n).validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

fn check_common(alpha: f64, methods: &[Estimator], reps: usize) -> Result<(), String> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    if methods.is_empty() {
        return Err("methods must not be empty".into());
    }
    if reps == 0 {
        return Err("reps must be at least 1".into());
    }
    Ok(())
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), String> {
        check_common(self.alpha, &self.methods, 1)
    }
}

/// Removes repeated methods, keeping first occurrences in order.
pub fn dedup_methods(methods: &mut Vec<Estimator>) {
    let mut seen = Vec::with_capacity(methods.len());
    methods.retain(|m| {
        if seen.contains(m) {
            false
        } else {
            seen.push(*m);
            true
        }
    });
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Resolves the seed: flag, then `AB_SEED`, then the file value.
pub fn resolve_seed(file: u64, env: Option<&str>, flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(raw) => raw.trim().parse().map_err(|_| {
            CliError::Usage(format!("AB_SEED must be an unsigned integer, got '{raw}'"))
        }),
        None => Ok(file),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analysis_defaults() {
        let c: AnalysisConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, AnalysisConfig::default());
        assert_eq!(c.methods.len(), 7);
        let c: AnalysisConfig = serde_json::from_str(
            r#"{"alpha":0.1,"methods":["delta3","ir"],"framework":"model","hc_variant":"HC3"}"#,
        )
        .unwrap();
        assert_eq!(c.methods, vec![Estimator::Delta3, Estimator::Ir]);
        assert_eq!(c.hc_variant, HcVariant::HC3);
        assert!(serde_json::from_str::<AnalysisConfig>(r#"{"alpah":0.1}"#).is_err());
    }

    #[test]
    fn grid_order_and_size() {
        let s: SimulationScenario = serde_json::from_str(
            r#"{"reps":10,"n":100,"p_t":[0.5,0.4],"ate":[0,0.1],"hte":[0,0.5]}"#,
        )
        .unwrap();
        let cs = s.configurations();
        assert_eq!(cs.len(), 16);
        assert_eq!(cs[0].framework, Framework::DesignBased);
        assert_eq!(
            (cs[1].dgp.p_t, cs[1].dgp.ate, cs[1].dgp.hte),
            (0.5, 0.0, 0.5)
        );
        assert_eq!(cs[15].framework, Framework::ModelBased);
        assert!(cs.iter().enumerate().all(|(i, c)| c.index == i));
        assert_eq!(cs[0].dgp.x_var, 2.0);
        s.validate().unwrap();
    }

    #[test]
    fn scenario_validation() {
        let bad: SimulationScenario =
            serde_json::from_str(r#"{"reps":10,"n":3,"p_t":[0.5],"ate":[0],"hte":[0]}"#).unwrap();
        assert!(bad.validate().is_err());
        let conv: ConvergenceScenario =
            serde_json::from_str(r#"{"reps":5,"n_grid":[1000,100],"p_t":0.4,"hte":0.5}"#).unwrap();
        assert!(conv.validate().is_err());
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(1, None, None).unwrap(), 1);
        assert_eq!(resolve_seed(1, Some("7"), None).unwrap(), 7);
        assert_eq!(resolve_seed(1, Some("7"), Some(9)).unwrap(), 9);
        assert!(resolve_seed(1, Some("x"), None).is_err());
    }

    #[test]
    fn dedup_keeps_order() {
        let mut m = vec![Estimator::Ir, Estimator::Delta0, Estimator::Ir];
        dedup_methods(&mut m);
        assert_eq!(m, vec![Estimator::Ir, Estimator::Delta0]);
    }
}
