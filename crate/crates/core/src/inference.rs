//! Normal-approximation tests and the side-by-side comparison of every
//! estimator on one dataset.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::control_variates::{self, EstimationError, ThetaMethod};
use crate::data_model::{ExperimentData, Moments};
use crate::regression::{self, DesignSpec, HcVariant, RegressionError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("variance must be finite and non-negative, got {0}")]
    InvalidVariance(f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("estimate is not finite: {0}")]
    NonFiniteEstimate(f64),
}

/// Failure of a single estimator on a dataset.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    ControlVariate(#[from] EstimationError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// Inferential target: the sample at hand, or the superpopulation it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Framework {
    #[serde(rename = "design")]
    DesignBased,
    #[serde(rename = "model")]
    ModelBased,
}

impl Framework {
    pub const ALL: [Framework; 2] = [Framework::DesignBased, Framework::ModelBased];

    pub fn as_str(self) -> &'static str {
        match self {
            Framework::DesignBased => "design",
            Framework::ModelBased => "model",
        }
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Framework {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "design" => Ok(Framework::DesignBased),
            "model" => Ok(Framework::ModelBased),
            other => Err(format!(
                "unknown framework '{other}' (expected design or model)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_two_sided: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
    pub framework: Framework,
}

impl TestResult {
    pub fn rejects(&self) -> bool {
        self.p_two_sided < self.alpha
    }

    pub fn covers(&self, target: f64) -> bool {
        self.ci_low <= target && target <= self.ci_high
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper `1 - alpha/2` standard normal quantile.
pub fn critical_value(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

/// Two-sided z-test of `H0: effect = 0` with a normal-quantile interval.
///
/// A zero variance is not an error: a zero estimate gives `z = 0, p = 1`, any
/// other estimate gives an infinite `z` with `p = 0` and a degenerate interval.
pub fn ztest(
    estimate: f64,
    variance: f64,
    alpha: f64,
    framework: Framework,
) -> Result<TestResult, InferenceError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(InferenceError::InvalidAlpha(alpha));
    }
    if !variance.is_finite() || variance < 0.0 {
        return Err(InferenceError::InvalidVariance(variance));
    }
    if !estimate.is_finite() {
        return Err(InferenceError::NonFiniteEstimate(estimate));
    }
    let se = variance.sqrt();
    let z = if se > 0.0 {
        estimate / se
    } else if estimate == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(estimate)
    };
    let p_two_sided = libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);
    let half_width = critical_value(alpha) * se;
    Ok(TestResult {
        estimate,
        se,
        z,
        p_two_sided,
        ci_low: estimate - half_width,
        ci_high: estimate + half_width,
        alpha,
        framework,
    })
}

/// Every ATE estimator this crate knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "delta0")]
    Delta0,
    #[serde(rename = "delta1")]
    Delta1,
    #[serde(rename = "delta2")]
    Delta2,
    #[serde(rename = "delta3")]
    Delta3,
    #[serde(rename = "sr")]
    Sr,
    #[serde(rename = "ar")]
    Ar,
    #[serde(rename = "ir")]
    Ir,
}

impl Estimator {
    pub const ALL: [Estimator; 7] = [
        Estimator::Delta0,
        Estimator::Delta1,
        Estimator::Delta2,
        Estimator::Delta3,
        Estimator::Sr,
        Estimator::Ar,
        Estimator::Ir,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Delta0 => "delta0",
            Estimator::Delta1 => "delta1",
            Estimator::Delta2 => "delta2",
            Estimator::Delta3 => "delta3",
            Estimator::Sr => "sr",
            Estimator::Ar => "ar",
            Estimator::Ir => "ir",
        }
    }

    pub fn theta_method(self) -> Option<ThetaMethod> {
        match self {
            Estimator::Delta0 => Some(ThetaMethod::Unadjusted),
            Estimator::Delta1 => Some(ThetaMethod::Shared),
            Estimator::Delta2 => Some(ThetaMethod::Pooled),
            Estimator::Delta3 => Some(ThetaMethod::GroupSpecific),
            _ => None,
        }
    }

    pub fn design_spec(self) -> Option<DesignSpec> {
        match self {
            Estimator::Sr => Some(DesignSpec::Simple),
            Estimator::Ar => Some(DesignSpec::Adjusted),
            Estimator::Ir => Some(DesignSpec::Interaction),
            _ => None,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!("unknown method '{s}' (expected one of delta0, delta1, delta2, delta3, sr, ar, ir)")
            })
    }
}

/// Point estimate with design- and model-based variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub var_design: f64,
    pub var_model: f64,
}

impl Estimate {
    pub fn variance(&self, framework: Framework) -> f64 {
        match framework {
            Framework::DesignBased => self.var_design,
            Framework::ModelBased => self.var_model,
        }
    }
}

/// Runs one estimator. Regression variances are sandwich estimates; under the
/// model-based framework the interaction fit adds `beta_I^2 var(X) / n`, the
/// same correction the group-specific control variate receives
/// (`beta_I == theta_t - theta_c` for that design).
pub fn estimate(
    data: &ExperimentData,
    moments: &Moments,
    estimator: Estimator,
    hc: HcVariant,
) -> Result<Estimate, EstimatorError> {
    if let Some(method) = estimator.theta_method() {
        let r = control_variates::analyze_moments(moments, method)?;
        return Ok(Estimate {
            estimate: r.delta,
            var_design: r.var_design,
            var_model: r.var_model,
        });
    }
    let spec = estimator.design_spec().expect("regression estimator");
    let fit = regression::ols_fit_with(data, spec, hc)?;
    let (beta_t, var_beta_t) = regression::ate_from_fit(&fit);
    let correction = if spec == DesignSpec::Interaction {
        let beta_i = fit.coeffs[3];
        beta_i * beta_i * moments.full.var_x / moments.n as f64
    } else {
        0.0
    };
    Ok(Estimate {
        estimate: beta_t,
        var_design: var_beta_t,
        var_model: var_beta_t + correction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub estimator: Estimator,
    pub framework: Framework,
    pub result: Option<TestResult>,
    pub error: Option<String>,
}

/// One dataset analysed by every requested estimator under every requested framework.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub n: usize,
    pub n_t: usize,
    pub n_c: usize,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, estimator: Estimator, framework: Framework) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.framework == framework)
    }

    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| r.result.is_none())
    }
}

/// Runs `estimators` x `frameworks`, recording failures per row.
pub fn compare_methods_with(
    data: &ExperimentData,
    alpha: f64,
    estimators: &[Estimator],
    frameworks: &[Framework],
    hc: HcVariant,
) -> Result<ComparisonTable, InferenceError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(InferenceError::InvalidAlpha(alpha));
    }
    let moments = data.moments();
    let mut rows = Vec::with_capacity(estimators.len() * frameworks.len());
    for &estimator in estimators {
        let est = estimate(data, &moments, estimator, hc);
        for &framework in frameworks {
            let outcome = est.as_ref().map_err(|e| e.to_string()).and_then(|e| {
                ztest(e.estimate, e.variance(framework), alpha, framework)
                    .map_err(|e| e.to_string())
            });
            let (result, error) = match outcome {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e)),
            };
            rows.push(ComparisonRow {
                estimator,
                framework,
                result,
                error,
            });
        }
    }
    Ok(ComparisonTable {
        n: data.n(),
        n_t: data.n_t(),
        n_c: data.n_c(),
        rows,
    })
}

/// All estimators under both frameworks, HC0 sandwich.
pub fn compare_methods(
    data: &ExperimentData,
    alpha: f64,
) -> Result<ComparisonTable, InferenceError> {
    compare_methods_with(
        data,
        alpha,
        &Estimator::ALL,
        &Framework::ALL,
        HcVariant::HC0,
    )
}
