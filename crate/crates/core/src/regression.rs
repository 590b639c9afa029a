//! Regression adjustment: OLS of the outcome on the treatment indicator with an
//! optional centred covariate and treatment-covariate interaction, plus
//! Eicker-Huber-White sandwich covariances.
//!
//! Column order is fixed as `[1, T, X - mean(X), T (X - mean(X))]`, truncated to
//! two columns for [`DesignSpec::Simple`] and three for
//! [`DesignSpec::Adjusted`]. The coefficient on `T` is the ATE estimate in all
//! three specifications.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::ExperimentData;
use crate::numeric;

/// Smallest-to-largest singular value ratio (after scaling columns to unit
/// norm) below which the design is treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Index of the treatment coefficient.
pub const TREATMENT_COLUMN: usize = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressionError {
    #[error("{spec:?} design is rank deficient (condition ratio {ratio:e})")]
    RankDeficient { spec: DesignSpec, ratio: f64 },
    #[error("design has {design} rows but the fit has {fit}")]
    DimensionMismatch { design: usize, fit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DesignSpec {
    /// `Y ~ 1 + T`
    #[serde(rename = "SR")]
    Simple,
    /// `Y ~ 1 + T + (X - mean(X))`
    #[serde(rename = "AR")]
    Adjusted,
    /// `Y ~ 1 + T + (X - mean(X)) + T (X - mean(X))`
    #[serde(rename = "IR")]
    Interaction,
}

impl DesignSpec {
    pub const ALL: [DesignSpec; 3] = [
        DesignSpec::Simple,
        DesignSpec::Adjusted,
        DesignSpec::Interaction,
    ];

    pub fn columns(self) -> usize {
        match self {
            DesignSpec::Simple => 2,
            DesignSpec::Adjusted => 3,
            DesignSpec::Interaction => 4,
        }
    }
}

/// Heteroskedasticity-consistent weighting of squared residuals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HcVariant {
    /// `e_i^2`
    #[default]
    HC0,
    /// `e_i^2 n / (n - k)`
    HC1,
    /// `e_i^2 / (1 - h_ii)`
    HC2,
    /// `e_i^2 / (1 - h_ii)^2`
    HC3,
}

impl HcVariant {
    pub const ALL: [HcVariant; 4] = [
        HcVariant::HC0,
        HcVariant::HC1,
        HcVariant::HC2,
        HcVariant::HC3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HcVariant::HC0 => "HC0",
            HcVariant::HC1 => "HC1",
            HcVariant::HC2 => "HC2",
            HcVariant::HC3 => "HC3",
        }
    }
}

impl std::str::FromStr for HcVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HcVariant::ALL
            .into_iter()
            .find(|h| h.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!("unknown sandwich variant '{s}' (expected HC0, HC1, HC2 or HC3)")
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub spec: DesignSpec,
    pub hc: HcVariant,
    pub coeffs: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ehw_cov: DMatrix<f64>,
    /// `(D'D)^{-1}`, kept for sandwich recomputation.
    pub xtx_inv: DMatrix<f64>,
    pub n: usize,
}

impl RegressionFit {
    /// Homoskedastic OLS covariance `s^2 (D'D)^{-1}`. Diagnostic only: it is not
    /// valid under randomization inference and is never used for tests.
    pub fn classical_cov(&self) -> DMatrix<f64> {
        let k = self.coeffs.len();
        let s2 = numeric::sum(self.residuals.iter().map(|e| e * e)) / (self.n - k) as f64;
        &self.xtx_inv * s2
    }
}

/// Builds the `n x k` design matrix for `spec`.
pub fn build_design(data: &ExperimentData, spec: DesignSpec) -> DMatrix<f64> {
    let x_bar = numeric::mean(data.x());
    let k = spec.columns();
    let (x, t) = (data.x(), data.treated());
    DMatrix::from_fn(data.n(), k, |i, j| {
        let ti = if t[i] { 1.0 } else { 0.0 };
        match j {
            0 => 1.0,
            1 => ti,
            2 => x[i] - x_bar,
            _ => ti * (x[i] - x_bar),
        }
    })
}

/// OLS fit with HC0 sandwich covariance.
pub fn ols_fit(data: &ExperimentData, spec: DesignSpec) -> Result<RegressionFit, RegressionError> {
    ols_fit_with(data, spec, HcVariant::HC0)
}

/// OLS via Householder QR of the design, with the requested sandwich variant.
pub fn ols_fit_with(
    data: &ExperimentData,
    spec: DesignSpec,
    hc: HcVariant,
) -> Result<RegressionFit, RegressionError> {
    let design = build_design(data, spec);
    let k = design.ncols();
    let col_norms: Vec<f64> = (0..k).map(|j| design.column(j).norm()).collect();

    let qr = design.clone().qr();
    let r = qr.r();

    let scaled = DMatrix::from_fn(k, k, |i, j| {
        if col_norms[j] > 0.0 {
            r[(i, j)] / col_norms[j]
        } else {
            0.0
        }
    });
    let sv = scaled.singular_values();
    let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), &s| {
        (hi.max(s), lo.min(s))
    });
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if ratio.is_nan() || ratio < RANK_TOLERANCE {
        return Err(RegressionError::RankDeficient { spec, ratio });
    }

    let mut qty = DVector::from_column_slice(data.y());
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, k).into_owned();
    let beta = r
        .solve_upper_triangular(&rhs)
        .ok_or(RegressionError::RankDeficient { spec, ratio })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(RegressionError::RankDeficient { spec, ratio })?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let fitted = &design * &beta;
    let residuals: Vec<f64> = data
        .y()
        .iter()
        .zip(fitted.iter())
        .map(|(y, f)| y - f)
        .collect();

    let mut fit = RegressionFit {
        spec,
        hc,
        coeffs: beta.iter().copied().collect(),
        residuals,
        ehw_cov: DMatrix::zeros(k, k),
        xtx_inv,
        n: data.n(),
    };
    fit.ehw_cov = ehw_variance(&fit, &design, hc)?;
    Ok(fit)
}

/// Sandwich covariance `(D'D)^{-1} D' diag(w) D (D'D)^{-1}` with weights from `hc`.
pub fn ehw_variance(
    fit: &RegressionFit,
    design: &DMatrix<f64>,
    hc: HcVariant,
) -> Result<DMatrix<f64>, RegressionError> {
    let (n, k) = design.shape();
    if n != fit.residuals.len() {
        return Err(RegressionError::DimensionMismatch {
            design: n,
            fit: fit.residuals.len(),
        });
    }
    let bread = &fit.xtx_inv;
    let dof_scale = match hc {
        HcVariant::HC1 => n as f64 / (n - k) as f64,
        _ => 1.0,
    };
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let row = design.row(i);
        let e2 = fit.residuals[i] * fit.residuals[i];
        let w = match hc {
            HcVariant::HC0 | HcVariant::HC1 => e2 * dof_scale,
            HcVariant::HC2 | HcVariant::HC3 => {
                let h = (row * bread * row.transpose())[(0, 0)];
                let denom = 1.0 - h;
                if hc == HcVariant::HC2 {
                    e2 / denom
                } else {
                    e2 / (denom * denom)
                }
            }
        };
        if w == 0.0 {
            continue;
        }
        for a in 0..k {
            for b in a..k {
                meat[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            meat[(a, b)] = meat[(b, a)];
        }
    }
    let cov = bread * meat * bread;
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Treatment coefficient and its sandwich variance.
pub fn ate_from_fit(fit: &RegressionFit) -> (f64, f64) {
    (
        fit.coeffs[TREATMENT_COLUMN],
        fit.ehw_cov[(TREATMENT_COLUMN, TREATMENT_COLUMN)],
    )
}
