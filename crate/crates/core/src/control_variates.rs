//! Control-variate ATE estimators.
//!
//! Every estimator here has the same shape,
//!
//! ```text
//! delta = [mean_y_t - theta_t (mean_x_t - mean_x)] - [mean_y_c - theta_c (mean_x_c - mean_x)]
//! ```
//!
//! with the covariate centred at the full-sample mean, and differs only in how
//! the coefficients `(theta_t, theta_c)` are estimated:
//!
//! | method            | theta_t = theta_c?                                          |
//! |-------------------|-------------------------------------------------------------|
//! | `Unadjusted`      | yes, both 0 (plain difference in means)                     |
//! | `Shared`          | yes, full-sample `cov(Y, X) / var(X)`                       |
//! | `Pooled`          | yes, `(cov_t/n_t + cov_c/n_c) / (var_t/n_t + var_c/n_c)`    |
//! | `GroupSpecific`   | no, `cov_g / var_g` per arm                                 |
//!
//! The pooled coefficient is the ratio of the covariances of the arm *means*
//! to the variances of the arm means, so each arm is weighted by `1 / n_g`.
//!
//! Design-based variance treats the fitted coefficients as constants. The
//! model-based variance adds `(theta_t - theta_c)^2 var(X) / n`, which is the
//! extra sampling variability of the covariate imbalance when units are drawn
//! from a superpopulation; it vanishes for the shared-coefficient methods.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{ExperimentData, GroupSummary, Moments};

/// Relative tolerance below which a covariate variance counts as zero.
pub const DEGENERATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("covariate variance {denominator:e} is degenerate for {method:?}")]
    DegenerateCovariate {
        method: ThetaMethod,
        denominator: f64,
    },
}

/// How the control-variate coefficient is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMethod {
    Unadjusted,
    Shared,
    Pooled,
    GroupSpecific,
}

impl ThetaMethod {
    pub const ALL: [ThetaMethod; 4] = [
        ThetaMethod::Unadjusted,
        ThetaMethod::Shared,
        ThetaMethod::Pooled,
        ThetaMethod::GroupSpecific,
    ];

    /// Index `k` of the estimator `delta_k`.
    pub fn index(self) -> usize {
        match self {
            ThetaMethod::Unadjusted => 0,
            ThetaMethod::Shared => 1,
            ThetaMethod::Pooled => 2,
            ThetaMethod::GroupSpecific => 3,
        }
    }

    pub fn shares_coefficient(self) -> bool {
        self != ThetaMethod::GroupSpecific
    }
}

/// Per-arm coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta_t: f64,
    pub theta_c: f64,
    pub method: ThetaMethod,
}

impl ThetaEstimate {
    /// Fixed coefficients, e.g. known population values.
    pub fn fixed(theta_t: f64, theta_c: f64) -> Self {
        let method = if theta_t == theta_c {
            if theta_t == 0.0 {
                ThetaMethod::Unadjusted
            } else {
                ThetaMethod::Shared
            }
        } else {
            ThetaMethod::GroupSpecific
        };
        Self {
            theta_t,
            theta_c,
            method,
        }
    }

    fn shared(theta: f64, method: ThetaMethod) -> Self {
        Self {
            theta_t: theta,
            theta_c: theta,
            method,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AteResult {
    pub delta: f64,
    pub var_design: f64,
    pub var_model: f64,
    pub correction: f64,
    pub method: ThetaMethod,
    pub theta: ThetaEstimate,
}

fn check_denominator(
    method: ThetaMethod,
    denominator: f64,
    scale: f64,
) -> Result<(), EstimationError> {
    if denominator <= DEGENERATE_TOLERANCE * scale.max(1.0) {
        Err(EstimationError::DegenerateCovariate {
            method,
            denominator,
        })
    } else {
        Ok(())
    }
}

/// Estimates `(theta_t, theta_c)` for `method`.
pub fn estimate_theta(m: &Moments, method: ThetaMethod) -> Result<ThetaEstimate, EstimationError> {
    match method {
        ThetaMethod::Unadjusted => Ok(ThetaEstimate::shared(0.0, method)),
        ThetaMethod::Shared => {
            check_denominator(method, m.full.var_x, m.full.var_y)?;
            Ok(ThetaEstimate::shared(m.full.cov_yx / m.full.var_x, method))
        }
        ThetaMethod::Pooled => {
            let (t, c) = (&m.treatment, &m.control);
            let (wt, wc) = (1.0 / t.size as f64, 1.0 / c.size as f64);
            let denominator = wt * t.var_x + wc * c.var_x;
            check_denominator(method, denominator / (wt + wc), m.full.var_y)?;
            Ok(ThetaEstimate::shared(
                (wt * t.cov_yx + wc * c.cov_yx) / denominator,
                method,
            ))
        }
        ThetaMethod::GroupSpecific => {
            let slope = |g: &GroupSummary| {
                check_denominator(method, g.var_x, g.var_y).map(|_| g.cov_yx / g.var_x)
            };
            Ok(ThetaEstimate {
                theta_t: slope(&m.treatment)?,
                theta_c: slope(&m.control)?,
                method,
            })
        }
    }
}

/// Adjusted difference in means with the covariate centred at the full-sample mean.
pub fn estimate_delta(m: &Moments, theta: &ThetaEstimate) -> f64 {
    let x_bar = m.full.mean_x;
    let adjusted_t = m.treatment.mean_y - theta.theta_t * (m.treatment.mean_x - x_bar);
    let adjusted_c = m.control.mean_y - theta.theta_c * (m.control.mean_x - x_bar);
    adjusted_t - adjusted_c
}

fn arm_variance(g: &GroupSummary, theta: f64) -> f64 {
    (g.var_y - 2.0 * theta * g.cov_yx + theta * theta * g.var_x) / g.size as f64
}

/// Design-based variance, treating the coefficients as constants:
/// `s_t^2(theta_t)/n_t + s_c^2(theta_c)/n_c`.
pub fn variance_design(m: &Moments, theta: &ThetaEstimate) -> f64 {
    let v = arm_variance(&m.treatment, theta.theta_t) + arm_variance(&m.control, theta.theta_c);
    // The expanded quadratic can dip a few ulps below zero for exact fits.
    v.max(0.0)
}

/// Model-based variance and the correction term that separates it from the
/// design-based one. Returns `(var_model, correction)`.
pub fn variance_model(m: &Moments, theta: &ThetaEstimate) -> (f64, f64) {
    let gap = theta.theta_t - theta.theta_c;
    let correction = gap * gap * m.full.var_x / m.n as f64;
    (variance_design(m, theta) + correction, correction)
}

/// Estimate plus both variances from precomputed moments.
pub fn analyze_moments(m: &Moments, method: ThetaMethod) -> Result<AteResult, EstimationError> {
    let theta = estimate_theta(m, method)?;
    let delta = estimate_delta(m, &theta);
    let var_design = variance_design(m, &theta);
    let (var_model, correction) = variance_model(m, &theta);
    Ok(AteResult {
        delta,
        var_design,
        var_model,
        correction,
        method,
        theta,
    })
}

pub fn analyze(data: &ExperimentData, method: ThetaMethod) -> Result<AteResult, EstimationError> {
    analyze_moments(&data.moments(), method)
}

/// Superpopulation parameters used by the probability-limit formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticParams {
    pub p_t: f64,
    pub theta_t: f64,
    pub theta_c: f64,
    pub var_yt: f64,
    pub var_yc: f64,
    pub var_x: f64,
}

impl AsymptoticParams {
    fn p_c(&self) -> f64 {
        1.0 - self.p_t
    }

    pub fn is_valid(&self) -> bool {
        self.p_t > 0.0
            && self.p_t < 1.0
            && self.var_yt >= 0.0
            && self.var_yc >= 0.0
            && self.var_x >= 0.0
    }
}

/// Probability limits of `(theta_t, theta_c)` for each method.
pub fn plim_theta(p: &AsymptoticParams, method: ThetaMethod) -> (f64, f64) {
    let (p_t, p_c) = (p.p_t, p.p_c());
    match method {
        ThetaMethod::Unadjusted => (0.0, 0.0),
        ThetaMethod::Shared => {
            let th = p_t * p.theta_t + p_c * p.theta_c;
            (th, th)
        }
        ThetaMethod::Pooled => {
            let th = p_t * p.theta_c + p_c * p.theta_t;
            (th, th)
        }
        ThetaMethod::GroupSpecific => (p.theta_t, p.theta_c),
    }
}

/// Limits of `n var(delta)` (true, under superpopulation sampling) and of
/// `n var_hat(delta)` (the design-based estimator). Returns `(true, estimated)`.
pub fn plim_variances(p: &AsymptoticParams, method: ThetaMethod) -> (f64, f64) {
    let (p_t, p_c) = (p.p_t, p.p_c());
    let base = p.var_yt / p_t + p.var_yc / p_c;
    let (tt, tc) = (p.theta_t, p.theta_c);
    match method {
        ThetaMethod::GroupSpecific => {
            let truth =
                base - (p_c / p_t * tt * tt + 2.0 * tt * tc + p_t / p_c * tc * tc) * p.var_x;
            let estimated = base - (tt * tt / p_t + tc * tc / p_c) * p.var_x;
            (truth, estimated)
        }
        _ => {
            let (k, _) = plim_theta(p, method);
            let v = base - ((2.0 * k * tt - k * k) / p_t + (2.0 * k * tc - k * k) / p_c) * p.var_x;
            (v, v)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn data(y: &[f64], x: &[f64], t: &[f64]) -> ExperimentData {
        ExperimentData::new(y.to_vec(), x.to_vec(), t.to_vec()).unwrap()
    }

    fn symmetric() -> ExperimentData {
        data(
            &[1.0, 2.0, 3.0, -4.0, -5.0, -6.0],
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        )
    }

    fn exact_line() -> ExperimentData {
        let x = [0.5, -1.0, 2.0, 3.5, -0.25, 1.0, 4.0, -2.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 2.0).collect();
        data(&y, &x, &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    }

    /// Literal residual-based form: s^2 of W_i = Y_i - theta_g (X_i - X_bar) per arm.
    fn residual_variance(d: &ExperimentData, theta: &ThetaEstimate) -> f64 {
        let x_bar = d.x().iter().sum::<f64>() / d.n() as f64;
        let mut total = 0.0;
        for (arm, th) in [(true, theta.theta_t), (false, theta.theta_c)] {
            let w: Vec<f64> = d
                .y()
                .iter()
                .zip(d.x())
                .zip(d.treated())
                .filter(|(_, &t)| t == arm)
                .map(|((y, x), _)| y - th * (x - x_bar))
                .collect();
            let n = w.len() as f64;
            let mean = w.iter().sum::<f64>() / n;
            let s2 = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            total += s2 / n;
        }
        total
    }

    #[test]
    fn exact_line_gives_theta_two_everywhere() {
        let m = exact_line().moments();
        for method in [
            ThetaMethod::Shared,
            ThetaMethod::Pooled,
            ThetaMethod::GroupSpecific,
        ] {
            let th = estimate_theta(&m, method).unwrap();
            assert_relative_eq!(th.theta_t, 2.0, max_relative = 1e-12);
            assert_relative_eq!(th.theta_c, 2.0, max_relative = 1e-12);
        }
        let none = estimate_theta(&m, ThetaMethod::Unadjusted).unwrap();
        assert_eq!((none.theta_t, none.theta_c), (0.0, 0.0));
    }

    #[test]
    fn symmetric_cancellation() {
        let m = symmetric().moments();
        let g = estimate_theta(&m, ThetaMethod::GroupSpecific).unwrap();
        assert_relative_eq!(g.theta_t, 1.0, max_relative = 1e-14);
        assert_relative_eq!(g.theta_c, -1.0, max_relative = 1e-14);
        let p = estimate_theta(&m, ThetaMethod::Pooled).unwrap();
        assert_abs_diff_eq!(p.theta_t, 0.0, epsilon = 1e-15);
        // Full-sample oracle: sum (x - 3.5)(y + 1.5) / sum (x - 3.5)^2 = -31.5 / 17.5.
        let s = estimate_theta(&m, ThetaMethod::Shared).unwrap();
        assert_relative_eq!(s.theta_t, -1.8, max_relative = 1e-14);
        assert_eq!(s.theta_t, s.theta_c);
    }

    #[test]
    fn pooled_weights_arms_by_inverse_size() {
        // treatment: 2 units, control: 4 units, different slopes
        let d = data(
            &[0.0, 2.0, 0.0, 1.0, 2.0, 3.0],
            &[0.0, 1.0, 0.0, 1.0, 2.0, 3.0],
            &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        );
        let m = d.moments();
        // var_t = 0.5, cov_t = 1.0; var_c = cov_c = 5/3.
        let expected = (1.0 / 2.0 + (5.0 / 3.0) / 4.0) / (0.5 / 2.0 + (5.0 / 3.0) / 4.0);
        let p = estimate_theta(&m, ThetaMethod::Pooled).unwrap();
        assert_relative_eq!(p.theta_t, expected, max_relative = 1e-14);
    }

    #[test]
    fn degenerate_covariate_is_rejected() {
        let d = data(
            &[1.0, 2.0, 3.0, 4.0],
            &[1.0, 1.0, 1.0, 1.0],
            &[1.0, 1.0, 0.0, 0.0],
        );
        let m = d.moments();
        for method in [
            ThetaMethod::Shared,
            ThetaMethod::Pooled,
            ThetaMethod::GroupSpecific,
        ] {
            assert!(matches!(
                estimate_theta(&m, method),
                Err(EstimationError::DegenerateCovariate { .. })
            ));
        }
        // Constant covariate in one arm only breaks the group-specific slope.
        let d = data(
            &[1.0, 2.0, 3.0, 4.0],
            &[1.0, 1.0, 0.0, 2.0],
            &[1.0, 1.0, 0.0, 0.0],
        );
        let m = d.moments();
        assert!(estimate_theta(&m, ThetaMethod::GroupSpecific).is_err());
        assert!(estimate_theta(&m, ThetaMethod::Pooled).is_ok());
        assert!(analyze(&d, ThetaMethod::Unadjusted).is_ok());
    }

    #[test]
    fn delta_examples() {
        let d = data(
            &[1.0, 3.0, 5.0, 7.0],
            &[0.0, 1.0, 0.0, 1.0],
            &[1.0, 1.0, 0.0, 0.0],
        );
        assert_eq!(
            estimate_delta(&d.moments(), &ThetaEstimate::fixed(0.0, 0.0)),
            -4.0
        );

        let m = exact_line().moments();
        assert_abs_diff_eq!(
            estimate_delta(&m, &ThetaEstimate::fixed(2.0, 2.0)),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn design_variance_examples() {
        let d = symmetric();
        let m = d.moments();
        let v = variance_design(&m, &ThetaEstimate::fixed(0.0, 0.0));
        assert_relative_eq!(v, 1.0 / 3.0 + 1.0 / 3.0, max_relative = 1e-14);

        let m = exact_line().moments();
        assert_abs_diff_eq!(
            variance_design(&m, &ThetaEstimate::fixed(2.0, 2.0)),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn expanded_and_residual_forms_agree() {
        let d = data(
            &[2.1, -0.4, 3.3, 1.7, 0.9, 2.8, -1.2, 0.5],
            &[1.0, -1.5, 2.2, 0.3, 0.7, 1.9, -0.8, 0.1],
            &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        );
        let m = d.moments();
        for method in ThetaMethod::ALL {
            let th = estimate_theta(&m, method).unwrap();
            assert_relative_eq!(
                variance_design(&m, &th),
                residual_variance(&d, &th),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn literal_centring_without_theta_differs_unless_theta_is_one() {
        // The single-line display centres the residual at mean_y - (mean_x_g - mean_x)
        // with no theta multiplier; a constant shift does not change the sum of squares
        // about the arm mean only when it *is* that mean, i.e. when theta == 1.
        let d = data(
            &[2.1, -0.4, 3.3, 1.7, 0.9, 2.8, -1.2, 0.5],
            &[1.0, -1.5, 2.2, 0.3, 0.7, 1.9, -0.8, 0.1],
            &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        );
        let literal = |th: f64| {
            let x_bar = d.x().iter().sum::<f64>() / d.n() as f64;
            let mut total = 0.0;
            for arm in [true, false] {
                let rows: Vec<(f64, f64)> = d
                    .y()
                    .iter()
                    .zip(d.x())
                    .zip(d.treated())
                    .filter(|(_, &t)| t == arm)
                    .map(|((&y, &x), _)| (y, x))
                    .collect();
                let n = rows.len() as f64;
                let my = rows.iter().map(|r| r.0).sum::<f64>() / n;
                let mx = rows.iter().map(|r| r.1).sum::<f64>() / n;
                let centre = my - (mx - x_bar);
                let ss: f64 = rows
                    .iter()
                    .map(|(y, x)| (y - th * (x - x_bar) - centre).powi(2))
                    .sum();
                total += ss / (n * (n - 1.0));
            }
            total
        };
        let m = d.moments();
        assert_relative_eq!(
            literal(1.0),
            variance_design(&m, &ThetaEstimate::fixed(1.0, 1.0)),
            max_relative = 1e-12
        );
        let th = ThetaEstimate::fixed(0.3, 0.3);
        assert!((literal(0.3) - variance_design(&m, &th)).abs() > 1e-3);
    }

    #[test]
    fn correction_examples() {
        let d = symmetric();
        let m = d.moments();
        let (vm, corr) = variance_model(&m, &ThetaEstimate::fixed(0.7, 0.7));
        assert_eq!(corr, 0.0);
        assert_eq!(vm, variance_design(&m, &ThetaEstimate::fixed(0.7, 0.7)));

        // theta gap 1, var(X) = 2, n = 1000
        let mut m = m;
        m.full.var_x = 2.0;
        m.n = 1000;
        let (_, corr) = variance_model(&m, &ThetaEstimate::fixed(1.5, 0.5));
        assert_relative_eq!(corr, 0.002, max_relative = 1e-14);
    }

    #[test]
    fn analyze_composes_operations() {
        let d = data(
            &[1.0, 3.0, 5.0, 7.0, 2.0, 9.0],
            &[0.0, 1.0, 0.0, 1.0, 2.0, 0.5],
            &[1.0, 1.0, 0.0, 0.0, 1.0, 0.0],
        );
        let r = analyze(&d, ThetaMethod::Unadjusted).unwrap();
        let (t, c) = (
            d.summarize_group(crate::Group::Treatment),
            d.summarize_group(crate::Group::Control),
        );
        assert_relative_eq!(r.delta, t.mean_y - c.mean_y, max_relative = 1e-14);
        assert_relative_eq!(
            r.var_design,
            t.var_y / 3.0 + c.var_y / 3.0,
            max_relative = 1e-14
        );
        assert_eq!(r.correction, 0.0);
        for method in ThetaMethod::ALL {
            let r = analyze(&d, method).unwrap();
            assert_eq!(r.var_model, r.var_design + r.correction);
            assert_eq!(r.method, method);
            if method.shares_coefficient() {
                assert_eq!(r.theta.theta_t, r.theta.theta_c);
                assert_eq!(r.correction, 0.0);
            }
        }
    }

    #[test]
    fn plim_theta_examples() {
        let p = AsymptoticParams {
            p_t: 0.5,
            theta_t: 1.5,
            theta_c: 1.0,
            var_yt: 5.5,
            var_yc: 3.0,
            var_x: 2.0,
        };
        assert_eq!(plim_theta(&p, ThetaMethod::Shared), (1.25, 1.25));
        assert_eq!(plim_theta(&p, ThetaMethod::GroupSpecific), (1.5, 1.0));
        assert_eq!(plim_theta(&p, ThetaMethod::Unadjusted), (0.0, 0.0));
        let p = AsymptoticParams { p_t: 0.4, ..p };
        let (a, b) = plim_theta(&p, ThetaMethod::Pooled);
        assert_relative_eq!(a, 1.3, max_relative = 1e-15);
        assert_eq!(a, b);
    }

    #[test]
    fn plim_variances_hte_dgp() {
        let p = AsymptoticParams {
            p_t: 0.5,
            theta_t: 1.5,
            theta_c: 1.0,
            var_yt: 5.5,
            var_yc: 3.0,
            var_x: 2.0,
        };
        let (truth, est) = plim_variances(&p, ThetaMethod::GroupSpecific);
        assert_relative_eq!(truth, 4.5, max_relative = 1e-14);
        assert_relative_eq!(est, 4.0, max_relative = 1e-14);
        let (truth, est) = plim_variances(&p, ThetaMethod::Unadjusted);
        assert_eq!(truth, est);
        assert_relative_eq!(truth, 5.5 / 0.5 + 3.0 / 0.5, max_relative = 1e-15);
    }

    #[test]
    fn shared_coefficient_can_increase_variance() {
        // |p_t th_t + p_c th_c| > 2 |p_c th_t + p_t th_c| > 0
        let p = AsymptoticParams {
            p_t: 0.8,
            theta_t: 1.0,
            theta_c: -0.2,
            var_yt: 3.0,
            var_yc: 3.0,
            var_x: 2.0,
        };
        let shared = plim_variances(&p, ThetaMethod::Shared).1;
        let none = plim_variances(&p, ThetaMethod::Unadjusted).1;
        assert!(shared > none, "{shared} <= {none}");
        // Boundary |theta_1| == 2 |theta_2|: no change either way.
        let p = AsymptoticParams {
            p_t: 0.8,
            theta_t: 1.0,
            theta_c: 2.0 / 7.0,
            ..p
        };
        let shared = plim_variances(&p, ThetaMethod::Shared).1;
        let none = plim_variances(&p, ThetaMethod::Unadjusted).1;
        assert_relative_eq!(shared, none, max_relative = 1e-12);
        // Inside the favourable region the shared coefficient helps.
        let p = AsymptoticParams { theta_c: 1.0, ..p };
        assert!(
            plim_variances(&p, ThetaMethod::Shared).1
                < plim_variances(&p, ThetaMethod::Unadjusted).1
        );
    }

    fn params() -> impl Strategy<Value = AsymptoticParams> {
        (
            0.05f64..0.95,
            -3.0f64..3.0,
            -3.0f64..3.0,
            0.0f64..10.0,
            0.0f64..10.0,
            0.01f64..5.0,
        )
            .prop_map(
                |(p_t, theta_t, theta_c, var_yt, var_yc, var_x)| AsymptoticParams {
                    p_t,
                    theta_t,
                    theta_c,
                    var_yt,
                    var_yc,
                    var_x,
                },
            )
    }

    proptest! {
        #[test]
        fn plim_gap_is_theta_gap_squared(p in params()) {
            for method in ThetaMethod::ALL {
                let (truth, est) = plim_variances(&p, method);
                let expected = if method == ThetaMethod::GroupSpecific {
                    (p.theta_t - p.theta_c).powi(2) * p.var_x
                } else {
                    0.0
                };
                prop_assert!((truth - est - expected).abs() <= 1e-10 * (1.0 + truth.abs()));
            }
        }

        #[test]
        fn corrected_group_specific_matches_pooled_in_the_limit(p in params()) {
            let (_, est3) = plim_variances(&p, ThetaMethod::GroupSpecific);
            let corrected = est3 + (p.theta_t - p.theta_c).powi(2) * p.var_x;
            let (_, est2) = plim_variances(&p, ThetaMethod::Pooled);
            prop_assert!((corrected - est2).abs() <= 1e-9 * (1.0 + est2.abs()));
        }

        #[test]
        fn group_specific_design_variance_is_minimal(
            y in prop::collection::vec(-50.0f64..50.0, 12),
            x in prop::collection::vec(-50.0f64..50.0, 12),
        ) {
            let t: Vec<f64> = (0..12).map(|i| (i % 3 == 0) as u8 as f64).collect();
            let d = ExperimentData::new(y, x, t).unwrap();
            let m = d.moments();
            if let Ok(th3) = estimate_theta(&m, ThetaMethod::GroupSpecific) {
                let v3 = variance_design(&m, &th3);
                for method in [ThetaMethod::Unadjusted, ThetaMethod::Shared, ThetaMethod::Pooled] {
                    if let Ok(th) = estimate_theta(&m, method) {
                        prop_assert!(v3 <= variance_design(&m, &th) * (1.0 + 1e-12) + 1e-12);
                    }
                }
                let resid = residual_variance(&d, &th3);
                prop_assert!((v3 - resid).abs() <= 1e-10 * resid.max(1e-12));
                let (vm, corr) = variance_model(&m, &th3);
                prop_assert!(corr >= 0.0);
                prop_assert_eq!(vm, v3 + corr);
            }
        }
    }
}
