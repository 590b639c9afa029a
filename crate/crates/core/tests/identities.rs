//! Exact algebraic links between the control-variate and regression estimators,
//! checked against an independent per-arm least-squares oracle.

mod common;

use abvr_core::control_variates::{analyze, ThetaMethod};
use abvr_core::regression::{ate_from_fit, ols_fit, DesignSpec};
use abvr_core::ExperimentData;
use proptest::prelude::*;

/// Intercept and slope of `y` on `x - center` within one arm, from closed-form
/// simple regression.
fn arm_line(data: &ExperimentData, treated: bool, center: f64) -> (f64, f64) {
    let rows: Vec<(f64, f64)> = data
        .y()
        .iter()
        .zip(data.x())
        .zip(data.treated())
        .filter(|(_, &t)| t == treated)
        .map(|((&y, &x), _)| (y, x - center))
        .collect();
    let m = rows.len() as f64;
    let my = rows.iter().map(|r| r.0).sum::<f64>() / m;
    let mx = rows.iter().map(|r| r.1).sum::<f64>() / m;
    let sxy: f64 = rows.iter().map(|r| (r.0 - my) * (r.1 - mx)).sum();
    let sxx: f64 = rows.iter().map(|r| (r.1 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn identities_across_sizes() {
    for (k, &n) in [10usize, 100, 1000, 10_000].iter().enumerate() {
        for rep in 0..25u64 {
            let data = common::random_linear(n, 1000 * k as u64 + rep);
            let d0 = analyze(&data, ThetaMethod::Unadjusted).unwrap().delta;
            let d3 = analyze(&data, ThetaMethod::GroupSpecific).unwrap().delta;
            let sr = ate_from_fit(&ols_fit(&data, DesignSpec::Simple).unwrap()).0;
            let ir = ate_from_fit(&ols_fit(&data, DesignSpec::Interaction).unwrap()).0;
            assert!(rel_close(d0, sr, 1e-8), "n={n} rep={rep}: {d0} vs {sr}");
            assert!(rel_close(d3, ir, 1e-8), "n={n} rep={rep}: {d3} vs {ir}");

            let x_bar = data.x().iter().sum::<f64>() / n as f64;
            let (it, _) = arm_line(&data, true, x_bar);
            let (ic, _) = arm_line(&data, false, x_bar);
            assert!(rel_close(d3, it - ic, 1e-8), "oracle n={n} rep={rep}");
        }
    }
}

#[test]
fn interaction_slopes_are_arm_slopes() {
    let data = common::random_linear(500, 77);
    let fit = ols_fit(&data, DesignSpec::Interaction).unwrap();
    let x_bar = data.x().iter().sum::<f64>() / 500.0;
    let (_, st) = arm_line(&data, true, x_bar);
    let (_, sc) = arm_line(&data, false, x_bar);
    assert!(rel_close(fit.coeffs[2], sc, 1e-10));
    assert!(rel_close(fit.coeffs[2] + fit.coeffs[3], st, 1e-10));
    let theta =
        abvr_core::control_variates::estimate_theta(&data.moments(), ThetaMethod::GroupSpecific)
            .unwrap();
    assert!(rel_close(theta.theta_t, st, 1e-10));
    assert!(rel_close(theta.theta_c, sc, 1e-10));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_identities_hold(n in 6usize..400, seed in any::<u64>()) {
        let data = common::random_linear(n, seed);
        let d0 = analyze(&data, ThetaMethod::Unadjusted).unwrap().delta;
        let d3 = analyze(&data, ThetaMethod::GroupSpecific).unwrap().delta;
        let sr = ate_from_fit(&ols_fit(&data, DesignSpec::Simple).unwrap()).0;
        let ir = ate_from_fit(&ols_fit(&data, DesignSpec::Interaction).unwrap()).0;
        prop_assert!(rel_close(d0, sr, 1e-8));
        prop_assert!(rel_close(d3, ir, 1e-8));
    }

    #[test]
    fn identities_survive_affine_covariate_change(n in 8usize..200, seed in any::<u64>(), a in -50.0f64..50.0, b in 0.05f64..20.0) {
        let data = common::random_linear(n, seed);
        let shifted: Vec<f64> = data.x().iter().map(|x| a + b * x).collect();
        let other = ExperimentData::from_assignment(data.y().to_vec(), shifted, data.treated().to_vec()).unwrap();
        let d3 = analyze(&data, ThetaMethod::GroupSpecific).unwrap().delta;
        let d3b = analyze(&other, ThetaMethod::GroupSpecific).unwrap().delta;
        prop_assert!(rel_close(d3, d3b, 1e-7));
    }
}
