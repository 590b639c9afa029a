//! Variance-reduced treatment-effect estimation for randomized experiments.
//!
//! Control-variate estimators of the average treatment effect, their
//! regression-adjustment counterparts, design- and model-based inference, and a
//! Monte Carlo engine for studying them.

pub mod control_variates;
pub mod data_model;
pub mod inference;
pub mod numeric;
pub mod regression;
pub mod simulation;

pub use control_variates::{
    analyze, plim_theta, plim_variances, AsymptoticParams, AteResult, EstimationError,
    ThetaEstimate, ThetaMethod,
};
pub use data_model::{DataError, ExperimentData, Group, Moments};
pub use inference::{
    compare_methods, compare_methods_with, estimate, ztest, ComparisonRow, ComparisonTable,
    Estimate, Estimator, EstimatorError, Framework, InferenceError, TestResult,
};
pub use regression::{
    ate_from_fit, build_design, ehw_variance, ols_fit, ols_fit_with, DesignSpec, HcVariant,
    RegressionError, RegressionFit,
};
pub use simulation::{
    assign, bootstrap_superpopulation, convergence_scan, generate_population,
    population_quantities, run_finite, run_infinite, BootstrapDesign, DgpConfig, PopulationTable,
    SimReport, SimResult, SimSettings, SimulationError, SourceTable,
};
