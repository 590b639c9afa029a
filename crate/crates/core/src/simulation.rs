//! Monte Carlo engine: populations from a linear data-generating process,
//! randomized assignment, finite- and infinite-population replication studies,
//! estimator convergence scans, and a superpopulation resampling harness.
//!
//! Replication `r` draws from ChaCha8 stream `r + 1` of the run seed (stream 0
//! is reserved for the fixed population of a finite-population study), so every
//! output is a pure function of `(config, seed)` regardless of how rayon
//! schedules the work. Per-replication outcomes are collected in index order
//! and reduced sequentially.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_variates::AsymptoticParams;
use crate::data_model::{DataError, ExperimentData};
use crate::inference::{self, Estimate, Estimator, Framework};
use crate::numeric::{self, CompensatedSum};
use crate::regression::HcVariant;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("allocation p_t = {p_t} of n = {n} leaves a group with fewer than 2 units")]
    InfeasibleAllocation { n: usize, p_t: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn default_x_var() -> f64 {
    2.0
}

fn default_noise_var() -> f64 {
    1.0
}

fn default_intercept() -> f64 {
    1.0
}

/// Linear potential-outcome model
///
/// ```text
/// X   ~ N(0, x_var)
/// Y_t = intercept + ate + (1 + hte) X + e_t
/// Y_c = intercept + X + e_c,            e_t, e_c ~ N(0, noise_var) independent
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub p_t: f64,
    pub ate: f64,
    pub hte: f64,
    #[serde(default = "default_x_var")]
    pub x_var: f64,
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    #[serde(default = "default_intercept")]
    pub intercept: f64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: 3000,
            p_t: 0.5,
            ate: 0.0,
            hte: 0.0,
            x_var: default_x_var(),
            noise_var: default_noise_var(),
            intercept: default_intercept(),
        }
    }
}

/// Number of treated units for a fixed-count design.
pub fn treated_count(n: usize, p_t: f64) -> Result<usize, SimulationError> {
    if !(p_t > 0.0 && p_t < 1.0) {
        return Err(SimulationError::InfeasibleAllocation { n, p_t });
    }
    let n_t = (p_t * n as f64).round() as usize;
    if n_t < 2 || n.saturating_sub(n_t) < 2 {
        return Err(SimulationError::InfeasibleAllocation { n, p_t });
    }
    Ok(n_t)
}

impl DgpConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        treated_count(self.n, self.p_t)?;
        let finite = [
            self.ate,
            self.hte,
            self.x_var,
            self.noise_var,
            self.intercept,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(SimulationError::InvalidConfig(
                "non-finite parameter".into(),
            ));
        }
        if self.x_var <= 0.0 || self.noise_var < 0.0 {
            return Err(SimulationError::InvalidConfig(format!(
                "x_var must be > 0 and noise_var >= 0 (got {}, {})",
                self.x_var, self.noise_var
            )));
        }
        Ok(())
    }

    /// Superpopulation moments implied by the model.
    pub fn asymptotic_params(&self) -> AsymptoticParams {
        let slope_t = 1.0 + self.hte;
        AsymptoticParams {
            p_t: self.p_t,
            theta_t: slope_t,
            theta_c: 1.0,
            var_yt: slope_t * slope_t * self.x_var + self.noise_var,
            var_yc: self.x_var + self.noise_var,
            var_x: self.x_var,
        }
    }
}

/// Both potential outcomes and the covariate for every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTable {
    pub y_t: Vec<f64>,
    pub y_c: Vec<f64>,
    pub x: Vec<f64>,
}

impl PopulationTable {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Finite-population ATE `mean(y_t) - mean(y_c)`.
    pub fn ate(&self) -> f64 {
        numeric::mean(&self.y_t) - numeric::mean(&self.y_c)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_population<R: Rng>(cfg: &DgpConfig, rng: &mut R) -> PopulationTable {
    let (sx, se) = (cfg.x_var.sqrt(), cfg.noise_var.sqrt());
    let n = cfg.n;
    let (mut y_t, mut y_c, mut x) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        let xi = sx * z;
        let et: f64 = StandardNormal.sample(rng);
        let ec: f64 = StandardNormal.sample(rng);
        x.push(xi);
        y_t.push(cfg.intercept + cfg.ate + (1.0 + cfg.hte) * xi + se * et);
        y_c.push(cfg.intercept + xi + se * ec);
    }
    PopulationTable { y_t, y_c, x }
}

/// Draws a population; deterministic in `seed`.
pub fn generate_population(cfg: &DgpConfig, seed: u64) -> Result<PopulationTable, SimulationError> {
    cfg.validate()?;
    Ok(draw_population(cfg, &mut rng_for(seed, 0)))
}

fn assign_with<R: Rng>(
    pop: &PopulationTable,
    n_t: usize,
    rng: &mut R,
) -> Result<ExperimentData, SimulationError> {
    let n = pop.n();
    let mut treated = vec![false; n];
    for i in index::sample(rng, n, n_t) {
        treated[i] = true;
    }
    let y = treated
        .iter()
        .enumerate()
        .map(|(i, &t)| if t { pop.y_t[i] } else { pop.y_c[i] })
        .collect();
    Ok(ExperimentData::from_assignment(y, pop.x.clone(), treated)?)
}

/// Complete randomization: exactly `round(p_t n)` units treated, chosen
/// uniformly without replacement.
pub fn assign(
    pop: &PopulationTable,
    p_t: f64,
    seed: u64,
) -> Result<ExperimentData, SimulationError> {
    let n_t = treated_count(pop.n(), p_t)?;
    assign_with(pop, n_t, &mut rng_for(seed, 0))
}

/// Finite-population quantities of the transformed outcomes
/// `W(theta) = Y - theta (X - mean(X))`, with `(n - 1)` divisors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationQuantities {
    pub delta_s: f64,
    pub mean_wt: f64,
    pub mean_wc: f64,
    pub s2_t: f64,
    pub s2_c: f64,
    pub s2_delta: f64,
    pub n: usize,
}

impl PopulationQuantities {
    /// Exact randomization variance of the difference in transformed means
    /// under complete randomization with `n_t` treated units.
    pub fn randomization_variance(&self, n_t: usize) -> f64 {
        let n_c = self.n - n_t;
        self.s2_t / n_t as f64 + self.s2_c / n_c as f64 - self.s2_delta / self.n as f64
    }
}

pub fn population_quantities(pop: &PopulationTable, theta: f64) -> PopulationQuantities {
    let n = pop.n();
    let x_bar = numeric::mean(&pop.x);
    let wt: Vec<f64> = pop
        .y_t
        .iter()
        .zip(&pop.x)
        .map(|(y, x)| y - theta * (x - x_bar))
        .collect();
    let wc: Vec<f64> = pop
        .y_c
        .iter()
        .zip(&pop.x)
        .map(|(y, x)| y - theta * (x - x_bar))
        .collect();
    let diff: Vec<f64> = wt.iter().zip(&wc).map(|(a, b)| a - b).collect();
    let (mean_wt, mean_wc) = (numeric::mean(&wt), numeric::mean(&wc));
    PopulationQuantities {
        delta_s: mean_wt - mean_wc,
        mean_wt,
        mean_wc,
        s2_t: numeric::sample_variance(&wt),
        s2_c: numeric::sample_variance(&wc),
        s2_delta: numeric::sample_variance(&diff),
        n,
    }
}

/// Settings shared by every replication study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub reps: usize,
    pub methods: Vec<Estimator>,
    pub alpha: f64,
    #[serde(default)]
    pub hc: HcVariant,
}

impl SimSettings {
    pub fn new(reps: usize, methods: &[Estimator], alpha: f64) -> Self {
        Self {
            reps,
            methods: methods.to_vec(),
            alpha,
            hc: HcVariant::HC0,
        }
    }

    fn validate(&self) -> Result<(), SimulationError> {
        if self.reps == 0 {
            return Err(SimulationError::InvalidConfig(
                "reps must be at least 1".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(SimulationError::InvalidConfig("no methods selected".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SimulationError::InvalidConfig(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Aggregate over replications for one estimator and one variance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub method: Estimator,
    /// Which variance estimator drove the test: design-based or model-based.
    pub variance: Framework,
    pub rejection_rate: f64,
    pub coverage: f64,
    pub mean_estimate: f64,
    pub empirical_variance: f64,
    pub mean_var_estimate: f64,
    /// Mean of the coverage target over successful replications.
    pub target: f64,
    pub reps: usize,
    pub failed_reps: usize,
    pub seed: u64,
}

/// Results of one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub framework: Framework,
    pub seed: u64,
    pub results: Vec<SimResult>,
}

impl SimReport {
    pub fn get(&self, method: Estimator, variance: Framework) -> Option<&SimResult> {
        self.results
            .iter()
            .find(|r| r.method == method && r.variance == variance)
    }

    /// The result using the study's own variance: design-based for a finite
    /// population, model-based for an infinite one.
    pub fn primary(&self, method: Estimator) -> Option<&SimResult> {
        self.get(method, self.framework)
    }
}

struct RepOutcome {
    estimates: Vec<Option<Estimate>>,
    target: f64,
}

fn estimate_methods(data: &ExperimentData, settings: &SimSettings) -> Vec<Option<Estimate>> {
    let moments = data.moments();
    settings
        .methods
        .iter()
        .map(|&m| inference::estimate(data, &moments, m, settings.hc).ok())
        .collect()
}

fn run_reps<F>(reps: usize, seed: u64, body: F) -> Result<Vec<RepOutcome>, SimulationError>
where
    F: Fn(&mut ChaCha8Rng) -> Result<RepOutcome, SimulationError> + Sync,
{
    (0..reps as u64)
        .into_par_iter()
        .map(|r| body(&mut rng_for(seed, r + 1)))
        .collect()
}

fn aggregate(
    outcomes: &[RepOutcome],
    settings: &SimSettings,
    framework: Framework,
    seed: u64,
) -> SimReport {
    let z = inference::critical_value(settings.alpha);
    let mut results = Vec::with_capacity(settings.methods.len() * 2);
    for (k, &method) in settings.methods.iter().enumerate() {
        let ok: Vec<(Estimate, f64)> = outcomes
            .iter()
            .filter_map(|o| o.estimates[k].map(|e| (e, o.target)))
            .collect();
        let failed = outcomes.len() - ok.len();
        let estimates: Vec<f64> = ok.iter().map(|(e, _)| e.estimate).collect();
        let (mean_estimate, empirical_variance) = if ok.is_empty() {
            (f64::NAN, f64::NAN)
        } else if ok.len() == 1 {
            (estimates[0], 0.0)
        } else {
            (
                numeric::mean(&estimates),
                numeric::sample_variance(&estimates),
            )
        };
        let target = numeric::mean(&ok.iter().map(|(_, t)| *t).collect::<Vec<_>>());
        for variance in Framework::ALL {
            let (mut rejected, mut covered) = (0usize, 0usize);
            let mut var_sum = CompensatedSum::new();
            for (e, t) in &ok {
                let v = e.variance(variance);
                var_sum.add(v);
                let half = z * v.sqrt();
                if e.estimate.abs() > half {
                    rejected += 1;
                }
                if (e.estimate - t).abs() <= half {
                    covered += 1;
                }
            }
            let denom = ok.len() as f64;
            results.push(SimResult {
                method,
                variance,
                rejection_rate: rejected as f64 / denom,
                coverage: covered as f64 / denom,
                mean_estimate,
                empirical_variance,
                mean_var_estimate: var_sum.total() / denom,
                target,
                reps: ok.len(),
                failed_reps: failed,
                seed,
            });
        }
    }
    SimReport {
        framework,
        seed,
        results,
    }
}

/// Fixed population, fresh assignment per replication. Coverage targets the
/// finite-population ATE; rejection is of `H0: ATE = 0`.
pub fn run_finite(
    cfg: &DgpConfig,
    settings: &SimSettings,
    seed: u64,
) -> Result<SimReport, SimulationError> {
    settings.validate()?;
    let pop = generate_population(cfg, seed)?;
    let n_t = treated_count(cfg.n, cfg.p_t)?;
    let target = pop.ate();
    let outcomes = run_reps(settings.reps, seed, |rng| {
        let data = assign_with(&pop, n_t, rng)?;
        Ok(RepOutcome {
            estimates: estimate_methods(&data, settings),
            target,
        })
    })?;
    Ok(aggregate(&outcomes, settings, Framework::DesignBased, seed))
}

/// Fresh population and assignment per replication. Coverage targets the
/// superpopulation ATE `cfg.ate`.
pub fn run_infinite(
    cfg: &DgpConfig,
    settings: &SimSettings,
    seed: u64,
) -> Result<SimReport, SimulationError> {
    settings.validate()?;
    cfg.validate()?;
    let n_t = treated_count(cfg.n, cfg.p_t)?;
    let outcomes = run_reps(settings.reps, seed, |rng| {
        let pop = draw_population(cfg, rng);
        let data = assign_with(&pop, n_t, rng)?;
        Ok(RepOutcome {
            estimates: estimate_methods(&data, settings),
            target: cfg.ate,
        })
    })?;
    Ok(aggregate(&outcomes, settings, Framework::ModelBased, seed))
}

/// Dispatches on the framework: design-based means a finite population.
pub fn run(
    cfg: &DgpConfig,
    framework: Framework,
    settings: &SimSettings,
    seed: u64,
) -> Result<SimReport, SimulationError> {
    match framework {
        Framework::DesignBased => run_finite(cfg, settings, seed),
        Framework::ModelBased => run_infinite(cfg, settings, seed),
    }
}

/// Quantile levels reported by [`convergence_scan`].
pub const SCAN_QUANTILES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanSeries {
    /// `sqrt(n) (estimate - delta3)`
    Discrepancy,
    /// `n var_hat(estimate)`
    ScaledVariance,
}

/// One long-format row of plot data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub n: usize,
    pub series: ScanSeries,
    pub method: Estimator,
    /// Variance estimator for `ScaledVariance` rows; absent for discrepancies.
    pub variance: Option<Framework>,
    pub quantile: f64,
    pub value: f64,
}

/// Distribution of `sqrt(n) (estimate - delta3)` and `n var_hat` across
/// replications at each sample size in `n_grid`. Grid point `i` runs with the
/// derived seed `mix_seed(seed, i)`.
pub fn convergence_scan(
    cfg: &DgpConfig,
    framework: Framework,
    n_grid: &[usize],
    settings: &SimSettings,
    seed: u64,
) -> Result<Vec<ScanRow>, SimulationError> {
    settings.validate()?;
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimulationError::InvalidConfig(
            "n_grid must be strictly ascending".into(),
        ));
    }
    let mut settings = settings.clone();
    if !settings.methods.contains(&Estimator::Delta3) {
        settings.methods.push(Estimator::Delta3);
    }
    let reference = settings
        .methods
        .iter()
        .position(|&m| m == Estimator::Delta3)
        .expect("delta3 present");

    let mut rows = Vec::new();
    for (i, &n) in n_grid.iter().enumerate() {
        let cfg = DgpConfig { n, ..*cfg };
        cfg.validate()?;
        let n_t = treated_count(n, cfg.p_t)?;
        let grid_seed = numeric::mix_seed(seed, i as u64);
        let fixed = match framework {
            Framework::DesignBased => Some(generate_population(&cfg, grid_seed)?),
            Framework::ModelBased => None,
        };
        let outcomes = run_reps(settings.reps, grid_seed, |rng| {
            let data = match &fixed {
                Some(pop) => assign_with(pop, n_t, rng)?,
                None => {
                    let pop = draw_population(&cfg, rng);
                    assign_with(&pop, n_t, rng)?
                }
            };
            Ok(RepOutcome {
                estimates: estimate_methods(&data, &settings),
                target: 0.0,
            })
        })?;

        let root_n = (n as f64).sqrt();
        for (k, &method) in settings.methods.iter().enumerate() {
            let mut discrepancy = Vec::new();
            let mut scaled = [Vec::new(), Vec::new()];
            for o in &outcomes {
                let (Some(e), Some(base)) = (o.estimates[k], o.estimates[reference]) else {
                    continue;
                };
                if method != Estimator::Delta3 {
                    discrepancy.push(root_n * (e.estimate - base.estimate));
                }
                for (j, fw) in Framework::ALL.iter().enumerate() {
                    scaled[j].push(n as f64 * e.variance(*fw));
                }
            }
            let mut emit = |series, variance, mut values: Vec<f64>| {
                if values.is_empty() {
                    return;
                }
                values.sort_by(|a, b| a.total_cmp(b));
                for q in SCAN_QUANTILES {
                    rows.push(ScanRow {
                        n,
                        series,
                        method,
                        variance,
                        quantile: q,
                        value: numeric::quantile_sorted(&values, q),
                    });
                }
            };
            emit(ScanSeries::Discrepancy, None, discrepancy);
            let [design, model] = scaled;
            emit(
                ScanSeries::ScaledVariance,
                Some(Framework::DesignBased),
                design,
            );
            emit(
                ScanSeries::ScaledVariance,
                Some(Framework::ModelBased),
                model,
            );
        }
    }
    Ok(rows)
}

/// Observed `(y, x)` rows treated as a superpopulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTable {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

impl SourceTable {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

impl From<&ExperimentData> for SourceTable {
    fn from(d: &ExperimentData) -> Self {
        Self {
            y: d.y().to_vec(),
            x: d.x().to_vec(),
        }
    }
}

/// Synthetic stand-in for a production metric table: a log-normal
/// pre-period metric `x` (right-skewed, heavy upper tail) and an outcome
/// `y = 1 + 0.9 x + e` with noise standard deviation `0.5 + 0.2 x`.
pub fn synthetic_superpopulation(size: usize, seed: u64) -> SourceTable {
    let mut rng = rng_for(seed, 0);
    let lognormal = LogNormal::new(1.0, 0.6).expect("valid log-normal");
    let mut y = Vec::with_capacity(size);
    let mut x = Vec::with_capacity(size);
    for _ in 0..size {
        let xi: f64 = lognormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        x.push(xi);
        y.push(1.0 + 0.9 * xi + (0.5 + 0.2 * xi) * e);
    }
    SourceTable { y, x }
}

/// Resampling design: sample size, allocation and the injected effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDesign {
    pub m: usize,
    pub p_t: f64,
    pub ate: f64,
    pub hte: f64,
}

/// Draws `m` rows with replacement per replication, sets `y_c = y` and
/// `y_t = y + ate + hte (x - mean_source(x))`, assigns, and estimates.
/// Coverage targets the injected `ate`, which is the superpopulation ATE
/// because the heterogeneity term is centred at the source mean.
pub fn bootstrap_superpopulation(
    source: &SourceTable,
    design: &BootstrapDesign,
    settings: &SimSettings,
    seed: u64,
) -> Result<SimReport, SimulationError> {
    settings.validate()?;
    if source.is_empty() || source.x.len() != source.y.len() {
        return Err(SimulationError::InvalidConfig(
            "source table is empty or ragged".into(),
        ));
    }
    if design.m > source.len() {
        return Err(SimulationError::InvalidConfig(format!(
            "sample size {} exceeds source size {}",
            design.m,
            source.len()
        )));
    }
    let n_t = treated_count(design.m, design.p_t)?;
    let x_mu = numeric::mean(&source.x);
    let outcomes = run_reps(settings.reps, seed, |rng| {
        let mut pop = PopulationTable {
            y_t: Vec::with_capacity(design.m),
            y_c: Vec::with_capacity(design.m),
            x: Vec::with_capacity(design.m),
        };
        for _ in 0..design.m {
            let i = rng.random_range(0..source.len());
            let (y, x) = (source.y[i], source.x[i]);
            pop.y_c.push(y);
            pop.y_t.push(y + design.ate + design.hte * (x - x_mu));
            pop.x.push(x);
        }
        let data = assign_with(&pop, n_t, rng)?;
        Ok(RepOutcome {
            estimates: estimate_methods(&data, settings),
            target: design.ate,
        })
    })?;
    Ok(aggregate(&outcomes, settings, Framework::ModelBased, seed))
}
