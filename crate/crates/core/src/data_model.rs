//! Observed experiment data and the first- and second-moment summaries every
//! estimator is built from.
//!
//! Variances and covariances use the unbiased `(size - 1)` divisor throughout.
//! Moments are computed with two passes over the data and compensated
//! summation, which keeps them accurate for inputs with millions of rows and
//! large offsets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::CompensatedSum;

/// Validation failures for raw experiment data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("column lengths differ: y has {y}, x has {x}, t has {t}")]
    LengthMismatch { y: usize, x: usize, t: usize },
    #[error("assignment at row {index} is {value}, expected 0 or 1")]
    NonBinaryAssignment { index: usize, value: f64 },
    #[error("non-finite {column} value at row {index}")]
    NonFiniteValue { column: &'static str, index: usize },
    #[error("each group needs at least 2 units (treatment {n_t}, control {n_c})")]
    GroupTooSmall { n_t: usize, n_c: usize },
}

/// Experiment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Treatment,
    Control,
}

/// Validated observed triples `(y, x, t)`.
///
/// Immutable after construction; `n_t >= 2` and `n_c >= 2` always hold.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    y: Vec<f64>,
    x: Vec<f64>,
    treated: Vec<bool>,
    n_t: usize,
}

impl ExperimentData {
    /// Validates raw columns, with `t` coded as 0/1.
    pub fn new(y: Vec<f64>, x: Vec<f64>, t: Vec<f64>) -> Result<Self, DataError> {
        if y.len() != x.len() || y.len() != t.len() {
            return Err(DataError::LengthMismatch {
                y: y.len(),
                x: x.len(),
                t: t.len(),
            });
        }
        let mut treated = Vec::with_capacity(t.len());
        for (index, &value) in t.iter().enumerate() {
            if value == 1.0 {
                treated.push(true);
            } else if value == 0.0 {
                treated.push(false);
            } else {
                return Err(DataError::NonBinaryAssignment { index, value });
            }
        }
        Self::from_assignment(y, x, treated)
    }

    /// Validates columns whose assignment is already boolean.
    pub fn from_assignment(
        y: Vec<f64>,
        x: Vec<f64>,
        treated: Vec<bool>,
    ) -> Result<Self, DataError> {
        if y.len() != x.len() || y.len() != treated.len() {
            return Err(DataError::LengthMismatch {
                y: y.len(),
                x: x.len(),
                t: treated.len(),
            });
        }
        for (column, values) in [("y", &y), ("x", &x)] {
            if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFiniteValue { column, index });
            }
        }
        let n_t = treated.iter().filter(|&&t| t).count();
        let n_c = treated.len() - n_t;
        if n_t < 2 || n_c < 2 {
            return Err(DataError::GroupTooSmall { n_t, n_c });
        }
        Ok(Self { y, x, treated, n_t })
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn treated(&self) -> &[bool] {
        &self.treated
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_c(&self) -> usize {
        self.n() - self.n_t
    }

    pub fn p_t(&self) -> f64 {
        self.n_t as f64 / self.n() as f64
    }

    pub fn p_c(&self) -> f64 {
        self.n_c() as f64 / self.n() as f64
    }

    fn rows(&self, group: Option<Group>) -> impl Iterator<Item = (f64, f64)> + Clone + '_ {
        self.y
            .iter()
            .zip(&self.x)
            .zip(&self.treated)
            .filter(move |(_, &t)| match group {
                None => true,
                Some(Group::Treatment) => t,
                Some(Group::Control) => !t,
            })
            .map(|((&y, &x), _)| (y, x))
    }

    /// Moments over one arm.
    pub fn summarize_group(&self, group: Group) -> GroupSummary {
        let size = match group {
            Group::Treatment => self.n_t,
            Group::Control => self.n_c(),
        };
        let m = RawMoments::compute(self.rows(Some(group)), size);
        GroupSummary {
            mean_y: m.mean_y,
            mean_x: m.mean_x,
            var_y: m.var_y,
            var_x: m.var_x,
            cov_yx: m.cov_yx,
            size,
        }
    }

    /// Moments over all units.
    pub fn summarize_full(&self) -> FullSummary {
        let m = RawMoments::compute(self.rows(None), self.n());
        FullSummary {
            mean_y: m.mean_y,
            mean_x: m.mean_x,
            var_y: m.var_y,
            var_x: m.var_x,
            cov_yx: m.cov_yx,
        }
    }

    /// All summaries at once, the input every control-variate operation takes.
    pub fn moments(&self) -> Moments {
        Moments {
            treatment: self.summarize_group(Group::Treatment),
            control: self.summarize_group(Group::Control),
            full: self.summarize_full(),
            n: self.n(),
        }
    }
}

/// Per-arm sample moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub mean_y: f64,
    pub mean_x: f64,
    pub var_y: f64,
    pub var_x: f64,
    pub cov_yx: f64,
    pub size: usize,
}

/// Full-sample moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullSummary {
    pub mean_y: f64,
    pub mean_x: f64,
    pub var_y: f64,
    pub var_x: f64,
    pub cov_yx: f64,
}

/// Both arms plus the pooled sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub treatment: GroupSummary,
    pub control: GroupSummary,
    pub full: FullSummary,
    pub n: usize,
}

impl Moments {
    pub fn group(&self, group: Group) -> &GroupSummary {
        match group {
            Group::Treatment => &self.treatment,
            Group::Control => &self.control,
        }
    }

    pub fn p_t(&self) -> f64 {
        self.treatment.size as f64 / self.n as f64
    }

    pub fn p_c(&self) -> f64 {
        self.control.size as f64 / self.n as f64
    }
}

struct RawMoments {
    mean_y: f64,
    mean_x: f64,
    var_y: f64,
    var_x: f64,
    cov_yx: f64,
}

impl RawMoments {
    fn compute<I>(rows: I, size: usize) -> Self
    where
        I: Iterator<Item = (f64, f64)> + Clone,
    {
        let (mut sy, mut sx) = (CompensatedSum::new(), CompensatedSum::new());
        for (y, x) in rows.clone() {
            sy.add(y);
            sx.add(x);
        }
        let n = size as f64;
        let (mean_y, mean_x) = (sy.total() / n, sx.total() / n);

        let (mut syy, mut sxx, mut sxy) = (
            CompensatedSum::new(),
            CompensatedSum::new(),
            CompensatedSum::new(),
        );
        for (y, x) in rows {
            let (dy, dx) = (y - mean_y, x - mean_x);
            syy.add(dy * dy);
            sxx.add(dx * dx);
            sxy.add(dy * dx);
        }
        let d = (size - 1) as f64;
        Self {
            mean_y,
            mean_x,
            var_y: syy.total() / d,
            var_x: sxx.total() / d,
            cov_yx: sxy.total() / d,
        }
    }
}
