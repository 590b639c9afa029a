//! Experiment CSV ingestion.
//!
//! Header is mandatory. Required columns `t` (0/1), `y`, `x`; optional
//! `unit_id`. Columns may appear in any order; other columns are ignored.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use abvr_core::ExperimentData;
use thiserror::Error;

const REQUIRED: [&str; 3] = ["t", "y", "x"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed CSV: {message}")]
    Csv { line: u64, message: String },
    #[error("header is missing required column '{0}'")]
    MissingColumn(&'static str),
    #[error("header repeats column '{0}'")]
    DuplicateColumn(String),
    #[error("line {line}, column '{column}': {message} (got '{value}')")]
    Value {
        line: u64,
        column: &'static str,
        value: String,
        message: &'static str,
    },
    #[error("no data rows")]
    Empty,
    #[error("invalid experiment: {0}")]
    Data(#[from] abvr_core::DataError),
}

/// Parsed rows plus the optional unit identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub data: ExperimentData,
    pub unit_ids: Option<Vec<String>>,
}

pub fn read_experiment_csv(path: &Path) -> Result<Dataset, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_experiment_csv(file)
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => IngestError::Io {
            path: "<input>".into(),
            source,
        },
        kind => IngestError::Csv {
            line,
            message: format!("{kind:?}"),
        },
    }
}

pub fn parse_experiment_csv<R: Read>(reader: R) -> Result<Dataset, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();

    let mut seen = std::collections::HashSet::new();
    for h in headers.iter() {
        let name = h.trim_start_matches('\u{feff}');
        if (REQUIRED.contains(&name) || name == "unit_id") && !seen.insert(name.to_string()) {
            return Err(IngestError::DuplicateColumn(name.to_string()));
        }
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
    };
    let mut idx = [0usize; 3];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = find(name).ok_or(IngestError::MissingColumn(name))?;
    }
    let id_col = find("unit_id");

    let (mut t, mut y, mut x) = (Vec::new(), Vec::new(), Vec::new());
    let mut ids = id_col.map(|_| Vec::new());
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |col: usize| record.get(col).unwrap_or("");

        let raw_t = field(idx[0]);
        let tv = match raw_t {
            "0" => 0.0,
            "1" => 1.0,
            _ => {
                return Err(IngestError::Value {
                    line,
                    column: "t",
                    value: raw_t.to_string(),
                    message: "expected 0 or 1",
                })
            }
        };
        let number = |col: usize, column: &'static str| {
            let raw = field(col);
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(IngestError::Value {
                    line,
                    column,
                    value: raw.to_string(),
                    message: "value is not finite",
                }),
                Err(_) => Err(IngestError::Value {
                    line,
                    column,
                    value: raw.to_string(),
                    message: "expected a real number",
                }),
            }
        };
        y.push(number(idx[1], "y")?);
        x.push(number(idx[2], "x")?);
        t.push(tv);
        if let (Some(ids), Some(c)) = (ids.as_mut(), id_col) {
            ids.push(field(c).to_string());
        }
    }
    if t.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(Dataset {
        data: ExperimentData::new(y, x, t)?,
        unit_ids: ids,
    })
}
