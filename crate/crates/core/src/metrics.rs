//! Record-count scoring: accuracy and the normalized absolute count error.
//!
//! Both metrics round each real-valued prediction half-up, `⌊p + 1/2⌋`.
//! The error is `Σ|⌊pᵢ + 1/2⌋ − rᵢ| / Σrᵢ`, accumulated in integers with a
//! single final division.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::manifest::{read_manifest, ManifestError};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("prediction set is empty")]
    Empty,
    #[error("actual record counts sum to zero; error is undefined")]
    ZeroTotal,
    #[error("duplicate page id {0:?}")]
    Duplicate(String),
    #[error("page id {0:?} is not in the ground truth")]
    UnknownPage(String),
    #[error("page {page_id:?}: prediction {value} is not a finite number")]
    NotFinite { page_id: String, value: f64 },
    #[error("{}: line {line}: {message}", path.display())]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub page_id: String,
    pub predicted: f64,
    pub actual: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    rows: Vec<PredictionRow>,
}

impl PredictionSet {
    pub fn new(rows: Vec<PredictionRow>) -> Result<Self, MetricsError> {
        if rows.is_empty() {
            return Err(MetricsError::Empty);
        }
        let mut seen = HashSet::new();
        for r in &rows {
            if !r.predicted.is_finite() {
                return Err(MetricsError::NotFinite {
                    page_id: r.page_id.clone(),
                    value: r.predicted,
                });
            }
            if !seen.insert(r.page_id.as_str()) {
                return Err(MetricsError::Duplicate(r.page_id.clone()));
            }
        }
        Ok(PredictionSet { rows })
    }

    /// Unnamed rows from parallel slices, ids `0..n`.
    pub fn from_pairs(predicted: &[f64], actual: &[u32]) -> Result<Self, MetricsError> {
        assert_eq!(predicted.len(), actual.len(), "length mismatch");
        Self::new(
            predicted
                .iter()
                .zip(actual)
                .enumerate()
                .map(|(i, (&p, &r))| PredictionRow {
                    page_id: i.to_string(),
                    predicted: p,
                    actual: r,
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> &[PredictionRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// `⌊p + 1/2⌋` without the precision loss of adding 0.5 in floating point.
pub fn round_half_up(p: f64) -> i64 {
    let f = p.floor();
    // p - floor(p) is exact for every finite f64.
    f as i64 + i64::from(p - f >= 0.5)
}

/// Rounded prediction as a count; negatives clamp to zero.
pub fn rounded_count(row: &PredictionRow) -> u64 {
    let r = round_half_up(row.predicted);
    if r < 0 {
        log::warn!(
            "page {}: prediction {} rounds to {r}; counting it as 0",
            row.page_id,
            row.predicted
        );
        0
    } else {
        r as u64
    }
}

/// `(Σ|⌊pᵢ + 1/2⌋ − rᵢ|, Σrᵢ)`.
pub fn error_terms(set: &PredictionSet) -> (u64, u64) {
    set.rows.iter().fold((0, 0), |(num, den), row| {
        (num + rounded_count(row).abs_diff(row.actual as u64), den + row.actual as u64)
    })
}

pub fn error_metric(set: &PredictionSet) -> Result<f64, MetricsError> {
    let (num, den) = error_terms(set);
    if den == 0 {
        return Err(MetricsError::ZeroTotal);
    }
    Ok(num as f64 / den as f64)
}

/// Percentage of pages whose rounded prediction equals the actual count.
pub fn accuracy(set: &PredictionSet) -> f64 {
    let hits = set
        .rows
        .iter()
        .filter(|r| rounded_count(r) == r.actual as u64)
        .count();
    100.0 * hits as f64 / set.rows.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub page_id: String,
    pub predicted: f64,
    pub rounded: u64,
    pub actual: u32,
    /// `rounded - actual`.
    pub residual: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub accuracy: f64,
    /// `None` when every actual count is zero.
    pub error: Option<f64>,
    pub n: usize,
    pub residuals: Vec<Residual>,
}

impl Report {
    pub fn from_set(set: &PredictionSet) -> Self {
        let mut residuals: Vec<Residual> = set
            .rows
            .iter()
            .map(|r| {
                let rounded = rounded_count(r);
                Residual {
                    page_id: r.page_id.clone(),
                    predicted: r.predicted,
                    rounded,
                    actual: r.actual,
                    residual: rounded as i64 - r.actual as i64,
                }
            })
            .collect();
        residuals.sort_by(|a, b| a.page_id.cmp(&b.page_id));
        Report {
            accuracy: accuracy(set),
            error: error_metric(set).ok(),
            n: set.len(),
            residuals,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Fixed-width summary followed by the pages with nonzero residuals.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pages     {}", self.n);
        let _ = writeln!(s, "accuracy  {:.2}%", self.accuracy);
        match self.error {
            Some(e) => {
                let _ = writeln!(s, "error     {:.2}%", 100.0 * e);
            }
            None => {
                let _ = writeln!(s, "error     undefined (no records)");
            }
        }
        let wrong: Vec<_> = self.residuals.iter().filter(|r| r.residual != 0).collect();
        if !wrong.is_empty() {
            let _ = writeln!(s, "\n{:<16} {:>10} {:>7} {:>6} {:>8}", "page_id", "predicted", "rounded", "actual", "residual");
            for r in wrong {
                let _ = writeln!(
                    s,
                    "{:<16} {:>10.3} {:>7} {:>6} {:>+8}",
                    r.page_id, r.predicted, r.rounded, r.actual, r.residual
                );
            }
        }
        s
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    page_id: String,
    prediction: f64,
}

/// Read `page_id,prediction` rows.
pub fn read_predictions(path: &Path) -> Result<Vec<(String, f64)>, MetricsError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| MetricsError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let mut out = Vec::new();
    for rec in reader.deserialize::<CsvRow>() {
        let row = rec.map_err(|e| MetricsError::Row {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        out.push((row.page_id, row.prediction));
    }
    Ok(out)
}

/// Join predictions with the manifest on page id and score them.
pub fn evaluate_files(predictions: &Path, truth: &Path) -> Result<Report, MetricsError> {
    let mut counts = BTreeMap::new();
    for row in read_manifest(truth)? {
        if counts.insert(row.page_id.clone(), row.record_count).is_some() {
            return Err(MetricsError::Duplicate(row.page_id));
        }
    }
    let preds = read_predictions(predictions)?;
    let rows = preds
        .into_iter()
        .map(|(page_id, predicted)| match counts.get(&page_id) {
            Some(&actual) => Ok(PredictionRow {
                page_id,
                predicted,
                actual,
            }),
            None => Err(MetricsError::UnknownPage(page_id)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if rows.len() < counts.len() {
        log::warn!(
            "{} ground-truth pages have no prediction and are not scored",
            counts.len() - rows.len()
        );
    }
    Ok(Report::from_set(&PredictionSet::new(rows)?))
}
