//! Time-series containers, CSV ingestion, normalization and context windows.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Name of the optional label column in CSV files.
pub const LABEL_COLUMN: &str = "label";

/// A length-T sequence of d-dimensional observations with optional 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    name: String,
    values: Matrix,
    labels: Option<Vec<u8>>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, values: Matrix, labels: Option<Vec<u8>>) -> Result<Self> {
        let name = name.into();
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::Empty(format!(
                "series {name:?} needs at least one row and one feature"
            )));
        }
        if let Some(i) = values.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "series {name:?} row {} feature {}",
                i / values.cols(),
                i % values.cols()
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != values.rows() {
                return Err(Error::Shape(format!(
                    "series {name:?} has {} rows but {} labels",
                    values.rows(),
                    labels.len()
                )));
            }
            if let Some(bad) = labels.iter().find(|&&l| l > 1) {
                return Err(Error::InvalidArgument(format!("label {bad} is not 0 or 1")));
            }
        }
        Ok(TimeSeries {
            name,
            values,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Number of time points T.
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    /// Feature dimension d.
    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    /// Copy of this series with labels removed.
    pub fn without_labels(&self) -> TimeSeries {
        TimeSeries {
            name: self.name.clone(),
            values: self.values.clone(),
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<TimeSeries> {
        self.labels = Some(labels);
        TimeSeries::new(self.name, self.values, self.labels)
    }

    /// Per-feature min-max scaling to [0, 1]. Constant features map to 0.
    pub fn normalize(&self) -> TimeSeries {
        let (rows, cols) = (self.values.rows(), self.values.cols());
        let mut out = self.values.clone();
        for j in 0..cols {
            let (lo, hi) = (0..rows).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                let v = self.values[(i, j)];
                (lo.min(v), hi.max(v))
            });
            let span = hi - lo;
            for i in 0..rows {
                out[(i, j)] = if span > 0.0 {
                    (self.values[(i, j)] - lo) / span
                } else {
                    0.0
                };
            }
        }
        TimeSeries {
            name: self.name.clone(),
            values: out,
            labels: self.labels.clone(),
        }
    }

    /// The `m` observations ending at `t`; indices before 0 repeat observation 0.
    pub fn sample_window(&self, t: usize, m: usize) -> Result<Subsequence> {
        if t >= self.len() {
            return Err(Error::OutOfRange(format!(
                "time index {t} outside series of length {}",
                self.len()
            )));
        }
        if m == 0 {
            return Err(Error::InvalidArgument("window size must be at least 1".into()));
        }
        let d = self.dim();
        let mut values = Matrix::zeros(m, d);
        for k in 0..m {
            // row k holds index t - (m - 1) + k, clamped at the left edge
            let src = (t + k + 1).saturating_sub(m);
            values.row_mut(k).copy_from_slice(self.values.row(src));
        }
        Ok(Subsequence {
            end_index: t,
            values,
        })
    }

    /// Writes the series as CSV with a header row; `f0..f{d-1}` plus `label` when present.
    pub fn write_csv(&self, path: impl AsRef<Path>, include_labels: bool) -> Result<()> {
        let path = path.as_ref();
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("f{j}")).collect();
        let labels = if include_labels { self.labels() } else { None };
        if labels.is_some() {
            header.push(LABEL_COLUMN.to_string());
        }
        let mut text = header.join(",");
        text.push('\n');
        for (i, row) in self.values.iter_rows().enumerate() {
            let mut fields: Vec<String> = row.iter().map(|v| format_sig(*v, 9)).collect();
            if let Some(labels) = labels {
                fields.push(labels[i].to_string());
            }
            text.push_str(&fields.join(","));
            text.push('\n');
        }
        out.write_all(text.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// A context window: `values.rows()` consecutive observations ending at `end_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsequence {
    pub end_index: usize,
    pub values: Matrix,
}

impl Subsequence {
    pub fn window_size(&self) -> usize {
        self.values.rows()
    }
}

/// Labeled source series plus a target series whose labels are only used for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    pub source: TimeSeries,
    pub target: TimeSeries,
    /// Held-out target labels, never read during training or scoring.
    pub target_labels: Option<Vec<u8>>,
}

impl DomainPair {
    pub fn new(source: TimeSeries, target: TimeSeries, target_labels: Option<Vec<u8>>) -> Result<Self> {
        if source.labels().is_none() {
            return Err(Error::InvalidArgument(format!(
                "source series {:?} has no labels",
                source.name()
            )));
        }
        if let Some(l) = &target_labels {
            if l.len() != target.len() {
                return Err(Error::Shape(format!(
                    "target has {} rows but {} held-out labels",
                    target.len(),
                    l.len()
                )));
            }
        }
        Ok(DomainPair {
            source,
            target: target.without_labels(),
            target_labels,
        })
    }

    pub fn source_labels(&self) -> &[u8] {
        self.source.labels().expect("validated at construction")
    }

    pub fn is_heterogeneous(&self) -> bool {
        self.source.dim() != self.target.dim()
    }

    /// Normalizes both series independently over their full length.
    pub fn normalized(&self) -> DomainPair {
        DomainPair {
            source: self.source.normalize(),
            target: self.target.normalize(),
            target_labels: self.target_labels.clone(),
        }
    }
}

/// Reads a CSV file with a header row. A column named `label` holds 0/1 labels;
/// every other column is a numeric feature.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |row: usize, column: &str, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(0, "-", e.to_string()))?
        .clone();
    let label_col = headers.iter().position(|h| h == LABEL_COLUMN);
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&j| Some(j) != label_col).collect();
    if feature_cols.is_empty() {
        return Err(parse_err(0, "-", "no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_err(row, "-", e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(
                row,
                "-",
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for &j in &feature_cols {
            let cell = &record[j];
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(row, &headers[j], format!("{cell:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(row, &headers[j], format!("{cell:?} is not finite")));
            }
            values.push(v);
        }
        if let (Some(j), Some(labels)) = (label_col, labels.as_mut()) {
            let label = match &record[j] {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(parse_err(
                        row,
                        LABEL_COLUMN,
                        format!("label {other:?} is not 0 or 1"),
                    ))
                }
            };
            labels.push(label);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Empty(format!("{} has no data rows", path.display())));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    TimeSeries::new(name, Matrix::from_vec(rows, feature_cols.len(), values)?, labels)
}

/// Reads a CSV holding a `label` column (other columns are ignored).
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: LABEL_COLUMN.to_string(),
        message,
    };
    let headers = reader.headers().map_err(|e| parse_err(0, e.to_string()))?;
    let col = headers
        .iter()
        .position(|h| h == LABEL_COLUMN)
        .ok_or_else(|| parse_err(0, "no label column".into()))?;
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(i + 1, e.to_string()))?;
        labels.push(match record.get(col) {
            Some("0") => 0,
            Some("1") => 1,
            other => return Err(parse_err(i + 1, format!("label {other:?} is not 0 or 1"))),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty(format!("{} has no data rows", path.display())));
    }
    Ok(labels)
}

/// Writes a single `label` column.
pub fn write_labels_csv(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::with_capacity(2 * labels.len() + 6);
    text.push_str(LABEL_COLUMN);
    text.push('\n');
    for l in labels {
        text.push_str(if *l == 0 { "0\n" } else { "1\n" });
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Formats a float with `digits` significant digits, in the style of C's `%g`.
pub fn format_sig(value: f64, digits: usize) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, value);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{value:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
