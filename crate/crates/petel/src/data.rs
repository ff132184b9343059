//! Observation tables.
//!
//! A [`Dataset`] is an immutable n-row table of features plus at most one
//! of a real-valued response (`y`) or a ±1 classification label. Loss
//! models declare which column they need; the table itself is agnostic.

use ndarray::{Array1, Array2, ArrayView1};
use std::io::Read;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset must have at least one row and one feature column")]
    Empty,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("response length {0} does not match row count {1}")]
    ResponseLength(usize, usize),
    #[error("label length {0} does not match row count {1}")]
    LabelLength(usize, usize),
    #[error("labels must be +1 or -1, found {0}")]
    BadLabel(f64),
    #[error("a dataset carries at most one of response/labels")]
    ResponseAndLabels,
    #[error("csv: {0}")]
    Csv(String),
    #[error("csv column {0:?} is not one of x_*, y, label")]
    UnknownColumn(String),
    #[error("csv has no x_* feature columns")]
    NoFeatures,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Immutable observation table: features, optional response, optional
/// ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    response: Option<Array1<f64>>,
    labels: Option<Array1<f64>>,
}

impl Dataset {
    /// Builds and validates a dataset. All entries must be finite, at most
    /// one of `response`/`labels` may be present, and labels must be ±1.
    pub fn new(
        features: Array2<f64>,
        response: Option<Array1<f64>>,
        labels: Option<Array1<f64>>,
    ) -> Result<Self, DataError> {
        let n = features.nrows();
        if n == 0 || features.ncols() == 0 {
            return Err(DataError::Empty);
        }
        if response.is_some() && labels.is_some() {
            return Err(DataError::ResponseAndLabels);
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite("features".into()));
        }
        if let Some(r) = &response {
            if r.len() != n {
                return Err(DataError::ResponseLength(r.len(), n));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFinite("response".into()));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(DataError::LabelLength(l.len(), n));
            }
            if let Some(&bad) = l.iter().find(|v| **v != 1.0 && **v != -1.0) {
                return Err(DataError::BadLabel(bad));
            }
        }
        Ok(Self { features, response, labels })
    }

    /// Features-only table.
    pub fn from_features(features: Array2<f64>) -> Result<Self, DataError> {
        Self::new(features, None, None)
    }

    /// Regression table: features plus response.
    pub fn regression(features: Array2<f64>, response: Array1<f64>) -> Result<Self, DataError> {
        Self::new(features, Some(response), None)
    }

    /// Classification table: features plus ±1 labels.
    pub fn classification(features: Array2<f64>, labels: Array1<f64>) -> Result<Self, DataError> {
        Self::new(features, None, Some(labels))
    }

    /// Location-model convenience: a single all-ones feature column with
    /// the observations as response, so intercept-only regression models
    /// see the plain sample.
    pub fn location(values: Array1<f64>) -> Result<Self, DataError> {
        let n = values.len();
        Self::new(Array2::ones((n, 1)), Some(values), None)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn response(&self) -> Option<&Array1<f64>> {
        self.response.as_ref()
    }

    pub fn labels(&self) -> Option<&Array1<f64>> {
        self.labels.as_ref()
    }

    /// New dataset keeping only the given feature columns (for restricted
    /// / sparse models). Indices are zero-based column positions.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self, DataError> {
        let n = self.n();
        let mut sub = Array2::<f64>::zeros((n, cols.len()));
        for (k, &c) in cols.iter().enumerate() {
            sub.column_mut(k).assign(&self.features.column(c));
        }
        Self::new(sub, self.response.clone(), self.labels.clone())
    }

    /// With-replacement resample of the rows.
    pub fn resample(&self, indices: &[usize]) -> Self {
        let mut features = Array2::<f64>::zeros((indices.len(), self.p()));
        for (k, &i) in indices.iter().enumerate() {
            features.row_mut(k).assign(&self.features.row(i));
        }
        let take = |v: &Array1<f64>| {
            Array1::from_iter(indices.iter().map(|&i| v[i]))
        };
        Self {
            features,
            response: self.response.as_ref().map(take),
            labels: self.labels.as_ref().map(take),
        }
    }

    /// Reads a dataset from CSV. The header row names each column:
    /// `x_*` columns are features (in file order), `y` is the response,
    /// `label` holds ±1 labels. Any other name is rejected.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
        let mut feat_cols = Vec::new();
        let mut y_col = None;
        let mut label_col = None;
        for (i, name) in headers.iter().enumerate() {
            if name.starts_with("x_") {
                feat_cols.push(i);
            } else if name == "y" {
                y_col = Some(i);
            } else if name == "label" {
                label_col = Some(i);
            } else {
                return Err(DataError::UnknownColumn(name.to_string()));
            }
        }
        if feat_cols.is_empty() {
            return Err(DataError::NoFeatures);
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut ys = Vec::new();
        let mut labels = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
            let parse = |i: usize| -> Result<f64, DataError> {
                record
                    .get(i)
                    .ok_or_else(|| DataError::Csv("short record".into()))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| DataError::Csv(format!("bad number: {e}")))
            };
            rows.push(feat_cols.iter().map(|&i| parse(i)).collect::<Result<_, _>>()?);
            if let Some(i) = y_col {
                ys.push(parse(i)?);
            }
            if let Some(i) = label_col {
                labels.push(parse(i)?);
            }
        }
        if rows.is_empty() {
            return Err(DataError::Empty);
        }
        let p = feat_cols.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let n = flat.len() / p;
        let features =
            Array2::from_shape_vec((n, p), flat).map_err(|e| DataError::Csv(e.to_string()))?;
        Self::new(
            features,
            y_col.map(|_| Array1::from_vec(ys)),
            label_col.map(|_| Array1::from_vec(labels)),
        )
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, DataError> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    /// Writes the dataset in the same schema `from_csv_reader` accepts,
    /// with feature columns named `x_1..x_p`. Formatting is the shortest
    /// round-trip representation, so identical datasets produce identical
    /// bytes.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let mut cols: Vec<String> = (1..=self.p()).map(|j| format!("x_{j}")).collect();
        if self.response.is_some() {
            cols.push("y".into());
        }
        if self.labels.is_some() {
            cols.push("label".into());
        }
        out.push_str(&cols.join(","));
        out.push('\n');
        for i in 0..self.n() {
            let mut fields: Vec<String> =
                self.feature_row(i).iter().map(|v| format!("{v}")).collect();
            if let Some(y) = &self.response {
                fields.push(format!("{}", y[i]));
            }
            if let Some(l) = &self.labels {
                fields.push(format!("{}", l[i]));
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}
