//! Data model and CSV ingestion.
//!
//! A [`Dataset`] holds an `n x p` covariate matrix, an exposure vector, and an
//! optional outcome vector. Categorical covariate columns are expanded into 0/1
//! indicator columns at load time. Pairwise distance matrices and their doubly
//! centered versions ([`DistanceStructures`]) are the raw material for every
//! dependence measure in this crate.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative tolerance on `|sum(w) - n|` accepted by [`WeightVector::new`].
pub const WEIGHT_SUM_TOL: f64 = 1e-6;

/// Most negative single weight accepted by [`WeightVector::new`]. Solver
/// output is clamped to be exactly nonnegative; the small slack only exists
/// so that externally produced weight files with harmless roundoff load.
pub const WEIGHT_NEG_TOL: f64 = -1e-9;

/// Observations for a weighting problem: covariates, exposure, optional outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariates: DMatrix<f64>,
    exposure: Vec<f64>,
    outcome: Option<Vec<f64>>,
    column_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset after validating shapes and finiteness.
    pub fn new(
        covariates: DMatrix<f64>,
        exposure: Vec<f64>,
        outcome: Option<Vec<f64>>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let n = covariates.nrows();
        let p = covariates.ncols();
        if n < 2 {
            return Err(Error::Invalid(format!("need at least 2 rows, got {n}")));
        }
        if p < 1 {
            return Err(Error::Invalid("need at least 1 covariate column".into()));
        }
        if exposure.len() != n {
            return Err(Error::Invalid(format!(
                "exposure length {} does not match {} rows",
                exposure.len(),
                n
            )));
        }
        if let Some(y) = &outcome {
            if y.len() != n {
                return Err(Error::Invalid(format!(
                    "outcome length {} does not match {} rows",
                    y.len(),
                    n
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid("outcome contains a non-finite value".into()));
            }
        }
        if column_names.len() != p {
            return Err(Error::Invalid(format!(
                "{} column names for {} columns",
                column_names.len(),
                p
            )));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("covariates contain a non-finite value".into()));
        }
        if exposure.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("exposure contains a non-finite value".into()));
        }
        Ok(Self {
            covariates,
            exposure,
            outcome,
            column_names,
        })
    }

    /// Number of rows.
    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    /// Number of covariate columns after indicator expansion.
    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn exposure(&self) -> &[f64] {
        &self.exposure
    }

    pub fn outcome(&self) -> Option<&[f64]> {
        self.outcome.as_deref()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Values of covariate column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.covariates.column(j).iter().copied().collect()
    }

    /// True when column `j` only takes the values 0 and 1.
    pub fn is_indicator(&self, j: usize) -> bool {
        self.covariates.column(j).iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Returns a copy with each covariate column divided by its sample
    /// standard deviation. Columns with zero variance are left unchanged.
    pub fn standardize_columns(&self) -> Self {
        let n = self.n();
        let mut covariates = self.covariates.clone();
        for j in 0..self.p() {
            let col: Vec<f64> = covariates.column(j).iter().copied().collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let sd = var.sqrt();
            if sd > 0.0 {
                for i in 0..n {
                    covariates[(i, j)] /= sd;
                }
            }
        }
        Self {
            covariates,
            exposure: self.exposure.clone(),
            outcome: self.outcome.clone(),
            column_names: self.column_names.clone(),
        }
    }

    /// Builds a new dataset from the given row indices (repeats allowed),
    /// as used by bootstrap resampling.
    pub fn resample(&self, indices: &[usize]) -> Result<Self> {
        if indices.iter().any(|&i| i >= self.n()) {
            return Err(Error::Invalid("resample index out of range".into()));
        }
        let covariates = DMatrix::from_fn(indices.len(), self.p(), |r, c| {
            self.covariates[(indices[r], c)]
        });
        let exposure = indices.iter().map(|&i| self.exposure[i]).collect();
        let outcome = self
            .outcome
            .as_ref()
            .map(|y| indices.iter().map(|&i| y[i]).collect());
        Self::new(covariates, exposure, outcome, self.column_names.clone())
    }
}

/// Observation weights with a label identifying how they were produced.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    label: String,
}

impl WeightVector {
    /// Validates finiteness, nonnegativity (up to [`WEIGHT_NEG_TOL`]) and the
    /// sum-to-`n` convention before wrapping the values.
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::Invalid("empty weight vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("weights contain a non-finite value".into()));
        }
        if let Some(v) = values.iter().find(|&&v| v < WEIGHT_NEG_TOL) {
            return Err(Error::Invalid(format!("negative weight {v}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - n as f64).abs() > WEIGHT_SUM_TOL * n as f64 {
            return Err(Error::Invalid(format!(
                "weights sum to {sum}, expected {n} (tolerance {})",
                WEIGHT_SUM_TOL * n as f64
            )));
        }
        Ok(Self {
            values,
            label: label.into(),
        })
    }

    /// All-ones weights, the do-nothing baseline.
    pub fn uniform(n: usize) -> Self {
        Self {
            values: vec![1.0; n],
            label: "uniform".into(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Canonical one-column CSV serialization: header `weight`, one row per
    /// observation, 17 significant digits so values round-trip exactly.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("weight\n");
        for v in &self.values {
            out.push_str(&format!("{v:.16e}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads weights from the canonical one-column CSV format.
    pub fn read_csv(path: &Path, label: impl Into<String>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.len() != 1 || headers.get(0) != Some("weight") {
            return Err(Error::Invalid(format!(
                "expected a single 'weight' column in {}",
                path.display()
            )));
        }
        let mut values = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let cell = record.get(0).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| Error::InvalidValue {
                row: i + 1,
                column: "weight".into(),
                value: cell.into(),
            })?;
            values.push(v);
        }
        Self::new(values, label)
    }
}

/// Pairwise distance matrices and their doubly centered versions.
///
/// `dist_x[(k, l)]` is the Euclidean distance between covariate rows `k` and
/// `l`; `dist_a` holds `|A_k - A_l|`. The centered matrices subtract row and
/// column means and add back the grand mean.
#[derive(Debug, Clone)]
pub struct DistanceStructures {
    pub dist_x: DMatrix<f64>,
    pub dist_a: DMatrix<f64>,
    pub centered_x: DMatrix<f64>,
    pub centered_a: DMatrix<f64>,
}

impl DistanceStructures {
    /// Computes all four matrices for a dataset.
    pub fn compute(dataset: &Dataset) -> Self {
        let (dist_x, dist_a) = pairwise_distances(dataset);
        let centered_x = double_center(&dist_x).expect("distance matrix is square");
        let centered_a = double_center(&dist_a).expect("distance matrix is square");
        Self {
            dist_x,
            dist_a,
            centered_x,
            centered_a,
        }
    }

    pub fn n(&self) -> usize {
        self.dist_x.nrows()
    }
}

/// Euclidean distances between covariate rows and absolute differences
/// between exposure values.
pub fn pairwise_distances(dataset: &Dataset) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = dataset.n();
    let p = dataset.p();
    let x = dataset.covariates();
    let a = dataset.exposure();
    let mut dist_x = DMatrix::zeros(n, n);
    let mut dist_a = DMatrix::zeros(n, n);
    for k in 0..n {
        for l in (k + 1)..n {
            let mut ss = 0.0;
            for j in 0..p {
                let d = x[(k, j)] - x[(l, j)];
                ss += d * d;
            }
            let dx = ss.sqrt();
            let da = (a[k] - a[l]).abs();
            dist_x[(k, l)] = dx;
            dist_x[(l, k)] = dx;
            dist_a[(k, l)] = da;
            dist_a[(l, k)] = da;
        }
    }
    (dist_x, dist_a)
}

/// Double centering: subtracts row and column means and adds the grand mean,
/// `C[kl] = m[kl] - rowmean_k - colmean_l + grandmean`.
pub fn double_center(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Invalid(format!(
            "double centering needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    let nf = n as f64;
    let mut row_means = vec![0.0; n];
    let mut col_means = vec![0.0; n];
    let mut grand = 0.0;
    for k in 0..n {
        for l in 0..n {
            let v = m[(k, l)];
            row_means[k] += v;
            col_means[l] += v;
            grand += v;
        }
    }
    for v in row_means.iter_mut().chain(col_means.iter_mut()) {
        *v /= nf;
    }
    grand /= nf * nf;
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            out[(k, l)] = m[(k, l)] - row_means[k] - col_means[l] + grand;
        }
    }
    Ok(out)
}

enum ColumnKind {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

/// Loads a dataset from a headered CSV file.
///
/// Numeric columns are used directly. A covariate column with any cell that
/// does not parse as a number is treated as categorical and expanded into 0/1
/// indicator columns, one per level except the lexicographically first.
/// Missing cells and non-finite numeric values are rejected with the cell
/// location. When `covariate_cols` is `None`, all columns other than exposure
/// and outcome become covariates, in file order.
pub fn load_dataset(
    path: &Path,
    exposure_col: &str,
    outcome_col: Option<&str>,
    covariate_cols: Option<&[String]>,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    if records.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 data rows, got {}",
            records.len()
        )));
    }

    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let exposure_idx = find(exposure_col)?;
    let outcome_idx = outcome_col.map(find).transpose()?;

    let covariate_idx: Vec<usize> = match covariate_cols {
        Some(cols) => cols.iter().map(|c| find(c)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&i| i != exposure_idx && Some(i) != outcome_idx)
            .collect(),
    };
    if covariate_idx.is_empty() {
        return Err(Error::Invalid("no covariate columns".into()));
    }
    if covariate_idx.contains(&exposure_idx) {
        return Err(Error::Invalid(format!(
            "column '{exposure_col}' cannot be both exposure and covariate"
        )));
    }

    let cell = |record: &csv::StringRecord, idx: usize, row: usize| -> Result<String> {
        let raw = record.get(idx).unwrap_or("").trim().to_string();
        if raw.is_empty() {
            return Err(Error::MissingValue {
                row,
                column: headers[idx].clone(),
            });
        }
        Ok(raw)
    };

    let numeric_column = |idx: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(records.len());
        for (r, record) in records.iter().enumerate() {
            let raw = cell(record, idx, r + 1)?;
            let v: f64 = raw.parse().map_err(|_| Error::InvalidValue {
                row: r + 1,
                column: headers[idx].clone(),
                value: raw.clone(),
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidValue {
                    row: r + 1,
                    column: headers[idx].clone(),
                    value: raw,
                });
            }
            out.push(v);
        }
        Ok(out)
    };

    let exposure = numeric_column(exposure_idx)?;
    let outcome = outcome_idx.map(numeric_column).transpose()?;

    // A covariate column is numeric only when every cell parses; numbers that
    // parse to NaN or infinity are rejected rather than silently demoting the
    // column to categorical.
    let classify = |idx: usize| -> Result<ColumnKind> {
        let mut raw_values = Vec::with_capacity(records.len());
        for (r, record) in records.iter().enumerate() {
            raw_values.push(cell(record, idx, r + 1)?);
        }
        let all_parse = raw_values.iter().all(|v| v.parse::<f64>().is_ok());
        if all_parse {
            let mut out = Vec::with_capacity(raw_values.len());
            for (r, raw) in raw_values.iter().enumerate() {
                let v: f64 = raw.parse().unwrap();
                if !v.is_finite() {
                    return Err(Error::InvalidValue {
                        row: r + 1,
                        column: headers[idx].clone(),
                        value: raw.clone(),
                    });
                }
                out.push(v);
            }
            Ok(ColumnKind::Numeric(out))
        } else {
            Ok(ColumnKind::Categorical(raw_values))
        }
    };

    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for &idx in &covariate_idx {
        match classify(idx)? {
            ColumnKind::Numeric(values) => columns.push((headers[idx].clone(), values)),
            ColumnKind::Categorical(values) => {
                let mut levels: Vec<String> = values.clone();
                levels.sort();
                levels.dedup();
                // Drop the lexicographically first level as the reference.
                for level in levels.iter().skip(1) {
                    let indicator = values
                        .iter()
                        .map(|v| if v == level { 1.0 } else { 0.0 })
                        .collect();
                    columns.push((format!("{}_{}", headers[idx], level), indicator));
                }
                if levels.len() < 2 {
                    return Err(Error::DegenerateColumn(headers[idx].clone()));
                }
            }
        }
    }

    let n = records.len();
    let p = columns.len();
    let covariates = DMatrix::from_fn(n, p, |r, c| columns[c].1[r]);
    let column_names = columns.into_iter().map(|(name, _)| name).collect();
    Dataset::new(covariates, exposure, outcome, column_names)
}
