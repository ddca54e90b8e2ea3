//! Weighted kernel and doubly robust estimators of the dose-response curve.
//!
//! All pointwise estimators share the same ingredients: a kernel scaled as
//! `K_h(t) = K(t/h)/h`, estimated weights, and a grid point `a0`. The curve
//! builder evaluates one estimator over a grid and collects warnings (model
//! rank deficiency, kernel-mass fallbacks) instead of failing midway when a
//! safe fallback exists.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{Dataset, WeightVector};
use crate::error::{Error, Result};
use crate::util::quantile_type7;

/// Smoothing kernel for the local estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Epanechnikov,
    Gaussian,
}

impl Kernel {
    /// Unscaled kernel value `K(u)`.
    pub fn evaluate(&self, u: f64) -> f64 {
        match self {
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Kernel::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
        }
    }

    /// Scaled kernel value `K_h(t) = K(t/h)/h`.
    pub fn scaled(&self, t: f64, h: f64) -> f64 {
        self.evaluate(t / h) / h
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            "gaussian" => Ok(Kernel::Gaussian),
            other => Err(Error::Invalid(format!(
                "unknown kernel '{other}' (expected 'epanechnikov' or 'gaussian')"
            ))),
        }
    }
}

/// Which dose-response estimator to evaluate over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Nw,
    NwStabilized,
    LocalLinear,
    /// Doubly robust: outcome-model term plus a kernel-weighted residual
    /// correction, with the given polynomial degree in the exposure.
    DoublyRobust {
        degree: usize,
    },
}

impl EstimatorKind {
    pub fn label(&self) -> String {
        match self {
            EstimatorKind::Nw => "nw".into(),
            EstimatorKind::NwStabilized => "nw-stabilized".into(),
            EstimatorKind::LocalLinear => "local-linear".into(),
            EstimatorKind::DoublyRobust { degree } => format!("dr(degree={degree})"),
        }
    }
}

/// Rule-of-thumb bandwidth `1.06 * min(sd, IQR/1.34) * n^(-1/5)`.
///
/// A zero interquartile range falls back to the standard deviation alone; a
/// constant exposure is an error.
pub fn default_bandwidth(a: &[f64]) -> Result<f64> {
    if a.len() < 2 {
        return Err(Error::Invalid("need at least 2 exposure values".into()));
    }
    if a.iter().any(|&v| v == a[0]) && a.iter().all(|&v| v == a[0]) {
        return Err(Error::DegenerateColumn("exposure".into()));
    }
    let sd = crate::util::sample_sd(a);
    let iqr = quantile_type7(a, 0.75) - quantile_type7(a, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(1.06 * spread * (a.len() as f64).powf(-0.2))
}

/// Equally spaced grid between the 5th and 95th percentiles of the exposure.
pub fn default_grid(a: &[f64], size: usize) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::Invalid("empty exposure".into()));
    }
    if size == 0 {
        return Err(Error::Invalid("grid size must be at least 1".into()));
    }
    let lo = quantile_type7(a, 0.05);
    let hi = quantile_type7(a, 0.95);
    if size == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    let step = (hi - lo) / (size - 1) as f64;
    Ok((0..size).map(|i| lo + step * i as f64).collect())
}

fn check_lengths(a: &[f64], y: &[f64], weights: &WeightVector) -> Result<()> {
    if a.len() != y.len() || a.len() != weights.len() {
        return Err(Error::Invalid(format!(
            "length mismatch: exposure {}, outcome {}, weights {}",
            a.len(),
            y.len(),
            weights.len()
        )));
    }
    Ok(())
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Invalid(format!("bandwidth must be positive, got {h}")));
    }
    Ok(())
}

/// Weighted Nadaraya-Watson estimator with the plain kernel mass in the
/// denominator: `sum(Y w K_h) / sum(K_h)`.
pub fn nw_estimate(
    a: &[f64],
    y: &[f64],
    weights: &WeightVector,
    a0: f64,
    kernel: Kernel,
    h: f64,
) -> Result<f64> {
    check_lengths(a, y, weights)?;
    check_bandwidth(h)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..a.len() {
        let k = kernel.scaled(a[i] - a0, h);
        num += y[i] * weights.values()[i] * k;
        den += k;
    }
    if den <= 0.0 {
        return Err(Error::NoLocalData(a0));
    }
    Ok(num / den)
}

/// Stabilized Nadaraya-Watson estimator `sum(Y w K_h) / sum(w K_h)`; always
/// lies inside the observed outcome range.
pub fn nw_stabilized_estimate(
    a: &[f64],
    y: &[f64],
    weights: &WeightVector,
    a0: f64,
    kernel: Kernel,
    h: f64,
) -> Result<f64> {
    check_lengths(a, y, weights)?;
    check_bandwidth(h)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..a.len() {
        let k = weights.values()[i] * kernel.scaled(a[i] - a0, h);
        num += y[i] * k;
        den += k;
    }
    if den <= 0.0 {
        return Err(Error::NoLocalData(a0));
    }
    Ok(num / den)
}

/// Local linear estimator: intercept of the weighted least-squares fit of `Y`
/// on `(1, A - a0)` with weights `w K_h`. An ill-conditioned local design
/// (condition number above 1e10) falls back to the stabilized estimator.
pub fn local_linear_estimate(
    a: &[f64],
    y: &[f64],
    weights: &WeightVector,
    a0: f64,
    kernel: Kernel,
    h: f64,
) -> Result<f64> {
    check_lengths(a, y, weights)?;
    check_bandwidth(h)?;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut t0 = 0.0;
    let mut t1 = 0.0;
    for i in 0..a.len() {
        let omega = weights.values()[i] * kernel.scaled(a[i] - a0, h);
        let t = a[i] - a0;
        s0 += omega;
        s1 += omega * t;
        s2 += omega * t * t;
        t0 += omega * y[i];
        t1 += omega * t * y[i];
    }
    if s0 <= 0.0 {
        return Err(Error::NoLocalData(a0));
    }
    // Eigenvalues of the 2x2 moment matrix [[s0, s1], [s1, s2]].
    let half_trace = 0.5 * (s0 + s2);
    let det = s0 * s2 - s1 * s1;
    let disc = (half_trace * half_trace - det).max(0.0).sqrt();
    let lambda_min = half_trace - disc;
    let lambda_max = half_trace + disc;
    if lambda_min <= 0.0 || lambda_max / lambda_min > 1e10 {
        return nw_stabilized_estimate(a, y, weights, a0, kernel, h);
    }
    Ok((s2 * t0 - s1 * t1) / det)
}

/// Parametric outcome model `Y ~ 1 + A + ... + A^degree + X` fit by ordinary
/// least squares.
#[derive(Debug, Clone, Serialize)]
pub struct OutcomeModel {
    pub degree: usize,
    pub intercept: f64,
    pub exposure_coefficients: Vec<f64>,
    pub covariate_coefficients: Vec<f64>,
    pub warnings: Vec<String>,
}

impl OutcomeModel {
    /// Prediction for one covariate row at exposure level `a`.
    pub fn predict(&self, covariates: &[f64], a: f64) -> f64 {
        let mut value = self.intercept;
        for (k, beta) in self.exposure_coefficients.iter().enumerate() {
            value += beta * a.powi(k as i32 + 1);
        }
        for (x, gamma) in covariates.iter().zip(&self.covariate_coefficients) {
            value += gamma * x;
        }
        value
    }

    /// Predictions for every unit in the dataset at a common exposure level.
    pub fn predict_all(&self, dataset: &Dataset, a0: f64) -> Vec<f64> {
        let shift: f64 = self
            .exposure_coefficients
            .iter()
            .enumerate()
            .map(|(k, beta)| beta * a0.powi(k as i32 + 1))
            .sum();
        (0..dataset.n())
            .map(|i| {
                let mut value = self.intercept + shift;
                for j in 0..dataset.p() {
                    value += self.covariate_coefficients[j] * dataset.covariates()[(i, j)];
                }
                value
            })
            .collect()
    }
}

/// Fits the outcome model by least squares; a rank-deficient design yields
/// the minimum-norm solution and a recorded warning.
pub fn fit_outcome_model(dataset: &Dataset, degree: usize) -> Result<OutcomeModel> {
    let y = dataset
        .outcome()
        .ok_or_else(|| Error::Invalid("dataset has no outcome column".into()))?;
    if degree < 1 {
        return Err(Error::Invalid("outcome model degree must be at least 1".into()));
    }
    let n = dataset.n();
    let p = dataset.p();
    let cols = 1 + degree + p;
    let a = dataset.exposure();
    let design = DMatrix::from_fn(n, cols, |r, c| {
        if c == 0 {
            1.0
        } else if c <= degree {
            a[r].powi(c as i32)
        } else {
            dataset.covariates()[(r, c - degree - 1)]
        }
    });
    let rhs = DVector::from_column_slice(y);
    let svd = design.svd(true, true);
    let sv_max = svd.singular_values.amax();
    let eps = sv_max * 1e-10;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let beta = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::Invalid(format!("least squares failed: {e}")))?;
    let mut warnings = Vec::new();
    if rank < cols {
        warnings.push(format!(
            "outcome model design is rank deficient (rank {rank} of {cols}); using the minimum-norm solution"
        ));
    }
    Ok(OutcomeModel {
        degree,
        intercept: beta[0],
        exposure_coefficients: (1..=degree).map(|k| beta[k]).collect(),
        covariate_coefficients: (0..p).map(|j| beta[1 + degree + j]).collect(),
        warnings,
    })
}

/// Doubly robust pointwise estimate: the mean model prediction at `a0` plus a
/// kernel-weighted residual correction with the plain kernel mass in the
/// denominator. Returns the estimate and whether the correction was dropped
/// because no kernel mass was available at `a0`.
pub fn dr_estimate(
    dataset: &Dataset,
    model: &OutcomeModel,
    weights: &WeightVector,
    a0: f64,
    kernel: Kernel,
    h: f64,
) -> Result<(f64, bool)> {
    let y = dataset
        .outcome()
        .ok_or_else(|| Error::Invalid("dataset has no outcome column".into()))?;
    check_bandwidth(h)?;
    if weights.len() != dataset.n() {
        return Err(Error::Invalid("weight length does not match dataset rows".into()));
    }
    let predictions = model.predict_all(dataset, a0);
    let n = dataset.n();
    let model_term = predictions.iter().sum::<f64>() / n as f64;
    let a = dataset.exposure();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let k = kernel.scaled(a[i] - a0, h);
        num += (y[i] - predictions[i]) * weights.values()[i] * k;
        den += k;
    }
    if den <= 0.0 {
        return Ok((model_term, true));
    }
    Ok((model_term + num / den, false))
}

/// Weighted local distribution function
/// `F(y | a0) = sum(I(Y <= y) w K_h) / sum(K_h)`.
///
/// The denominator is the plain kernel mass, so the value reaches exactly 1
/// at the outcome maximum only under uniform weights.
pub fn weighted_cdf(
    a: &[f64],
    y: &[f64],
    weights: &WeightVector,
    threshold: f64,
    a0: f64,
    kernel: Kernel,
    h: f64,
) -> Result<f64> {
    check_lengths(a, y, weights)?;
    check_bandwidth(h)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..a.len() {
        let k = kernel.scaled(a[i] - a0, h);
        if y[i] <= threshold {
            num += weights.values()[i] * k;
        }
        den += k;
    }
    if den <= 0.0 {
        return Err(Error::NoLocalData(a0));
    }
    Ok(num / den)
}

/// Local weighted quantile: the smallest observed outcome whose local
/// distribution function reaches `alpha`, or the outcome maximum if none
/// does.
pub fn weighted_quantile(
    a: &[f64],
    y: &[f64],
    weights: &WeightVector,
    alpha: f64,
    a0: f64,
    kernel: Kernel,
    h: f64,
) -> Result<f64> {
    check_lengths(a, y, weights)?;
    check_bandwidth(h)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid(format!(
            "quantile level must lie in (0, 1), got {alpha}"
        )));
    }
    let n = a.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| y[i].total_cmp(&y[j]));
    let mut den = 0.0;
    for i in 0..n {
        den += kernel.scaled(a[i] - a0, h);
    }
    if den <= 0.0 {
        return Err(Error::NoLocalData(a0));
    }
    let mut cumulative = 0.0;
    for &i in &order {
        cumulative += weights.values()[i] * kernel.scaled(a[i] - a0, h);
        if cumulative / den >= alpha {
            return Ok(y[i]);
        }
    }
    Ok(y[order[n - 1]])
}

/// A dose-response curve over a grid of exposure values.
#[derive(Debug, Clone, Serialize)]
pub struct AdrfEstimate {
    pub estimator: String,
    pub kernel: Kernel,
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub estimates: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Evaluates one estimator over a grid (by default 50 points between the 5th
/// and 95th exposure percentiles, with the rule-of-thumb bandwidth).
pub fn adrf_curve(
    dataset: &Dataset,
    weights: &WeightVector,
    estimator: EstimatorKind,
    kernel: Kernel,
    bandwidth: Option<f64>,
    grid: Option<Vec<f64>>,
) -> Result<AdrfEstimate> {
    let y = dataset
        .outcome()
        .ok_or_else(|| Error::Invalid("dataset has no outcome column".into()))?
        .to_vec();
    if weights.len() != dataset.n() {
        return Err(Error::Invalid("weight length does not match dataset rows".into()));
    }
    let a = dataset.exposure().to_vec();
    let h = match bandwidth {
        Some(h) => {
            check_bandwidth(h)?;
            h
        }
        None => default_bandwidth(&a)?,
    };
    let grid = match grid {
        Some(g) => {
            if g.is_empty() {
                return Err(Error::Invalid("grid must not be empty".into()));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid("grid points must be finite".into()));
            }
            g
        }
        None => default_grid(&a, 50)?,
    };

    let mut warnings = Vec::new();
    let model = match estimator {
        EstimatorKind::DoublyRobust { degree } => {
            let model = fit_outcome_model(dataset, degree)?;
            warnings.extend(model.warnings.iter().cloned());
            Some(model)
        }
        _ => None,
    };

    let mut estimates = Vec::with_capacity(grid.len());
    for &a0 in &grid {
        let value = match estimator {
            EstimatorKind::Nw => nw_estimate(&a, &y, weights, a0, kernel, h)?,
            EstimatorKind::NwStabilized => {
                nw_stabilized_estimate(&a, &y, weights, a0, kernel, h)?
            }
            EstimatorKind::LocalLinear => {
                local_linear_estimate(&a, &y, weights, a0, kernel, h)?
            }
            EstimatorKind::DoublyRobust { .. } => {
                let (value, fell_back) =
                    dr_estimate(dataset, model.as_ref().unwrap(), weights, a0, kernel, h)?;
                if fell_back {
                    warnings.push(format!(
                        "no kernel mass at grid point {a0}; using the outcome-model term only"
                    ));
                }
                value
            }
        };
        estimates.push(value);
    }

    Ok(AdrfEstimate {
        estimator: estimator.label(),
        kernel,
        bandwidth: h,
        grid,
        estimates,
        warnings,
    })
}

/// Curve of local weighted outcome quantiles over a grid.
pub fn quantile_curve(
    dataset: &Dataset,
    weights: &WeightVector,
    alpha: f64,
    kernel: Kernel,
    bandwidth: Option<f64>,
    grid: Option<Vec<f64>>,
) -> Result<AdrfEstimate> {
    let y = dataset
        .outcome()
        .ok_or_else(|| Error::Invalid("dataset has no outcome column".into()))?
        .to_vec();
    let a = dataset.exposure().to_vec();
    let h = match bandwidth {
        Some(h) => {
            check_bandwidth(h)?;
            h
        }
        None => default_bandwidth(&a)?,
    };
    let grid = match grid {
        Some(g) if g.is_empty() => return Err(Error::Invalid("grid must not be empty".into())),
        Some(g) => g,
        None => default_grid(&a, 50)?,
    };
    let mut estimates = Vec::with_capacity(grid.len());
    for &a0 in &grid {
        estimates.push(weighted_quantile(&a, &y, weights, alpha, a0, kernel, h)?);
    }
    Ok(AdrfEstimate {
        estimator: format!("quantile({alpha})"),
        kernel,
        bandwidth: h,
        grid,
        estimates,
        warnings: vec![],
    })
}
