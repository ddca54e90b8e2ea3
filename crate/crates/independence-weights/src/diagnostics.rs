//! Balance diagnostics and the stabilized normal-GPS comparator.
//!
//! The balance table summarizes absolute weighted Pearson correlations between
//! generated covariate features (powers of continuous columns, pairwise
//! interactions) and powers of the exposure, together with the effective
//! sample size and the independence criterion. The GPS comparator reweights by
//! a ratio of normal densities estimated from a linear exposure model.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{Dataset, DistanceStructures, WeightVector};
use crate::dependence::{criterion, CriterionValue};
use crate::error::{Error, Result};
use crate::util::{mean, quantile_type7, sample_sd};

/// Effective sample size `(sum w)^2 / (sum w^2)`.
pub fn effective_sample_size(weights: &WeightVector) -> f64 {
    let s: f64 = weights.values().iter().sum();
    let s2: f64 = weights.values().iter().map(|v| v * v).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Weighted Pearson correlation with weights normalized to sum 1.
pub fn weighted_correlation(x: &[f64], a: &[f64], weights: &WeightVector) -> Result<f64> {
    let n = x.len();
    if a.len() != n || weights.len() != n {
        return Err(Error::Invalid(format!(
            "weighted_correlation length mismatch: {} / {} / {}",
            n,
            a.len(),
            weights.len()
        )));
    }
    let w = weights.values();
    let sw: f64 = w.iter().sum();
    let mx: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() / sw;
    let ma: f64 = w.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>() / sw;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut va = 0.0;
    for i in 0..n {
        let wi = w[i] / sw;
        let dx = x[i] - mx;
        let da = a[i] - ma;
        cov += wi * dx * da;
        vx += wi * dx * dx;
        va += wi * da * da;
    }
    let x_constant = x.iter().all(|&v| v == x[0]);
    let a_constant = a.iter().all(|&v| v == a[0]);
    if x_constant || a_constant || vx <= 0.0 || va <= 0.0 {
        return Err(Error::DegenerateColumn("weighted_correlation input".into()));
    }
    Ok((cov / (vx.sqrt() * va.sqrt())).clamp(-1.0, 1.0))
}

/// One |weighted correlation| entry of the balance table.
#[derive(Debug, Clone)]
pub struct BalancePair {
    pub feature: String,
    pub exposure_power: u32,
    pub abs_correlation: f64,
}

/// Summary of weighted-correlation balance together with ESS and the
/// independence criterion (reported without dimension adjustment so that
/// `total = weighted_dcov + energy_x + energy_a` exactly).
#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub ess: f64,
    pub criterion: CriterionValue,
    pub corr_mean: f64,
    pub corr_sd: f64,
    pub corr_median: f64,
    pub corr_p95: f64,
    pub corr_max: f64,
    pub n_pairs: usize,
    /// Features (or exposure powers) skipped for zero weighted variance.
    pub skipped: usize,
    #[serde(skip)]
    pub pairs: Vec<BalancePair>,
}

fn weighted_variance_is_zero(values: &[f64], weights: &WeightVector) -> bool {
    let w = weights.values();
    let sw: f64 = w.iter().sum();
    let m: f64 = w.iter().zip(values).map(|(wi, v)| wi * v).sum::<f64>() / sw;
    let var: f64 = w
        .iter()
        .zip(values)
        .map(|(wi, v)| wi / sw * (v - m) * (v - m))
        .sum();
    let constant = values.iter().all(|&v| v == values[0]);
    constant || var <= 0.0
}

/// Balance table with default powers (5), including pairwise interactions.
pub fn default_balance_table(dataset: &Dataset, weights: &WeightVector) -> Result<BalanceReport> {
    balance_table(dataset, weights, 5, true, 5)
}

/// Computes absolute weighted correlations between covariate features and
/// exposure powers `1..=max_exposure_power` and summarizes them.
///
/// Features are the powers `1..=max_covariate_power` of each continuous
/// column (indicator columns enter once, unpowered) plus, when requested, the
/// pairwise products of distinct columns.
pub fn balance_table(
    dataset: &Dataset,
    weights: &WeightVector,
    max_exposure_power: u32,
    include_interactions: bool,
    max_covariate_power: u32,
) -> Result<BalanceReport> {
    if weights.len() != dataset.n() {
        return Err(Error::Invalid(
            "weight length does not match dataset rows".into(),
        ));
    }
    if max_exposure_power < 1 || max_covariate_power < 1 {
        return Err(Error::Invalid("powers must be at least 1".into()));
    }
    let p = dataset.p();
    let names = dataset.column_names();

    let mut features: Vec<(String, Vec<f64>)> = Vec::new();
    for j in 0..p {
        let col = dataset.column(j);
        if dataset.is_indicator(j) {
            features.push((names[j].clone(), col));
        } else {
            for k in 1..=max_covariate_power {
                let powered: Vec<f64> = col.iter().map(|v| v.powi(k as i32)).collect();
                features.push((format!("{}^{}", names[j], k), powered));
            }
        }
    }
    if include_interactions {
        for j in 0..p {
            for l in (j + 1)..p {
                let cj = dataset.column(j);
                let cl = dataset.column(l);
                let product: Vec<f64> = cj.iter().zip(&cl).map(|(u, v)| u * v).collect();
                features.push((format!("{}*{}", names[j], names[l]), product));
            }
        }
    }

    let mut skipped = 0usize;
    let mut exposure_powers: Vec<(u32, Vec<f64>)> = Vec::new();
    for e in 1..=max_exposure_power {
        let powered: Vec<f64> = dataset.exposure().iter().map(|v| v.powi(e as i32)).collect();
        if weighted_variance_is_zero(&powered, weights) {
            skipped += 1;
        } else {
            exposure_powers.push((e, powered));
        }
    }

    let mut pairs = Vec::new();
    for (label, values) in &features {
        if weighted_variance_is_zero(values, weights) {
            skipped += 1;
            continue;
        }
        for (e, powered) in &exposure_powers {
            let r = weighted_correlation(values, powered, weights)?;
            pairs.push(BalancePair {
                feature: label.clone(),
                exposure_power: *e,
                abs_correlation: r.abs(),
            });
        }
    }
    if pairs.is_empty() {
        return Err(Error::Invalid(
            "no non-degenerate feature/exposure pairs".into(),
        ));
    }

    let abs: Vec<f64> = pairs.iter().map(|p| p.abs_correlation).collect();
    let structures = DistanceStructures::compute(dataset);
    let report = BalanceReport {
        ess: effective_sample_size(weights),
        criterion: criterion(&structures, weights, false, p),
        corr_mean: mean(&abs),
        corr_sd: sample_sd(&abs),
        corr_median: quantile_type7(&abs, 0.5),
        corr_p95: quantile_type7(&abs, 0.95),
        corr_max: abs.iter().fold(0.0f64, |m, v| m.max(*v)),
        n_pairs: abs.len(),
        skipped,
        pairs,
    };
    Ok(report)
}

/// Raw stabilized GPS weights `f_A(A_i) / f_{A|X}(A_i | X_i)` under normal
/// models: the conditional density comes from a least-squares fit of A on X,
/// the marginal from the sample mean and variance of A (both with the `1/n`
/// variance convention). No rescaling or truncation is applied.
pub fn gps_normal_raw(dataset: &Dataset) -> Result<Vec<f64>> {
    let n = dataset.n();
    let p = dataset.p();
    if n <= p + 2 {
        return Err(Error::Invalid(format!(
            "need n > p + 2 for the GPS fit, got n={n}, p={p}"
        )));
    }
    let a = dataset.exposure();
    let design = DMatrix::from_fn(n, p + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            dataset.covariates()[(r, c - 1)]
        }
    });
    let y = DVector::from_column_slice(a);
    let svd = design.clone().svd(true, true);
    let eps = svd.singular_values.amax() * 1e-12;
    let beta = svd
        .solve(&y, eps)
        .map_err(|e| Error::Invalid(format!("least squares failed: {e}")))?;
    let fitted = design * beta;

    let nf = n as f64;
    let mean_a = a.iter().sum::<f64>() / nf;
    let var_a = a.iter().map(|v| (v - mean_a).powi(2)).sum::<f64>() / nf;
    let sigma2 = a
        .iter()
        .enumerate()
        .map(|(i, v)| (v - fitted[i]).powi(2))
        .sum::<f64>()
        / nf;
    if !(sigma2 > var_a * 1e-12) {
        return Err(Error::DeterministicExposure);
    }

    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let dm = a[i] - mean_a;
        let dc = a[i] - fitted[i];
        let log_ratio = 0.5 * (sigma2 / var_a).ln() - dm * dm / (2.0 * var_a)
            + dc * dc / (2.0 * sigma2);
        let w = log_ratio.exp();
        if !w.is_finite() {
            return Err(Error::Invalid(format!(
                "non-finite gps weight at row {}",
                i + 1
            )));
        }
        raw.push(w);
    }
    Ok(raw)
}

/// Stabilized GPS comparator weights: raw density-ratio weights rescaled to
/// sum `n`, truncated at `truncate_at`, then rescaled to sum `n` again.
pub fn gps_normal_weights(dataset: &Dataset, truncate_at: f64) -> Result<WeightVector> {
    if !(truncate_at > 0.0) {
        return Err(Error::Invalid("truncate_at must be positive".into()));
    }
    let raw = gps_normal_raw(dataset)?;
    let n = raw.len() as f64;
    let sum: f64 = raw.iter().sum();
    let mut scaled: Vec<f64> = raw.iter().map(|v| v * n / sum).collect();
    for v in &mut scaled {
        if *v > truncate_at {
            *v = truncate_at;
        }
    }
    let sum2: f64 = scaled.iter().sum();
    for v in &mut scaled {
        *v *= n / sum2;
    }
    WeightVector::new(scaled, "gps-normal")
}
