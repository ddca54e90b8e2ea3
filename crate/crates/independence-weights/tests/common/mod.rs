//! Naive definitional reference implementations ("oracles") used by the
//! acceptance suite. Everything here is written as plain loops over plain
//! vectors, deliberately independent of the library's linear-algebra paths,
//! so that agreement between the two is meaningful evidence of correctness.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use independence_weights::Dataset;

/// Raw tabular data for the oracle computations: `rows[i]` holds the
/// covariate coordinates of observation `i`.
pub struct RawData {
    pub rows: Vec<Vec<f64>>,
    pub exposure: Vec<f64>,
}

impl RawData {
    /// The same data as a library dataset.
    pub fn to_dataset(&self) -> Dataset {
        let n = self.rows.len();
        let p = self.rows[0].len();
        let covariates = DMatrix::from_fn(n, p, |i, j| self.rows[i][j]);
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Dataset::new(covariates, self.exposure.clone(), None, names)
            .expect("oracle data is finite and consistent")
    }
}

/// Random dataset with mixed column scales and exposure partially driven by
/// the first covariate, so dependence varies from draw to draw.
pub fn random_raw(n: usize, p: usize, rng: &mut ChaCha8Rng) -> RawData {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..p)
                .map(|j| rng.random_range(-3.0..3.0) * if j % 2 == 0 { 1.0 } else { 10.0 })
                .collect()
        })
        .collect();
    let lean = rng.random_range(0.0..1.5);
    let exposure = rows
        .iter()
        .map(|row| rng.random_range(0.0..10.0) + lean * row[0])
        .collect();
    RawData { rows, exposure }
}

/// Strictly positive weights rescaled to sum exactly `n`.
pub fn random_feasible_weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..3.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|&r| r * n as f64 / total).collect()
}

/// Pairwise Euclidean distances between covariate rows.
pub fn euclidean_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..rows[i].len() {
                let diff = rows[i][k] - rows[j][k];
                acc += diff * diff;
            }
            d[i][j] = acc.sqrt();
        }
    }
    d
}

/// Pairwise absolute differences of a scalar column.
pub fn absolute_distances(values: &[f64]) -> Vec<Vec<f64>> {
    let n = values.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            d[i][j] = (values[i] - values[j]).abs();
        }
    }
    d
}

/// Double centering by explicit row, column, and grand means.
pub fn double_center_naive(d: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = d.len();
    let nf = n as f64;
    let row_means: Vec<f64> = d.iter().map(|row| row.iter().sum::<f64>() / nf).collect();
    let col_means: Vec<f64> = (0..n)
        .map(|j| d.iter().map(|row| row[j]).sum::<f64>() / nf)
        .collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            c[i][j] = d[i][j] - row_means[i] - col_means[j] + grand;
        }
    }
    c
}

/// `(1/n^2) sum_kl w_k w_l C_kl D_kl` from the two centered matrices.
pub fn weighted_dcov_naive(cx: &[Vec<f64>], ca: &[Vec<f64>], w: &[f64]) -> f64 {
    let n = w.len();
    let mut acc = 0.0;
    for k in 0..n {
        for l in 0..n {
            acc += w[k] * w[l] * cx[k][l] * ca[k][l];
        }
    }
    acc / (n as f64 * n as f64)
}

/// `(2/n^2) sum w_i d_ij - (1/n^2) sum w_i w_j d_ij - (1/n^2) sum d_ij`.
pub fn energy_distance_naive(d: &[Vec<f64>], w: &[f64]) -> f64 {
    let n = w.len();
    let mut cross = 0.0;
    let mut pair = 0.0;
    let mut plain = 0.0;
    for i in 0..n {
        for j in 0..n {
            cross += w[i] * d[i][j];
            pair += w[i] * w[j] * d[i][j];
            plain += d[i][j];
        }
    }
    (2.0 * cross - pair - plain) / (n as f64 * n as f64)
}

/// Full criterion decomposition from first principles. Returns
/// `(dcov, energy_x, energy_a, total)` with the dimension multipliers applied
/// to the total when requested.
pub fn criterion_naive(data: &RawData, w: &[f64], dim_adjust: bool) -> (f64, f64, f64, f64) {
    let dist_x = euclidean_rows(&data.rows);
    let dist_a = absolute_distances(&data.exposure);
    let cx = double_center_naive(&dist_x);
    let ca = double_center_naive(&dist_a);
    let dcov = weighted_dcov_naive(&cx, &ca, w);
    let energy_x = energy_distance_naive(&dist_x, w);
    let energy_a = energy_distance_naive(&dist_a, w);
    let (c_x, c_a) = if dim_adjust {
        let sp = (data.rows[0].len() as f64).sqrt();
        (sp / (1.0 + sp), 1.0 / (1.0 + sp))
    } else {
        (1.0, 1.0)
    };
    (dcov, energy_x, energy_a, dcov + c_x * energy_x + c_a * energy_a)
}

/// Scaled Epanechnikov kernel `K((t)/h)/h`.
pub fn epanechnikov_naive(t: f64, h: f64) -> f64 {
    let u = t / h;
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u) / h
    } else {
        0.0
    }
}

/// Scaled Gaussian kernel.
pub fn gaussian_naive(t: f64, h: f64) -> f64 {
    let u = t / h;
    (-0.5 * u * u).exp() / ((2.0 * std::f64::consts::PI).sqrt() * h)
}

/// Ratio-form local average: `sum(y w K) / sum(K)`.
pub fn nw_naive(
    a: &[f64],
    y: &[f64],
    w: &[f64],
    a0: f64,
    kernel: impl Fn(f64) -> f64,
) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..a.len() {
        let k = kernel(a[i] - a0);
        num += y[i] * w[i] * k;
        den += k;
    }
    (den > 0.0).then(|| num / den)
}

/// Stabilized local average: `sum(y w K) / sum(w K)`.
pub fn nw_stabilized_naive(
    a: &[f64],
    y: &[f64],
    w: &[f64],
    a0: f64,
    kernel: impl Fn(f64) -> f64,
) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..a.len() {
        let k = w[i] * kernel(a[i] - a0);
        num += y[i] * k;
        den += k;
    }
    (den > 0.0).then(|| num / den)
}

/// Intercept of the local weighted least-squares line through `(a - a0, y)`,
/// solved in closed form from the 2x2 normal equations.
pub fn local_linear_naive(
    a: &[f64],
    y: &[f64],
    w: &[f64],
    a0: f64,
    kernel: impl Fn(f64) -> f64,
) -> Option<f64> {
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut t0 = 0.0;
    let mut t1 = 0.0;
    for i in 0..a.len() {
        let omega = w[i] * kernel(a[i] - a0);
        let d = a[i] - a0;
        s0 += omega;
        s1 += omega * d;
        s2 += omega * d * d;
        t0 += omega * y[i];
        t1 += omega * d * y[i];
    }
    let det = s0 * s2 - s1 * s1;
    (det.abs() > 0.0).then(|| (s2 * t0 - s1 * t1) / det)
}

/// Least squares via normal equations and Gauss-Jordan elimination with
/// partial pivoting. Adequate for the small well-conditioned designs the
/// acceptance tests build.
pub fn least_squares_naive(design: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = design.len();
    let p = design[0].len();
    // Normal equations: (X'X) beta = X'y.
    let mut xtx = vec![vec![0.0; p + 1]; p];
    for r in 0..p {
        for c in 0..p {
            let mut acc = 0.0;
            for i in 0..n {
                acc += design[i][r] * design[i][c];
            }
            xtx[r][c] = acc;
        }
        let mut acc = 0.0;
        for i in 0..n {
            acc += design[i][r] * y[i];
        }
        xtx[r][p] = acc;
    }
    // Gauss-Jordan with partial pivoting on the augmented system.
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| xtx[i][col].abs().total_cmp(&xtx[j][col].abs()))
            .expect("non-empty pivot range");
        xtx.swap(col, pivot);
        let lead = xtx[col][col];
        assert!(lead.abs() > 0.0, "singular normal equations in oracle");
        for c in col..=p {
            xtx[col][c] /= lead;
        }
        for r in 0..p {
            if r != col {
                let factor = xtx[r][col];
                for c in col..=p {
                    xtx[r][c] -= factor * xtx[col][c];
                }
            }
        }
    }
    (0..p).map(|r| xtx[r][p]).collect()
}

/// Doubly robust reference: fit the outcome regression `y ~ [1, a, x]` by the
/// naive least squares above, then add the weighted local residual correction
/// with the plain kernel mass in the denominator. Residuals are taken against
/// the prediction at the evaluation point `a0` — the correction estimates the
/// local mean of `Y - mu_hat(X, a0)` — not against the fit at the observed
/// exposure.
#[allow(clippy::too_many_arguments)]
pub fn dr_naive(
    rows: &[Vec<f64>],
    a: &[f64],
    y: &[f64],
    w: &[f64],
    a0: f64,
    kernel: impl Fn(f64) -> f64,
) -> f64 {
    let n = rows.len();
    let design: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![1.0, a[i]];
            row.extend_from_slice(&rows[i]);
            row
        })
        .collect();
    let beta = least_squares_naive(&design, y);
    let predict_at_a0 = |row: &[f64]| -> f64 {
        let mut value = beta[0] + beta[1] * a0;
        for (k, x) in row.iter().enumerate() {
            value += beta[2 + k] * x;
        }
        value
    };
    let model_term = (0..n).map(|i| predict_at_a0(&rows[i])).sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let k = kernel(a[i] - a0);
        num += (y[i] - predict_at_a0(&rows[i])) * w[i] * k;
        den += k;
    }
    if den > 0.0 {
        model_term + num / den
    } else {
        model_term
    }
}
