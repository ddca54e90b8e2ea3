//! Weighted dependence measures between covariates and a continuous exposure.
//!
//! The central quantity is the weighted distance covariance
//! `V2(w) = (1/n^2) sum_kl w_k w_l C_kl D_kl`, where `C` and `D` are the doubly
//! centered distance matrices of the covariates and the exposure. Two weighted
//! energy distances measure how far the reweighted marginals drift from the
//! unweighted ones; the combined criterion is the objective the solver
//! minimizes. With all weights equal to 1 the criterion reduces to the plain
//! sample distance covariance.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::{DistanceStructures, WeightVector};

/// Decomposition of the independence criterion at a given weight vector.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionValue {
    /// Weighted distance covariance between covariates and exposure.
    pub weighted_dcov: f64,
    /// Weighted energy distance between the reweighted and the unweighted
    /// covariate marginal.
    pub energy_x: f64,
    /// Weighted energy distance between the reweighted and the unweighted
    /// exposure marginal.
    pub energy_a: f64,
    /// `weighted_dcov + c_x * energy_x + c_a * energy_a`.
    pub total: f64,
    /// Whether the dimension adjustment was applied.
    #[serde(skip)]
    pub dim_adjusted: bool,
    /// Multiplier on `energy_x`.
    pub c_x: f64,
    /// Multiplier on `energy_a`.
    pub c_a: f64,
}

/// Multipliers `(c_x, c_a)` that stop the covariate energy distance from
/// dominating the criterion as the number of columns grows:
/// `c_x = sqrt(p) / (1 + sqrt(p))`, `c_a = 1 / (1 + sqrt(p))`. They sum to 1
/// and their ratio is `sqrt(p)`.
pub fn dimension_adjustment(p: usize) -> (f64, f64) {
    let sp = (p as f64).sqrt();
    (sp / (1.0 + sp), 1.0 / (1.0 + sp))
}

/// Weighted distance covariance `(1/n^2) sum_kl w_k w_l C_kl D_kl`.
pub fn weighted_dcov(structures: &DistanceStructures, weights: &WeightVector) -> f64 {
    let n = structures.n();
    assert_eq!(weights.len(), n, "weight length must match dataset rows");
    let w = weights.values();
    let c = &structures.centered_x;
    let d = &structures.centered_a;
    let mut acc = 0.0;
    for k in 0..n {
        let wk = w[k];
        let mut inner = 0.0;
        for l in 0..n {
            inner += w[l] * c[(k, l)] * d[(k, l)];
        }
        acc += wk * inner;
    }
    acc / (n as f64 * n as f64)
}

/// Weighted energy distance between the weighted and unweighted empirical
/// distributions sharing the same support points:
/// `(2/n^2) sum_ij w_i d_ij - (1/n^2) sum_ij w_i w_j d_ij - (1/n^2) sum_ij d_ij`.
pub fn weighted_energy_distance(distances: &DMatrix<f64>, weights: &WeightVector) -> f64 {
    let n = distances.nrows();
    assert_eq!(weights.len(), n, "weight length must match distance matrix");
    let w = weights.values();
    let n2 = n as f64 * n as f64;
    let mut cross = 0.0;
    let mut pair = 0.0;
    let mut plain = 0.0;
    for i in 0..n {
        let wi = w[i];
        for j in 0..n {
            let d = distances[(i, j)];
            cross += wi * d;
            pair += wi * w[j] * d;
            plain += d;
        }
    }
    (2.0 * cross - pair - plain) / n2
}

/// Evaluates the full criterion
/// `V2(w) + c_x * E(X, w) + c_a * E(A, w)` at the given weights. `p` is the
/// number of covariate columns after indicator expansion; it only matters when
/// `dim_adjust` is true, otherwise both multipliers are 1.
pub fn criterion(
    structures: &DistanceStructures,
    weights: &WeightVector,
    dim_adjust: bool,
    p: usize,
) -> CriterionValue {
    let (c_x, c_a) = if dim_adjust {
        dimension_adjustment(p)
    } else {
        (1.0, 1.0)
    };
    let dcov = weighted_dcov(structures, weights);
    let energy_x = weighted_energy_distance(&structures.dist_x, weights);
    let energy_a = weighted_energy_distance(&structures.dist_a, weights);
    CriterionValue {
        weighted_dcov: dcov,
        energy_x,
        energy_a,
        total: dcov + c_x * energy_x + c_a * energy_a,
        dim_adjusted: dim_adjust,
        c_x,
        c_a,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(x: &[f64], a: &[f64]) -> Dataset {
        Dataset::new(
            DMatrix::from_column_slice(x.len(), 1, x),
            a.to_vec(),
            None,
            vec!["x1".into()],
        )
        .unwrap()
    }

    /// Definitional re-implementation with explicit mean loops, used as an
    /// independent oracle for the optimized versions.
    fn naive_dcov(x: &[Vec<f64>], a: &[f64], w: &[f64]) -> f64 {
        let n = a.len();
        let mut cx = vec![vec![0.0; n]; n];
        let mut da = vec![vec![0.0; n]; n];
        for k in 0..n {
            for l in 0..n {
                cx[k][l] = x[k]
                    .iter()
                    .zip(&x[l])
                    .map(|(u, v)| (u - v) * (u - v))
                    .sum::<f64>()
                    .sqrt();
                da[k][l] = (a[k] - a[l]).abs();
            }
        }
        let center = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
            let grand: f64 = m.iter().flatten().sum::<f64>() / (n * n) as f64;
            let mut out = vec![vec![0.0; n]; n];
            for k in 0..n {
                for l in 0..n {
                    let row: f64 = m[k].iter().sum::<f64>() / n as f64;
                    let col: f64 = m.iter().map(|r| r[l]).sum::<f64>() / n as f64;
                    out[k][l] = m[k][l] - row - col + grand;
                }
            }
            out
        };
        let c = center(&cx);
        let d = center(&da);
        let mut acc = 0.0;
        for k in 0..n {
            for l in 0..n {
                acc += w[k] * w[l] * c[k][l] * d[k][l];
            }
        }
        acc / (n * n) as f64
    }

    #[test]
    fn two_point_dcov_matches_hand_value() {
        let ds = dataset(&[0.0, 1.0], &[0.0, 2.0]);
        let s = DistanceStructures::compute(&ds);
        let v = weighted_dcov(&s, &WeightVector::uniform(2));
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn constant_covariate_gives_zero_dcov() {
        let ds = dataset(&[3.0, 3.0, 3.0, 3.0], &[1.0, 2.0, 3.0, 4.0]);
        let s = DistanceStructures::compute(&ds);
        let v = weighted_dcov(&s, &WeightVector::uniform(4));
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn dcov_matches_naive_oracle_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.random_range(2..=20usize);
            let p = rng.random_range(1..=3usize);
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..p).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..2.0)).collect();
            let sum: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v * n as f64 / sum).collect();

            let flat: Vec<f64> = x.iter().flatten().copied().collect();
            let ds = Dataset::new(
                DMatrix::from_fn(n, p, |r, c| flat[r * p + c]),
                a.clone(),
                None,
                (0..p).map(|j| format!("x{j}")).collect(),
            )
            .unwrap();
            let s = DistanceStructures::compute(&ds);
            let wv = WeightVector::new(w.clone(), "test").unwrap();
            assert_abs_diff_eq!(
                weighted_dcov(&s, &wv),
                naive_dcov(&x, &a, &w),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn energy_distance_is_zero_at_uniform_weights() {
        let ds = dataset(&[0.4, -1.0, 2.2, 0.0, 5.0], &[1.0, 4.0, 2.0, 8.0, 3.0]);
        let s = DistanceStructures::compute(&ds);
        let w = WeightVector::uniform(5);
        assert_abs_diff_eq!(weighted_energy_distance(&s.dist_x, &w), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(weighted_energy_distance(&s.dist_a, &w), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn two_point_energy_distance_closed_form() {
        // Two points at distance d with weights (w1, w2) summing to 2 give
        // (d/2) * (1 - w1 * w2).
        let ds = dataset(&[0.0, 1.0], &[0.0, 1.0]);
        let s = DistanceStructures::compute(&ds);
        let w = WeightVector::new(vec![2.0, 0.0], "test").unwrap();
        assert_abs_diff_eq!(weighted_energy_distance(&s.dist_x, &w), 0.5, epsilon = 1e-15);
        let w = WeightVector::new(vec![1.5, 0.5], "test").unwrap();
        assert_abs_diff_eq!(
            weighted_energy_distance(&s.dist_x, &w),
            0.5 * (1.0 - 0.75),
            epsilon = 1e-15
        );
    }

    #[test]
    fn dimension_adjustment_values() {
        let (cx, ca) = dimension_adjustment(1);
        assert_abs_diff_eq!(cx, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ca, 0.5, epsilon = 1e-15);
        let (cx, ca) = dimension_adjustment(4);
        assert_abs_diff_eq!(cx, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ca, 1.0 / 3.0, epsilon = 1e-15);
        for p in 1..20 {
            let (cx, ca) = dimension_adjustment(p);
            assert_abs_diff_eq!(cx + ca, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(cx / ca, (p as f64).sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn criterion_at_uniform_weights_is_plain_dcov() {
        let ds = dataset(&[0.4, -1.0, 2.2, 0.0], &[1.0, 4.0, 2.0, 8.0]);
        let s = DistanceStructures::compute(&ds);
        let w = WeightVector::uniform(4);
        let c = criterion(&s, &w, true, ds.p());
        assert_abs_diff_eq!(c.total, c.weighted_dcov, epsilon = 1e-12);
        assert_abs_diff_eq!(c.energy_x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.energy_a, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dim_adjustment_changes_total_when_energies_are_nonzero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 12;
        let p = 3;
        let ds = Dataset::new(
            DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0)),
            (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            None,
            (0..p).map(|j| format!("x{j}")).collect(),
        )
        .unwrap();
        let s = DistanceStructures::compute(&ds);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let sum: f64 = raw.iter().sum();
        let w =
            WeightVector::new(raw.iter().map(|v| v * n as f64 / sum).collect(), "test").unwrap();
        let plain = criterion(&s, &w, false, p);
        let adjusted = criterion(&s, &w, true, p);
        assert_abs_diff_eq!(plain.weighted_dcov, adjusted.weighted_dcov, epsilon = 1e-14);
        assert!(
            (plain.total - adjusted.total).abs() > 1e-10,
            "adjustment should move the total for p > 1 with nonzero energies"
        );
        assert_eq!(plain.c_x, 1.0);
        assert_eq!(plain.c_a, 1.0);
    }

    #[test]
    fn criterion_serializes_with_expected_keys() {
        let ds = dataset(&[0.0, 1.0], &[0.0, 2.0]);
        let s = DistanceStructures::compute(&ds);
        let c = criterion(&s, &WeightVector::uniform(2), true, 1);
        let json = serde_json::to_value(&c).unwrap();
        let obj = json.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(|k| k.as_str()).collect();
        keys.sort();
        assert_eq!(
            keys,
            vec!["c_a", "c_x", "energy_a", "energy_x", "total", "weighted_dcov"]
        );
    }
}
