//! Quadratic-program construction and solution for independence weights.
//!
//! The criterion is quadratic in the weights, so minimizing it subject to
//! `sum(w) = n`, optional moment constraints, and `w >= 0` is a QP:
//!
//! ```text
//! minimize    w' P w + q' w + constant
//! subject to  A_eq w = b,  w >= 0
//! ```
//!
//! `P` collects the doubly-centered distance-product term plus the quadratic
//! parts of the two energy distances and an optional ridge `lambda/n^2 * I`.
//! The problem is solved with an over-relaxed ADMM iteration; feasible
//! iterates are tracked along the way so the returned weights never do worse
//! than uniform weights on the penalized objective.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SVD};
use serde::Serialize;

use crate::data::{Dataset, DistanceStructures, WeightVector};
use crate::dependence::{criterion, dimension_adjustment, CriterionValue};
use crate::diagnostics::effective_sample_size;
use crate::error::{Error, Result};

/// Largest moment power accepted in a [`MomentSpec`].
pub const MAX_MOMENT_POWER: u32 = 5;

const CHECK_INTERVAL: usize = 25;
const DYKSTRA_TOL: f64 = 1e-12;
const DYKSTRA_TRACK_ITERS: usize = 2_000;
const DYKSTRA_FULL_ITERS: usize = 25_000;
const FEASIBILITY_TOL: f64 = 1e-6;

/// Tuning knobs for the ADMM solver.
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    /// Ridge penalty `lambda/n^2 * sum(w^2)` added to the criterion.
    pub lambda: f64,
    pub max_iterations: usize,
    pub primal_tolerance: f64,
    pub dual_tolerance: f64,
    /// Scale factor for the ADMM penalty parameter.
    pub admm_rho: f64,
    /// Reserved for randomized restarts; the deterministic path ignores it.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 0.0,
            max_iterations: 50_000,
            primal_tolerance: 1e-6,
            dual_tolerance: 1e-6,
            admm_rho: 1.0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Invalid("lambda must be finite and >= 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Invalid("max_iterations must be at least 1".into()));
        }
        if !(self.primal_tolerance > 0.0) || !(self.dual_tolerance > 0.0) {
            return Err(Error::Invalid("tolerances must be positive".into()));
        }
        if !(self.admm_rho > 0.0) || !self.admm_rho.is_finite() {
            return Err(Error::Invalid("admm_rho must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Which moments to constrain exactly alongside the distance criterion.
///
/// `covariate_moments[j]` lists the powers of column `j` whose weighted
/// Pearson correlation with each listed exposure power must vanish. For every
/// involved moment the builder also adds a mean-preservation row, which makes
/// the weighted correlations exactly zero rather than merely centered.
#[derive(Debug, Clone)]
pub struct MomentSpec {
    covariate_moments: Vec<Vec<u32>>,
    exposure_moments: Vec<u32>,
}

impl MomentSpec {
    pub fn new(covariate_moments: Vec<Vec<u32>>, exposure_moments: Vec<u32>) -> Result<Self> {
        let mut covariate_moments = covariate_moments;
        let mut exposure_moments = exposure_moments;
        for powers in covariate_moments.iter_mut().chain(std::iter::once(&mut exposure_moments)) {
            for &k in powers.iter() {
                if k < 1 || k > MAX_MOMENT_POWER {
                    return Err(Error::Invalid(format!(
                        "moment powers must lie in 1..={MAX_MOMENT_POWER}, got {k}"
                    )));
                }
            }
            powers.sort_unstable();
            powers.dedup();
        }
        Ok(MomentSpec {
            covariate_moments,
            exposure_moments,
        })
    }

    /// First moments of every covariate against the first exposure moment.
    pub fn first_order(p: usize) -> Self {
        MomentSpec {
            covariate_moments: vec![vec![1]; p],
            exposure_moments: vec![1],
        }
    }

    pub fn covariate_moments(&self) -> &[Vec<u32>] {
        &self.covariate_moments
    }

    pub fn exposure_moments(&self) -> &[u32] {
        &self.exposure_moments
    }
}

/// The assembled quadratic program.
///
/// The first equality row is always the total-mass row `sum(w) = n`; all
/// further rows are homogeneous (zero right-hand side), which the final
/// rescaling step relies on.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub quad: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub lower_bounds: DVector<f64>,
    /// Constant term so that `objective(w)` equals the (dimension-adjusted)
    /// criterion plus the ridge penalty for every `w`.
    pub constant: f64,
    pub row_labels: Vec<String>,
    pub warnings: Vec<String>,
}

impl QpProblem {
    /// Objective value `w' P w + q' w + constant` at `w`.
    pub fn objective(&self, w: &[f64]) -> f64 {
        let x = DVector::from_column_slice(w);
        let quad = (x.transpose() * &self.quad * &x)[(0, 0)];
        quad + self.linear.dot(&x) + self.constant
    }
}

fn push_constraint_row(
    rows: &mut Vec<Vec<f64>>,
    rhs: &mut Vec<f64>,
    labels: &mut Vec<String>,
    warnings: &mut Vec<String>,
    label: String,
    row: Vec<f64>,
    rhs_value: f64,
    scale: f64,
) {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-10 * scale.max(1e-12)) {
        warnings.push(format!("dropped degenerate constraint row '{label}'"));
        return;
    }
    rows.push(row.into_iter().map(|v| v / norm).collect());
    rhs.push(rhs_value / norm);
    labels.push(label);
}

fn powered_deviation(values: &[f64], k: u32) -> (Vec<f64>, f64) {
    let powered: Vec<f64> = values.iter().map(|v| v.powi(k as i32)).collect();
    let mean = powered.iter().sum::<f64>() / powered.len() as f64;
    let scale = powered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (powered.iter().map(|v| v - mean).collect(), scale)
}

/// Builds the QP for a dataset. `dim_adjust` toggles the dimension adjustment
/// of the two energy terms; `moments` adds exact decorrelation constraints.
pub fn build_qp(
    dataset: &Dataset,
    structures: &DistanceStructures,
    config: &SolverConfig,
    dim_adjust: bool,
    moments: Option<&MomentSpec>,
) -> Result<QpProblem> {
    config.validate()?;
    let n = dataset.n();
    let p = dataset.p();
    let nf = n as f64;
    let n2 = nf * nf;
    let (c_x, c_a) = if dim_adjust {
        dimension_adjustment(p)
    } else {
        (1.0, 1.0)
    };

    let cx = &structures.centered_x;
    let ca = &structures.centered_a;
    let dx = &structures.dist_x;
    let da = &structures.dist_a;

    let mut quad = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            quad[(i, j)] = cx[(i, j)] * ca[(i, j)] / n2
                - c_x * dx[(i, j)] / n2
                - c_a * da[(i, j)] / n2;
        }
        quad[(i, i)] += config.lambda / n2;
    }

    let mut linear = DVector::zeros(n);
    let mut total_dx = 0.0;
    let mut total_da = 0.0;
    for i in 0..n {
        let mut row_dx = 0.0;
        let mut row_da = 0.0;
        for j in 0..n {
            row_dx += dx[(i, j)];
            row_da += da[(i, j)];
        }
        linear[i] = c_x * 2.0 * row_dx / n2 + c_a * 2.0 * row_da / n2;
        total_dx += row_dx;
        total_da += row_da;
    }
    let constant = -c_x * total_dx / n2 - c_a * total_da / n2;

    let mut rows: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut rhs: Vec<f64> = vec![nf];
    let mut labels: Vec<String> = vec!["sum(w) = n".into()];
    let mut warnings: Vec<String> = Vec::new();

    if let Some(spec) = moments {
        if spec.covariate_moments().len() != p {
            return Err(Error::Invalid(format!(
                "moment spec covers {} columns but the dataset has {p}",
                spec.covariate_moments().len()
            )));
        }
        let names = dataset.column_names();
        let exposure_devs: Vec<(u32, Vec<f64>, f64)> = spec
            .exposure_moments()
            .iter()
            .map(|&ka| {
                let (dev, scale) = powered_deviation(dataset.exposure(), ka);
                (ka, dev, scale)
            })
            .collect();
        for (ka, dev, scale) in &exposure_devs {
            push_constraint_row(
                &mut rows,
                &mut rhs,
                &mut labels,
                &mut warnings,
                format!("preserve mean of exposure^{ka}"),
                dev.clone(),
                0.0,
                *scale,
            );
        }
        for (j, powers) in spec.covariate_moments().iter().enumerate() {
            let col = dataset.column(j);
            for &kx in powers {
                let (dev_x, scale_x) = powered_deviation(&col, kx);
                push_constraint_row(
                    &mut rows,
                    &mut rhs,
                    &mut labels,
                    &mut warnings,
                    format!("preserve mean of {}^{kx}", names[j]),
                    dev_x.clone(),
                    0.0,
                    scale_x,
                );
                let dev_scale_x = dev_x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (ka, dev_a, _) in &exposure_devs {
                    let row: Vec<f64> = dev_x.iter().zip(dev_a).map(|(u, v)| u * v).collect();
                    let dev_scale_a = dev_a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    push_constraint_row(
                        &mut rows,
                        &mut rhs,
                        &mut labels,
                        &mut warnings,
                        format!("decorrelate {}^{kx} with exposure^{ka}", names[j]),
                        row,
                        0.0,
                        dev_scale_x * dev_scale_a,
                    );
                }
            }
        }
    }

    let m = rows.len();
    let eq_matrix = DMatrix::from_fn(m, n, |r, c| rows[r][c]);
    let eq_rhs = DVector::from_vec(rhs);

    Ok(QpProblem {
        quad,
        linear,
        eq_matrix,
        eq_rhs,
        lower_bounds: DVector::zeros(n),
        constant,
        row_labels: labels,
        warnings,
    })
}

struct FeasibilityProjector {
    aeq: DMatrix<f64>,
    rhs: DVector<f64>,
    svd: SVD<f64, Dyn, Dyn>,
    eps: f64,
    rank: usize,
}

impl FeasibilityProjector {
    fn new(aeq: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        let svd = aeq.clone().svd(true, true);
        let sv_max = if svd.singular_values.is_empty() {
            0.0
        } else {
            svd.singular_values.amax()
        };
        let eps = sv_max * 1e-10;
        let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
        FeasibilityProjector {
            aeq,
            rhs,
            svd,
            eps,
            rank,
        }
    }

    /// Least-squares projection onto the affine set `A w = b`.
    fn affine(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = &self.aeq * x - &self.rhs;
        match self.svd.solve(&r, self.eps) {
            Ok(correction) => x - correction,
            Err(_) => x.clone(),
        }
    }

    fn residual(&self, x: &DVector<f64>) -> f64 {
        (&self.aeq * x - &self.rhs).amax()
    }

    fn rhs_scale(&self) -> f64 {
        self.rhs.amax().max(1.0)
    }

    fn describe_violations(&self, x: &DVector<f64>, labels: &[String]) -> String {
        let r = &self.aeq * x - &self.rhs;
        let mut by_size: Vec<(usize, f64)> =
            r.iter().enumerate().map(|(i, v)| (i, v.abs())).collect();
        by_size.sort_by(|a, b| b.1.total_cmp(&a.1));
        let worst: Vec<String> = by_size
            .iter()
            .take(3)
            .filter(|(_, v)| *v > 0.0)
            .map(|(i, v)| {
                let label = labels
                    .get(*i)
                    .cloned()
                    .unwrap_or_else(|| format!("row {i}"));
                format!("'{label}' (violation {v:.3e})")
            })
            .collect();
        format!(
            "equality constraints cannot be satisfied with nonnegative weights; worst rows: {}",
            worst.join(", ")
        )
    }
}

/// Dykstra alternation between the affine set and the box `w >= lower`.
fn dykstra(
    projector: &FeasibilityProjector,
    lower: &DVector<f64>,
    x0: &DVector<f64>,
    max_iters: usize,
) -> DVector<f64> {
    let n = x0.len();
    let mut x = x0.clone();
    let mut p = DVector::zeros(n);
    let mut q = DVector::zeros(n);
    let scale = projector.rhs_scale();
    let mut last_best = f64::INFINITY;
    for iter in 0..max_iters {
        let t = &x + &p;
        let y = projector.affine(&t);
        p = t - &y;
        let t2 = &y + &q;
        let projected = DVector::from_fn(n, |i, _| t2[i].max(lower[i]));
        q = t2 - &projected;
        x = projected;
        let r = projector.residual(&x);
        if r <= DYKSTRA_TOL * scale {
            break;
        }
        if (iter + 1) % 500 == 0 {
            if r > last_best - 1e-14 * scale {
                break;
            }
            last_best = r;
        }
    }
    x
}

/// Convergence information for a solved QP.
#[derive(Debug, Clone, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub warnings: Vec<String>,
}

/// Solves the QP with over-relaxed ADMM and returns cleaned-up weights.
///
/// The returned vector is exactly nonnegative and rescaled so the total-mass
/// row holds; every tracked candidate passes through a Dykstra projection, so
/// the result is feasible and its objective never exceeds the objective of
/// the projected uniform start.
pub fn solve_qp(problem: &QpProblem, config: &SolverConfig) -> Result<(Vec<f64>, SolveStats)> {
    config.validate()?;
    let n = problem.quad.nrows();
    let m = problem.eq_matrix.nrows();
    if problem.quad.ncols() != n
        || problem.linear.len() != n
        || problem.eq_matrix.ncols() != n
        || problem.eq_rhs.len() != m
        || problem.lower_bounds.len() != n
        || m == 0
    {
        return Err(Error::Invalid("inconsistent QP dimensions".into()));
    }

    let mut warnings = Vec::new();
    let projector = FeasibilityProjector::new(problem.eq_matrix.clone(), problem.eq_rhs.clone());
    if projector.rank < m {
        warnings.push(format!(
            "equality constraints are linearly dependent (rank {} of {m}); using least-squares projection",
            projector.rank
        ));
    }

    let b_scale = projector.rhs_scale();
    let start = dykstra(
        &projector,
        &problem.lower_bounds,
        &DVector::from_element(n, 1.0),
        DYKSTRA_FULL_ITERS,
    );
    if projector.residual(&start) > FEASIBILITY_TOL * b_scale {
        return Err(Error::Infeasible(
            projector.describe_violations(&start, &problem.row_labels),
        ));
    }

    let two_p = &problem.quad * 2.0;
    let p_scale = (two_p.norm() / (n as f64).sqrt()).max(1e-8);
    let mut rho_b = config.admm_rho * p_scale;
    let mut rho_eq = rho_b * 1e3 * (n as f64 / 100.0).max(1.0);
    let mut sigma = 1e-6 * p_scale;

    let aeq_t = problem.eq_matrix.transpose();
    let gram = &aeq_t * &problem.eq_matrix;
    let mut factor = None;
    for _ in 0..8 {
        let mut mmat = two_p.clone();
        mmat += &gram * rho_eq;
        for i in 0..n {
            mmat[(i, i)] += sigma + rho_b;
        }
        match Cholesky::new(mmat) {
            Some(c) => {
                factor = Some(c);
                break;
            }
            None => {
                rho_b *= 10.0;
                rho_eq *= 10.0;
                sigma *= 10.0;
            }
        }
    }
    let factor =
        factor.ok_or_else(|| Error::Invalid("could not factor the ADMM normal equations".into()))?;

    let alpha = 1.6;
    let mut x = start.clone();
    let mut z_eq = &problem.eq_matrix * &x;
    let mut z_box = x.clone();
    let mut y_eq = DVector::zeros(m);
    let mut y_box = DVector::zeros(n);

    let mut best_x = start.clone();
    let mut best_obj = problem.objective(best_x.as_slice());

    let mut iterations = config.max_iterations;
    let mut converged = false;
    let mut r_prim = f64::INFINITY;
    let mut r_dual = f64::INFINITY;

    for k in 0..config.max_iterations {
        let mut rhs = &x * sigma - &problem.linear;
        rhs += &aeq_t * &(&z_eq * rho_eq - &y_eq);
        rhs += &z_box * rho_b - &y_box;
        let x_tilde = factor.solve(&rhs);
        let zeta_eq = &problem.eq_matrix * &x_tilde;
        let x_new = &x_tilde * alpha + &x * (1.0 - alpha);

        let v_eq = &zeta_eq * alpha + &z_eq * (1.0 - alpha) + &y_eq / rho_eq;
        let v_box = &x_tilde * alpha + &z_box * (1.0 - alpha) + &y_box / rho_b;
        let z_eq_new = problem.eq_rhs.clone();
        let z_box_new = DVector::from_fn(n, |i, _| v_box[i].max(problem.lower_bounds[i]));
        y_eq = (&v_eq - &z_eq_new) * rho_eq;
        y_box = (&v_box - &z_box_new) * rho_b;

        x = x_new;
        z_eq = z_eq_new;
        z_box = z_box_new;

        if (k + 1) % CHECK_INTERVAL == 0 || k + 1 == config.max_iterations {
            let ax_eq = &problem.eq_matrix * &x;
            let px = &two_p * &x;
            let aty_eq = &aeq_t * &y_eq;
            r_prim = (&ax_eq - &z_eq).amax().max((&x - &z_box).amax());
            let prim_scale = ax_eq
                .amax()
                .max(z_eq.amax())
                .max(x.amax())
                .max(z_box.amax());
            let dual_vec = &px + &problem.linear + &aty_eq + &y_box;
            r_dual = dual_vec.amax();
            let dual_scale = px
                .amax()
                .max(problem.linear.amax())
                .max(aty_eq.amax())
                .max(y_box.amax());

            let candidate = dykstra(&projector, &problem.lower_bounds, &x, DYKSTRA_TRACK_ITERS);
            if projector.residual(&candidate) <= FEASIBILITY_TOL * b_scale {
                let obj = problem.objective(candidate.as_slice());
                if obj < best_obj {
                    best_obj = obj;
                    best_x = candidate;
                }
            }

            if r_prim <= config.primal_tolerance * (1.0 + prim_scale)
                && r_dual <= config.dual_tolerance * (1.0 + dual_scale)
            {
                converged = true;
                iterations = k + 1;
                break;
            }
        }
    }

    let final_candidate = dykstra(&projector, &problem.lower_bounds, &x, DYKSTRA_FULL_ITERS);
    if projector.residual(&final_candidate) <= FEASIBILITY_TOL * b_scale {
        let obj = problem.objective(final_candidate.as_slice());
        if obj < best_obj {
            best_x = final_candidate;
        }
    }

    let mut w: Vec<f64> = best_x.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Invalid("solver produced a zero-mass iterate".into()));
    }
    let target = problem.eq_rhs[0];
    for v in &mut w {
        *v *= target / total;
    }

    Ok((
        w,
        SolveStats {
            iterations,
            converged,
            primal_residual: r_prim,
            dual_residual: r_dual,
            warnings,
        },
    ))
}

/// Estimated weights together with diagnostics of the optimization.
#[derive(Debug, Clone, Serialize)]
pub struct WeightsResult {
    #[serde(skip)]
    pub weights: WeightVector,
    pub ess: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Value of `w' P w + q' w + constant` at the returned weights; equals
    /// the reported criterion total plus the ridge penalty.
    pub objective: f64,
    pub criterion: CriterionValue,
    pub warnings: Vec<String>,
}

/// Estimates independence weights for a dataset.
///
/// With `lambda = 0` the result is labeled `dcow`, with a positive ridge
/// `pdcow`; a `-dm` suffix marks decorrelation moment constraints.
pub fn independence_weights(
    dataset: &Dataset,
    config: &SolverConfig,
    dim_adjust: bool,
    moments: Option<&MomentSpec>,
) -> Result<WeightsResult> {
    config.validate()?;
    let structures = DistanceStructures::compute(dataset);
    let problem = build_qp(dataset, &structures, config, dim_adjust, moments)?;
    let (w, stats) = solve_qp(&problem, config)?;

    let mut label = if config.lambda > 0.0 { "pdcow" } else { "dcow" }.to_string();
    if moments.is_some() {
        label.push_str("-dm");
    }
    let weights = WeightVector::new(w, label)?;
    let crit = criterion(&structures, &weights, dim_adjust, dataset.p());
    let objective = problem.objective(weights.values());

    let mut warnings = problem.warnings.clone();
    warnings.extend(stats.warnings.iter().cloned());
    if !stats.converged {
        warnings.push(format!(
            "solver did not converge within {} iterations; returning the best feasible iterate",
            config.max_iterations
        ));
    }

    Ok(WeightsResult {
        ess: effective_sample_size(&weights),
        weights,
        iterations: stats.iterations,
        converged: stats.converged,
        objective,
        criterion: crit,
        warnings,
    })
}

/// A recipe for producing weights from a dataset, shared by the bootstrap
/// and the simulation harness.
#[derive(Debug, Clone)]
pub enum WeightMethod {
    Uniform,
    Dcow {
        config: SolverConfig,
        dim_adjust: bool,
        moments: Option<MomentSpec>,
    },
    GpsNormal {
        truncate_at: f64,
    },
}

impl WeightMethod {
    /// Distance-covariance weights with default settings.
    pub fn dcow_default() -> Self {
        WeightMethod::Dcow {
            config: SolverConfig::default(),
            dim_adjust: true,
            moments: None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            WeightMethod::Uniform => "uniform".into(),
            WeightMethod::Dcow {
                config, moments, ..
            } => {
                let mut label =
                    if config.lambda > 0.0 { "pdcow" } else { "dcow" }.to_string();
                if moments.is_some() {
                    label.push_str("-dm");
                }
                label
            }
            WeightMethod::GpsNormal { .. } => "gps-normal".into(),
        }
    }

    pub fn compute(&self, dataset: &Dataset) -> Result<WeightVector> {
        match self {
            WeightMethod::Uniform => Ok(WeightVector::uniform(dataset.n())),
            WeightMethod::Dcow {
                config,
                dim_adjust,
                moments,
            } => independence_weights(dataset, config, *dim_adjust, moments.as_ref())
                .map(|r| r.weights),
            WeightMethod::GpsNormal { truncate_at } => {
                crate::diagnostics::gps_normal_weights(dataset, *truncate_at)
            }
        }
    }
}
