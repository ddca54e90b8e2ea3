//! Synthetic confounded data with known truth, simulation metrics, and the
//! multi-method experiment runner.
//!
//! The generator draws age-like continuous covariates (`N(40, 10^2)`) and
//! Bernoulli(0.5) binary covariates, an exposure on `(0, 80]` whose
//! conditional mean is linear in the covariates, and outcomes built from
//! random polynomial main effects plus the treatment curve
//! `f(a) = a/4 + 2/(a/100 + 1/2)^3 - (a - 40)^2/100`. Main effects and the
//! heterogeneous effect modifier are sample-centered, so the average
//! dose-response truth is exactly `f(a)` in every replication.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, WeightVector};
use crate::error::{Error, Result};
use crate::estimators::{adrf_curve, default_grid, EstimatorKind, Kernel};
use crate::solver::WeightMethod;
use crate::util::{mean, sample_sd, stream_rng, trapezoid};

/// Configuration of the synthetic data-generating process.
#[derive(Debug, Clone, Serialize)]
pub struct DgpConfig {
    pub n: usize,
    pub p_continuous: usize,
    pub p_binary: usize,
    pub confounding_strength: f64,
    pub effect_type: EffectType,
    pub noise_sd: f64,
    pub exposure_family: ExposureFamily,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectType {
    Constant,
    Heterogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureFamily {
    Normal,
    Gamma,
}

impl std::str::FromStr for EffectType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(EffectType::Constant),
            "heterogeneous" => Ok(EffectType::Heterogeneous),
            other => Err(Error::Invalid(format!(
                "unknown effect type '{other}' (expected 'constant' or 'heterogeneous')"
            ))),
        }
    }
}

impl std::str::FromStr for ExposureFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(ExposureFamily::Normal),
            "gamma" => Ok(ExposureFamily::Gamma),
            other => Err(Error::Invalid(format!(
                "unknown exposure family '{other}' (expected 'normal' or 'gamma')"
            ))),
        }
    }
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n: 200,
            p_continuous: 2,
            p_binary: 1,
            confounding_strength: 1.0,
            effect_type: EffectType::Constant,
            noise_sd: 5.0,
            exposure_family: ExposureFamily::Normal,
            seed: 0,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 20 {
            return Err(Error::Invalid(format!("n must be at least 20, got {}", self.n)));
        }
        if self.p_continuous + self.p_binary == 0 {
            return Err(Error::Invalid("need at least one covariate".into()));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::Invalid("noise_sd must be finite and >= 0".into()));
        }
        if !self.confounding_strength.is_finite() {
            return Err(Error::Invalid("confounding_strength must be finite".into()));
        }
        Ok(())
    }
}

/// Per-unit ground truth of a generated replication.
///
/// The conditional mean is `mu_xa(i, a) = main_effects[i] + f(a) (1 + delta[i])`;
/// because both per-unit vectors are sample-centered, the average
/// dose-response truth is `mu(a) = f(a)` exactly.
#[derive(Debug, Clone)]
pub struct SimTruth {
    main_effects: Vec<f64>,
    delta: Vec<f64>,
}

impl SimTruth {
    /// The treatment effect curve `f(a)`.
    pub fn treatment_effect(a: f64) -> f64 {
        a / 4.0 + 2.0 / (a / 100.0 + 0.5).powi(3) - (a - 40.0) * (a - 40.0) / 100.0
    }

    /// Average dose-response truth `mu(a)`.
    pub fn mu(&self, a: f64) -> f64 {
        Self::treatment_effect(a)
    }

    /// Conditional mean for one unit at exposure level `a`.
    pub fn mu_xa(&self, unit: usize, a: f64) -> f64 {
        self.main_effects[unit] + Self::treatment_effect(a) * (1.0 + self.delta[unit])
    }

    pub fn main_effects(&self) -> &[f64] {
        &self.main_effects
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }
}

fn coin(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        0.0
    }
}

/// One random outcome model: polynomial main-effect coefficients per
/// continuous column, level effects and interactions per binary column, and
/// effect-modifier coefficients for the heterogeneous setting. Each term is
/// switched on or off by an independent coin flip.
///
/// Coefficients are drawn from a stream keyed by the seed alone, so all
/// replications of one experiment share a single outcome model and the
/// estimator bias does not average out across replications.
#[derive(Debug, Clone)]
struct Coefficients {
    /// `(g1, g2, g3)` for the linear, centered-quadratic, and centered-cubic
    /// terms of each continuous column.
    continuous: Vec<(f64, f64, f64)>,
    /// `(alpha, [(e1, e2); p_continuous])` for each binary column: a level
    /// effect plus linear/quadratic continuous interactions inside the
    /// indicated group.
    binary: Vec<(f64, Vec<(f64, f64)>)>,
    /// Effect-modifier slope per continuous column (heterogeneous only).
    het_continuous: Vec<f64>,
    /// Effect-modifier interaction per (binary, continuous) pair.
    het_binary: Vec<Vec<f64>>,
}

impl Coefficients {
    fn draw(config: &DgpConfig) -> Self {
        let mut rng = stream_rng(config.seed, COEFFICIENT_STREAM);
        let pc = config.p_continuous;
        let pb = config.p_binary;
        let continuous = (0..pc)
            .map(|_| {
                let g1 = rng.random_range(-0.5..0.5) * coin(&mut rng);
                let g2 = rng.random_range(-0.1..0.1) * coin(&mut rng);
                let g3 = rng.random_range(-0.01..0.01) * coin(&mut rng);
                (g1, g2, g3)
            })
            .collect();
        let binary = (0..pb)
            .map(|_| {
                let alpha = rng.random_range(-10.0..10.0) * coin(&mut rng);
                let inter = (0..pc)
                    .map(|_| {
                        let e1 = rng.random_range(-0.5..0.5) * coin(&mut rng);
                        let e2 = rng.random_range(-0.1..0.1) * coin(&mut rng);
                        (e1, e2)
                    })
                    .collect();
                (alpha, inter)
            })
            .collect();
        let (het_continuous, het_binary) = match config.effect_type {
            EffectType::Constant => (Vec::new(), Vec::new()),
            EffectType::Heterogeneous => (
                (0..pc).map(|_| rng.random_range(-0.5..0.5)).collect(),
                (0..pb)
                    .map(|_| {
                        (0..pc)
                            .map(|_| rng.random_range(-0.5..0.5) * coin(&mut rng))
                            .collect()
                    })
                    .collect(),
            ),
        };
        Coefficients {
            continuous,
            binary,
            het_continuous,
            het_binary,
        }
    }
}

const COEFFICIENT_STREAM: u64 = u64::MAX - 1;

/// Generates one replication from the primary stream of the seed.
pub fn generate(config: &DgpConfig) -> Result<(Dataset, SimTruth)> {
    generate_stream(config, 0)
}

/// Generates one replication from an explicit RNG stream, so replications
/// can be drawn independently and reproducibly. The outcome-model
/// coefficients depend on the seed only; the stream drives covariates,
/// exposure, and noise.
pub fn generate_stream(config: &DgpConfig, stream: u64) -> Result<(Dataset, SimTruth)> {
    config.validate()?;
    let coef = Coefficients::draw(config);
    let mut rng = stream_rng(config.seed, stream);
    let n = config.n;
    let pc = config.p_continuous;
    let pb = config.p_binary;
    let p = pc + pb;
    let normal = Normal::new(0.0, 1.0).unwrap();

    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    for _ in 0..pc {
        cols.push((0..n).map(|_| 40.0 + 10.0 * normal.sample(&mut rng)).collect());
    }
    for _ in 0..pb {
        cols.push((0..n).map(|_| coin(&mut rng)).collect());
    }

    // Standardized linear predictor driving exposure-covariate dependence.
    let inv_sqrt_p = 1.0 / (p as f64).sqrt();
    let lp: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = 0.0;
            for col in cols.iter().take(pc) {
                s += (col[i] - 40.0) / 10.0;
            }
            for col in cols.iter().skip(pc) {
                s += 2.0 * (col[i] - 0.5);
            }
            s * inv_sqrt_p
        })
        .collect();

    // Exposure: conditional mean linear in the covariates. The signal and
    // noise shares are normalized so the total exposure variance stays near
    // 10^2 for every confounding strength; c controls the explained-variance
    // share c^2/(1+c^2) without widening the support.
    let c = config.confounding_strength;
    let scale = 10.0 / (1.0 + c * c).sqrt();
    let a: Vec<f64> = match config.exposure_family {
        ExposureFamily::Normal => lp
            .iter()
            .map(|&l| {
                (40.0 + scale * (c * l + normal.sample(&mut rng))).clamp(0.05, 80.0)
            })
            .collect(),
        ExposureFamily::Gamma => lp
            .iter()
            .map(|&l| {
                let mean = (40.0 + scale * c * l).max(1.0);
                let gamma = Gamma::new(4.0, mean / 4.0).unwrap();
                let draw: f64 = gamma.sample(&mut rng);
                draw.clamp(0.05, 80.0)
            })
            .collect(),
    };

    let col_means: Vec<f64> = cols.iter().map(|col| mean(col)).collect();

    let mut main = vec![0.0; n];
    for (j, &(g1, g2, g3)) in coef.continuous.iter().enumerate() {
        for i in 0..n {
            let x = cols[j][i];
            let xc = x - col_means[j];
            main[i] += g1 * x + g2 * xc * xc + g3 * xc * xc * xc;
        }
    }
    for (jb, (alpha, inter)) in coef.binary.iter().enumerate() {
        let j = pc + jb;
        for i in 0..n {
            if cols[j][i] == 1.0 {
                main[i] += alpha;
                for (cc, &(e1, e2)) in inter.iter().enumerate() {
                    let x = cols[cc][i];
                    let xc = x - col_means[cc];
                    main[i] += e1 * x + e2 * xc * xc;
                }
            }
        }
    }
    let m_bar = mean(&main);
    for v in &mut main {
        *v -= m_bar;
    }

    let mut delta = vec![0.0; n];
    if config.effect_type == EffectType::Heterogeneous {
        for (j, &gi) in coef.het_continuous.iter().enumerate() {
            for i in 0..n {
                delta[i] += gi * (cols[j][i] - col_means[j]) / 10.0;
            }
        }
        for (jb, per_binary) in coef.het_binary.iter().enumerate() {
            let j = pc + jb;
            for (cc, &e) in per_binary.iter().enumerate() {
                for i in 0..n {
                    delta[i] +=
                        e * (cols[cc][i] - col_means[cc]) / 10.0 * (cols[j][i] - col_means[j]);
                }
            }
        }
        let d_bar = mean(&delta);
        for v in &mut delta {
            *v -= d_bar;
        }
    }

    let y: Vec<f64> = (0..n)
        .map(|i| {
            main[i]
                + SimTruth::treatment_effect(a[i]) * (1.0 + delta[i])
                + config.noise_sd * normal.sample(&mut rng)
        })
        .collect();

    let mut names = Vec::with_capacity(p);
    for j in 1..=pc {
        names.push(format!("x{j}"));
    }
    for j in 1..=pb {
        names.push(format!("b{j}"));
    }
    let covariates = nalgebra::DMatrix::from_fn(n, p, |i, j| cols[j][i]);
    let dataset = Dataset::new(covariates, a, Some(y), names)?;
    Ok((
        dataset,
        SimTruth {
            main_effects: main,
            delta,
        },
    ))
}

/// First error-decomposition term of the weighted estimator against the
/// empirical measure: `(1/n) sum w_i mu(X_i, a0) - (1/n) sum mu(X_i, a0)`.
///
/// Identically zero at uniform weights and whenever `mu` is constant in `x`.
pub fn oracle_bias_term<F>(dataset: &Dataset, weights: &WeightVector, a0: f64, mu_xa: F) -> f64
where
    F: Fn(usize, f64) -> f64,
{
    let n = dataset.n();
    let nf = n as f64;
    let mut weighted = 0.0;
    let mut plain = 0.0;
    for i in 0..n {
        let value = mu_xa(i, a0);
        weighted += weights.values()[i] * value;
        plain += value;
    }
    (weighted - plain) / nf
}

/// Kernel-localized systematic-bias diagnostic: the weighted kernel average
/// of `mu(X_i, a0)` around `a0` minus its all-units target. Unlike
/// [`oracle_bias_term`] this does not vanish at uniform weights, so it can
/// compare weighting methods directly.
pub fn oracle_local_bias_term<F>(
    dataset: &Dataset,
    weights: &WeightVector,
    a0: f64,
    kernel: Kernel,
    bandwidth: f64,
    mu_xa: F,
) -> Result<f64>
where
    F: Fn(usize, f64) -> f64,
{
    if !(bandwidth > 0.0) {
        return Err(Error::Invalid("bandwidth must be positive".into()));
    }
    let n = dataset.n();
    let a = dataset.exposure();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut plain = 0.0;
    for i in 0..n {
        let k = weights.values()[i] * kernel.scaled(a[i] - a0, bandwidth);
        let value = mu_xa(i, a0);
        num += k * value;
        den += k;
        plain += value;
    }
    if den <= 0.0 {
        return Err(Error::NoLocalData(a0));
    }
    Ok(num / den - plain / n as f64)
}

/// Gaussian kernel density estimate with the Silverman rule-of-thumb
/// bandwidth, evaluated on a grid.
pub fn kde(a: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    if a.len() < 2 {
        return Err(Error::Invalid("need at least 2 values for a density".into()));
    }
    if a.iter().all(|&v| v == a[0]) {
        return Err(Error::DegenerateColumn("exposure".into()));
    }
    let sd = sample_sd(a);
    let iqr = crate::util::quantile_type7(a, 0.75) - crate::util::quantile_type7(a, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (a.len() as f64).powf(-0.2);
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * a.len() as f64);
    Ok(grid
        .iter()
        .map(|&g| {
            let mut s = 0.0;
            for &v in a {
                let z = (g - v) / h;
                s += (-0.5 * z * z).exp();
            }
            s * norm
        })
        .collect())
}

/// Integrated simulation metrics over replications of an estimator.
#[derive(Debug, Clone, Serialize)]
pub struct MetricResult {
    pub mab: f64,
    pub irmse: f64,
    pub replications: usize,
}

/// Mean absolute bias and integrated root-mean-squared error of a set of
/// per-replication curves against the truth, weighted by a marginal density
/// that is renormalized to integrate to one over the grid.
pub fn mab_irmse(
    grid: &[f64],
    curves: &[Vec<f64>],
    truth: &[f64],
    density: &[f64],
) -> Result<MetricResult> {
    if curves.is_empty() {
        return Err(Error::Invalid("need at least one replication curve".into()));
    }
    let g = grid.len();
    if g < 2 {
        return Err(Error::Invalid("grid needs at least 2 points".into()));
    }
    if truth.len() != g || density.len() != g || curves.iter().any(|c| c.len() != g) {
        return Err(Error::Invalid("curve, truth, and density grids do not match".into()));
    }
    let z = trapezoid(grid, density);
    if !(z > 0.0) {
        return Err(Error::Invalid("density integrates to zero over the grid".into()));
    }
    let s = curves.len() as f64;
    let mut abs_bias = Vec::with_capacity(g);
    let mut rmse = Vec::with_capacity(g);
    for i in 0..g {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for curve in curves {
            let err = curve[i] - truth[i];
            sum += err;
            sum_sq += err * err;
        }
        abs_bias.push((sum / s).abs() * density[i] / z);
        rmse.push((sum_sq / s).sqrt() * density[i] / z);
    }
    Ok(MetricResult {
        mab: trapezoid(grid, &abs_bias),
        irmse: trapezoid(grid, &rmse),
        replications: curves.len(),
    })
}

/// One weighting/estimation recipe to compare in an experiment.
#[derive(Debug, Clone)]
pub struct ExperimentMethod {
    pub name: String,
    pub weights: WeightMethod,
    pub estimator: EstimatorKind,
    pub kernel: Kernel,
}

impl ExperimentMethod {
    pub fn new(name: impl Into<String>, weights: WeightMethod, estimator: EstimatorKind) -> Self {
        ExperimentMethod {
            name: name.into(),
            weights,
            estimator,
            kernel: Kernel::Gaussian,
        }
    }
}

/// Result row for one method.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRow {
    pub method: String,
    pub n: usize,
    /// `None` when the method failed in more than 25% of replications and
    /// was excluded from metric comparison.
    pub metrics: Option<MetricResult>,
    pub failures: usize,
}

/// Full experiment output: one row per method plus the shared evaluation
/// grid and reference density.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub replications: usize,
}

impl ExperimentTable {
    /// CSV rendering with columns `method,n,mab,irmse,failures`; excluded
    /// methods leave the metric cells empty.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("method,n,mab,irmse,failures\n");
        for row in &self.rows {
            match &row.metrics {
                Some(m) => out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    row.method, row.n, m.mab, m.irmse, row.failures
                )),
                None => out.push_str(&format!("{},{},,,{}\n", row.method, row.n, row.failures)),
            }
        }
        out
    }
}

const REFERENCE_STREAM: u64 = u64::MAX;
const REFERENCE_N: usize = 2000;

/// Runs a paired multi-method experiment.
///
/// A large reference draw (its own RNG stream) fixes the evaluation grid and
/// the marginal-density weighting; every replication is then generated from
/// the stream keyed by its index and shared by all methods, so comparisons
/// are paired. Methods failing in more than 25% of replications are excluded
/// from metric reporting but keep their failure count.
pub fn run_experiment(
    config: &DgpConfig,
    methods: &[ExperimentMethod],
    replications: usize,
) -> Result<ExperimentTable> {
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::Invalid("need at least one method".into()));
    }
    if replications == 0 {
        return Err(Error::Invalid("need at least one replication".into()));
    }

    let mut reference_config = config.clone();
    reference_config.n = REFERENCE_N.max(config.n);
    let (reference, _) = generate_stream(&reference_config, REFERENCE_STREAM)?;
    let grid = default_grid(reference.exposure(), 50)?;
    let density = kde(reference.exposure(), &grid)?;
    let truth: Vec<f64> = grid.iter().map(|&a| SimTruth::treatment_effect(a)).collect();

    let per_replication: Vec<Vec<Option<Vec<f64>>>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let (dataset, _) = generate_stream(config, r as u64 + 1)
                .expect("config was validated before the parallel loop");
            methods
                .iter()
                .map(|method| {
                    let weights = method.weights.compute(&dataset).ok()?;
                    let curve = adrf_curve(
                        &dataset,
                        &weights,
                        method.estimator,
                        method.kernel,
                        None,
                        Some(grid.clone()),
                    )
                    .ok()?;
                    Some(curve.estimates)
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(methods.len());
    for (m, method) in methods.iter().enumerate() {
        let successes: Vec<Vec<f64>> = per_replication
            .iter()
            .filter_map(|rep| rep[m].clone())
            .collect();
        let failures = replications - successes.len();
        let metrics = if successes.len() as f64 >= 0.75 * replications as f64 {
            Some(mab_irmse(&grid, &successes, &truth, &density)?)
        } else {
            None
        };
        rows.push(ExperimentRow {
            method: method.name.clone(),
            n: config.n,
            metrics,
            failures,
        });
    }

    Ok(ExperimentTable {
        rows,
        grid,
        density,
        replications,
    })
}
