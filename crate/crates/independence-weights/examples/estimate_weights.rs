//! Estimate independence weights on a confounded synthetic dataset.
//!
//! Draws covariates that drive a continuous exposure, solves for the
//! distance-covariance balancing weights, and prints how the dependence
//! criterion and effective sample size change relative to uniform weights.
//!
//! Run with: `cargo run --release --example estimate_weights`

use independence_weights::simulation::{generate, DgpConfig, EffectType};
use independence_weights::{
    default_balance_table, independence_weights, SolverConfig, WeightVector,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = DgpConfig {
        n: 300,
        p_continuous: 4,
        p_binary: 1,
        confounding_strength: 1.0,
        effect_type: EffectType::Constant,
        noise_sd: 5.0,
        seed: 7,
        ..DgpConfig::default()
    };
    let (dataset, _truth) = generate(&config)?;

    let result = independence_weights(&dataset, &SolverConfig::default(), true, None)?;

    println!("solver: {} iterations, converged = {}", result.iterations, result.converged);
    for warning in &result.warnings {
        println!("warning: {warning}");
    }
    println!();

    let uniform = WeightVector::uniform(dataset.n());
    let before = default_balance_table(&dataset, &uniform)?;
    let after = default_balance_table(&dataset, &result.weights)?;

    println!("{:<28} {:>12} {:>12}", "metric", "uniform", "dcow");
    let rows = [
        ("dependence criterion", before.criterion.total, after.criterion.total),
        ("weighted dcov (X, A)", before.criterion.weighted_dcov, after.criterion.weighted_dcov),
        ("energy distance (X)", before.criterion.energy_x, after.criterion.energy_x),
        ("energy distance (A)", before.criterion.energy_a, after.criterion.energy_a),
        ("effective sample size", before.ess, after.ess),
        ("max |weighted corr|", before.corr_max, after.corr_max),
    ];
    for (name, u, d) in rows {
        println!("{name:<28} {u:>12.5} {d:>12.5}");
    }

    let w = result.weights.values();
    let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!();
    println!(
        "weights: n = {}, sum = {:.3}, range = [{:.4}, {:.4}]",
        w.len(),
        result.weights.sum(),
        min,
        max
    );
    Ok(())
}
