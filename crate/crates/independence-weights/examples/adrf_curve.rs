//! Estimate the average dose-response function and compare to the truth.
//!
//! On a confounded synthetic dataset with a known dose-response curve, this
//! contrasts the naive unweighted kernel estimate with the weighted one and
//! reports the integrated absolute error of each.
//!
//! Run with: `cargo run --release --example adrf_curve`

use independence_weights::simulation::{generate, DgpConfig, SimTruth};
use independence_weights::{
    adrf_curve, independence_weights, EstimatorKind, Kernel, SolverConfig, WeightVector,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = DgpConfig {
        n: 400,
        p_continuous: 6,
        p_binary: 0,
        confounding_strength: 1.2,
        noise_sd: 2.0,
        seed: 2001,
        ..DgpConfig::default()
    };
    let (dataset, _) = generate(&config)?;

    let result = independence_weights(&dataset, &SolverConfig::default(), true, None)?;
    let uniform = WeightVector::uniform(dataset.n());

    let naive = adrf_curve(
        &dataset,
        &uniform,
        EstimatorKind::NwStabilized,
        Kernel::Gaussian,
        None,
        None,
    )?;
    let weighted = adrf_curve(
        &dataset,
        &result.weights,
        EstimatorKind::NwStabilized,
        Kernel::Gaussian,
        None,
        Some(naive.grid.clone()),
    )?;

    println!(
        "estimator = {}, kernel = {:?}, bandwidth = {:.3}",
        naive.estimator, naive.kernel, naive.bandwidth
    );
    println!();
    println!(
        "{:>8} {:>10} {:>10} {:>10}",
        "a", "truth", "unweighted", "weighted"
    );
    let mut err_naive = 0.0;
    let mut err_weighted = 0.0;
    for (i, &a) in naive.grid.iter().enumerate() {
        let truth = SimTruth::treatment_effect(a);
        err_naive += (naive.estimates[i] - truth).abs();
        err_weighted += (weighted.estimates[i] - truth).abs();
        // Print every fifth grid point to keep the table short.
        if i % 5 == 0 {
            println!(
                "{a:>8.2} {truth:>10.3} {:>10.3} {:>10.3}",
                naive.estimates[i], weighted.estimates[i]
            );
        }
    }
    let m = naive.grid.len() as f64;
    println!();
    println!("mean absolute error, unweighted: {:.3}", err_naive / m);
    println!("mean absolute error, weighted:   {:.3}", err_weighted / m);
    Ok(())
}
