//! Percentile bootstrap confidence bands for the dose-response curve.
//!
//! Re-estimates the weights inside every bootstrap resample so that the
//! bands reflect the full estimation pipeline, then prints the curve with
//! its lower and upper band and checks coverage of the known truth.
//!
//! Run with: `cargo run --release --example bootstrap_bands`

use independence_weights::simulation::{generate, DgpConfig, SimTruth};
use independence_weights::{
    bootstrap_bands, BootstrapConfig, EstimatorKind, Kernel, WeightMethod,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = DgpConfig {
        n: 400,
        p_continuous: 3,
        p_binary: 0,
        confounding_strength: 0.8,
        noise_sd: 4.0,
        seed: 26,
        ..DgpConfig::default()
    };
    let (dataset, _) = generate(&config)?;

    let boot = BootstrapConfig {
        replications: 200,
        alpha: 0.05,
        seed: 42,
        ..BootstrapConfig::default()
    };
    let bands = bootstrap_bands(
        &dataset,
        &WeightMethod::dcow_default(),
        EstimatorKind::NwStabilized,
        Kernel::Gaussian,
        None,
        None,
        &boot,
    )?;

    println!(
        "{} resamples, {} failed, {:.0}% bands",
        bands.replications,
        bands.failures,
        100.0 * (1.0 - bands.alpha)
    );
    println!();
    println!(
        "{:>8} {:>9} {:>9} {:>9} {:>9} {:>8}",
        "a", "truth", "lower", "estimate", "upper", "covered"
    );
    let mut covered = 0usize;
    for (i, &a) in bands.estimate.grid.iter().enumerate() {
        let truth = SimTruth::treatment_effect(a);
        let inside = bands.lower[i] <= truth && truth <= bands.upper[i];
        covered += inside as usize;
        if i % 5 == 0 {
            println!(
                "{a:>8.2} {truth:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>8}",
                bands.lower[i],
                bands.estimate.estimates[i],
                bands.upper[i],
                if inside { "yes" } else { "no" }
            );
        }
    }
    println!();
    println!(
        "truth inside the band at {covered} of {} grid points",
        bands.estimate.grid.len()
    );
    Ok(())
}
