//! Estimate quantile dose-response curves, not just the mean.
//!
//! With weights that break the covariate-exposure dependence, local weighted
//! quantiles of the outcome trace how the whole outcome distribution shifts
//! with the exposure. Under the location-shift effect used here, every
//! quantile curve should run parallel to the mean curve.
//!
//! Run with: `cargo run --release --example quantile_curve`

use independence_weights::estimators::quantile_curve;
use independence_weights::simulation::{generate, DgpConfig, EffectType};
use independence_weights::{
    adrf_curve, independence_weights, EstimatorKind, Kernel, SolverConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Noise dominates the covariate main effects here, so the outcome
    // distribution at each exposure level is close to a shifted normal and
    // the quantile fan is easy to read.
    let config = DgpConfig {
        n: 500,
        p_continuous: 2,
        p_binary: 2,
        confounding_strength: 1.0,
        effect_type: EffectType::Constant,
        noise_sd: 8.0,
        seed: 8,
        ..DgpConfig::default()
    };
    let (dataset, _) = generate(&config)?;
    let result = independence_weights(&dataset, &SolverConfig::default(), true, None)?;

    let mean = adrf_curve(
        &dataset,
        &result.weights,
        EstimatorKind::NwStabilized,
        Kernel::Gaussian,
        None,
        None,
    )?;
    let grid = mean.grid.clone();
    let mut curves = Vec::new();
    for alpha in [0.1, 0.5, 0.9] {
        curves.push(quantile_curve(
            &dataset,
            &result.weights,
            alpha,
            Kernel::Gaussian,
            None,
            Some(grid.clone()),
        )?);
    }

    println!(
        "{:>8} {:>9} {:>9} {:>9} {:>9} {:>11}",
        "a", "q10", "median", "q90", "mean", "q90 - q10"
    );
    let mut spreads = Vec::new();
    for (i, &a) in grid.iter().enumerate() {
        let spread = curves[2].estimates[i] - curves[0].estimates[i];
        spreads.push(spread);
        if i % 4 == 0 {
            println!(
                "{a:>8.2} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {spread:>11.3}",
                curves[0].estimates[i],
                curves[1].estimates[i],
                curves[2].estimates[i],
                mean.estimates[i]
            );
        }
    }
    println!();
    // Judge the location-shift signature away from the grid boundary, where
    // local estimates lean on very few observations.
    let interior = &spreads[5..spreads.len() - 5];
    let mean_spread = interior.iter().sum::<f64>() / interior.len() as f64;
    println!(
        "location-shift signature: interior q90 - q10 spread is roughly \
         constant (mean {mean_spread:.1}) and the median follows the mean; \
         the spread widens only near the boundary where data are scarce"
    );
    Ok(())
}
