//! Inspect covariate balance in detail, feature by feature.
//!
//! Builds the full weighted-correlation balance table (covariate powers,
//! exposure powers, and interactions) and prints the worst offenders under
//! uniform weights next to their values under estimated weights.
//!
//! Run with: `cargo run --release --example balance_report`

use independence_weights::simulation::{generate, DgpConfig};
use independence_weights::{balance_table, independence_weights, SolverConfig, WeightVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = DgpConfig {
        n: 250,
        p_continuous: 3,
        p_binary: 2,
        confounding_strength: 1.2,
        seed: 11,
        ..DgpConfig::default()
    };
    let (dataset, _) = generate(&config)?;

    let result = independence_weights(&dataset, &SolverConfig::default(), true, None)?;
    let uniform = WeightVector::uniform(dataset.n());

    // Powers up to 3 for exposure, up to 2 for covariates, with interactions.
    let before = balance_table(&dataset, &uniform, 3, true, 2)?;
    let after = balance_table(&dataset, &result.weights, 3, true, 2)?;

    println!("summary over {} feature/exposure pairs:", before.n_pairs);
    println!("{:<22} {:>10} {:>10}", "", "uniform", "dcow");
    println!("{:<22} {:>10.4} {:>10.4}", "mean |corr|", before.corr_mean, after.corr_mean);
    println!("{:<22} {:>10.4} {:>10.4}", "median |corr|", before.corr_median, after.corr_median);
    println!("{:<22} {:>10.4} {:>10.4}", "95th pct |corr|", before.corr_p95, after.corr_p95);
    println!("{:<22} {:>10.4} {:>10.4}", "max |corr|", before.corr_max, after.corr_max);
    println!();

    // Rank pairs by their unweighted imbalance and show the ten worst.
    let mut ranked: Vec<usize> = (0..before.pairs.len()).collect();
    ranked.sort_by(|&i, &j| {
        before.pairs[j]
            .abs_correlation
            .total_cmp(&before.pairs[i].abs_correlation)
    });

    println!("ten most imbalanced pairs before weighting:");
    println!("{:<34} {:>10} {:>10}", "feature ~ exposure term", "uniform", "dcow");
    for &i in ranked.iter().take(10) {
        let pair = &before.pairs[i];
        let label = format!("{} ~ a^{}", pair.feature, pair.exposure_power);
        println!(
            "{:<34} {:>10.4} {:>10.4}",
            label, pair.abs_correlation, after.pairs[i].abs_correlation
        );
    }
    Ok(())
}
