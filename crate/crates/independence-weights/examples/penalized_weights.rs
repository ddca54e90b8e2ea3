//! Trade balance for stability with a ridge penalty on the weights.
//!
//! Sweeps the penalty `lambda` and shows how the solution moves from the
//! unpenalized balancing weights toward uniform weights: the dependence
//! criterion rises while the effective sample size recovers.
//!
//! Run with: `cargo run --release --example penalized_weights`

use independence_weights::simulation::{generate, DgpConfig};
use independence_weights::{independence_weights, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = DgpConfig {
        n: 200,
        p_continuous: 4,
        p_binary: 0,
        confounding_strength: 1.5,
        seed: 9,
        ..DgpConfig::default()
    };
    let (dataset, _) = generate(&config)?;
    let n = dataset.n() as f64;

    println!(
        "{:>10} {:>10} {:>12} {:>12} {:>10}",
        "lambda", "label", "criterion", "ess", "max w"
    );
    for lambda in [0.0, 1.0, 10.0, 100.0, 1_000.0, 10_000.0, 1e6] {
        let solver = SolverConfig {
            lambda,
            ..SolverConfig::default()
        };
        let result = independence_weights(&dataset, &solver, true, None)?;
        let max_w = result
            .weights
            .values()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        println!(
            "{lambda:>10.0} {:>10} {:>12.5} {:>12.2} {max_w:>10.3}",
            result.weights.label(),
            result.criterion.total,
            result.ess
        );
    }
    println!();
    println!(
        "as lambda grows the effective sample size approaches n = {n:.0} \
         and the weights approach uniform"
    );
    Ok(())
}
