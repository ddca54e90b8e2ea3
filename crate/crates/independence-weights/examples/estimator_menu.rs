//! Compare the four dose-response estimators on one weighted dataset.
//!
//! The ratio (Horvitz-Thompson style) estimator, its stabilized variant,
//! the local-linear smoother, and the doubly robust combination of weights
//! with an outcome regression all target the same curve; their differences
//! show up at the boundary and under misspecification.
//!
//! Run with: `cargo run --release --example estimator_menu`

use independence_weights::simulation::{generate, DgpConfig, SimTruth};
use independence_weights::{
    adrf_curve, independence_weights, EstimatorKind, Kernel, SolverConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = DgpConfig {
        n: 400,
        p_continuous: 5,
        p_binary: 0,
        confounding_strength: 1.0,
        noise_sd: 3.0,
        seed: 33,
        ..DgpConfig::default()
    };
    let (dataset, _) = generate(&config)?;
    let result = independence_weights(&dataset, &SolverConfig::default(), true, None)?;

    let estimators = [
        EstimatorKind::Nw,
        EstimatorKind::NwStabilized,
        EstimatorKind::LocalLinear,
        EstimatorKind::DoublyRobust { degree: 2 },
    ];

    let mut curves = Vec::new();
    let mut grid: Option<Vec<f64>> = None;
    for kind in estimators {
        let curve = adrf_curve(
            &dataset,
            &result.weights,
            kind,
            Kernel::Epanechnikov,
            None,
            grid.clone(),
        )?;
        grid.get_or_insert_with(|| curve.grid.clone());
        curves.push(curve);
    }

    println!("kernel = epanechnikov, bandwidth = {:.3}", curves[0].bandwidth);
    println!();
    print!("{:>8} {:>9}", "a", "truth");
    for curve in &curves {
        print!(" {:>12}", curve.estimator);
    }
    println!();
    let grid = grid.expect("at least one curve was fitted");
    for (i, &a) in grid.iter().enumerate() {
        if i % 6 != 0 {
            continue;
        }
        print!("{a:>8.2} {:>9.3}", SimTruth::treatment_effect(a));
        for curve in &curves {
            print!(" {:>12.3}", curve.estimates[i]);
        }
        println!();
    }

    println!();
    for curve in &curves {
        let mae: f64 = grid
            .iter()
            .zip(&curve.estimates)
            .map(|(&a, &est)| (est - SimTruth::treatment_effect(a)).abs())
            .sum::<f64>()
            / grid.len() as f64;
        println!("{:<14} mean absolute error {mae:>7.3}", curve.estimator);
    }
    Ok(())
}
