//! Small numeric helpers shared across modules.

/// Linear-interpolation quantile (the "type 7" rule): with `h = (n-1) q`,
/// returns `x[floor(h)] + frac(h) * (x[floor(h)+1] - x[floor(h)])` on the
/// sorted values.
pub(crate) fn quantile_type7(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&q), "quantile level out of [0, 1]");
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("non-finite value in quantile"));
    quantile_type7_sorted(&sorted, q)
}

pub(crate) fn quantile_type7_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the n-1 divisor; 0 for fewer than 2 values.
/// ChaCha8 generator keyed by a seed and a stream index, so parallel work
/// can draw from disjoint, reproducible streams.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    rand_chacha::ChaCha8Rng::from_seed(key)
}

/// Trapezoid-rule integral of sampled values over a grid.
pub(crate) fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 1..grid.len() {
        total += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
    }
    total
}

pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}
