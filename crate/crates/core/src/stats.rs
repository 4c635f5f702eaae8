//! Small statistics helpers: least-squares slopes, mean/stderr, bootstrap.

use crate::rng;

/// Ordinary least squares fit `y = slope x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean and its standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = mean(values);
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Empirical L^p norm over the sample axis: `(mean |x|^p)^{1/p}`.
pub fn empirical_lp(values: &[f64], p: f64) -> f64 {
    let s: f64 = values.iter().map(|v| v.abs().powf(p)).sum();
    (s / values.len() as f64).powf(1.0 / p)
}

/// Bootstrap standard error of an arbitrary statistic (seeded, fixed
/// resample count).
pub fn bootstrap_stderr<F: Fn(&[f64]) -> f64>(
    values: &[f64],
    resamples: usize,
    seed: u64,
    statistic: F,
) -> f64 {
    use rand_chacha::rand_core::RngCore;
    let n = values.len();
    let mut stats = Vec::with_capacity(resamples);
    let mut buf = vec![0.0f64; n];
    for r in 0..resamples {
        let mut rng = rng::substream(seed, r as u64);
        for slot in buf.iter_mut() {
            *slot = values[(rng.next_u64() % n as u64) as usize];
        }
        stats.push(statistic(&buf));
    }
    let (_, se) = mean_stderr(&stats);
    se * (resamples as f64).sqrt()
}
