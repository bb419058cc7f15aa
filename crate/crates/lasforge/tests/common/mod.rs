//! Shared oracles for the integration tests, written independently of the
//! library's own gradient code: the only library facility they use is
//! forward evaluation.

/// Central finite differences of a scalar function at `x`.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let original = probe[i];
        probe[i] = original + h;
        let up = f(&probe);
        probe[i] = original - h;
        let down = f(&probe);
        probe[i] = original;
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Relative error with the usual unit guard for near-zero references.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Pearson chi-squared statistic of observed counts against a uniform law.
pub fn chi_squared_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum()
}
