//! Shared numeric kernels.
//!
//! Both the tape ops and the gradient-free forward paths call these, so a
//! value computed with or without a tape is bit-identical.

/// `out[i,j] = sum_p a[i,p] * b[p,j]` for row-major `a: [m,k]`, `b: [k,n]`.
pub(crate) fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                out_row[j] += a_ip * b_row[j];
            }
        }
    }
    out
}

/// Row-wise softmax of a row-major `[rows, cols]` buffer, max-shifted.
pub(crate) fn softmax_rows(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
            *o = (v - max).exp();
            sum += *o;
        }
        for o in &mut out[r * cols..(r + 1) * cols] {
            *o /= sum;
        }
    }
    out
}

/// Row-wise log-softmax, computed as `x - max - log(sum(exp(x - max)))`.
pub(crate) fn log_softmax_rows(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        for (o, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
            *o = v - max - log_sum;
        }
    }
    out
}

/// Per-row cross-entropy `-log softmax(logits)[label]` for `[rows, cols]`
/// logits. The mean of the returned vector is the batch loss.
pub(crate) fn cross_entropy_rows(rows: usize, cols: usize, logits: &[f64], labels: &[usize]) -> Vec<f64> {
    let log_p = log_softmax_rows(rows, cols, logits);
    labels
        .iter()
        .enumerate()
        .map(|(r, &y)| -log_p[r * cols + y])
        .collect()
}

/// Sign with `sign(0) = 0`; attack steps use this on gradients.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small_case() {
        // [[1,2,3],[4,5,6]] * [[1],[0],[-1]] = [[-2],[-2]]
        let out = matmul(2, 3, 1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[1.0, 0.0, -1.0]);
        assert_eq!(out, vec![-2.0, -2.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let x = [1.0, 2.0, 3.0, -5.0, 0.0, 5.0];
        let p = softmax_rows(2, 3, &x);
        for r in 0..2 {
            let s: f64 = p[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() <= 1e-12, "row {r} sums to {s}");
        }
        let shifted: Vec<f64> = x.iter().map(|v| v + 100.0).collect();
        let q = softmax_rows(2, 3, &shifted);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() <= 1e-12, "softmax must be shift invariant");
        }
    }

    #[test]
    fn uniform_softmax_on_equal_logits() {
        let p = softmax_rows(1, 4, &[0.0; 4]);
        for v in p {
            assert!((v - 0.25).abs() <= 1e-15);
        }
    }

    #[test]
    fn log_softmax_matches_log_of_softmax() {
        let x = [0.3, -1.2, 2.0, 0.0];
        let a = log_softmax_rows(2, 2, &x);
        let b: Vec<f64> = softmax_rows(2, 2, &x).iter().map(|v| v.ln()).collect();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn cross_entropy_of_uniform_logits_is_log_c() {
        let ce = cross_entropy_rows(1, 4, &[0.0; 4], &[2]);
        assert!((ce[0] - (4.0f64).ln()).abs() <= 1e-12);
    }

    #[test]
    fn sign_of_zero_is_zero() {
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(-0.0), 0.0);
        assert_eq!(sign(3.5), 1.0);
        assert_eq!(sign(-0.1), -1.0);
    }
}
