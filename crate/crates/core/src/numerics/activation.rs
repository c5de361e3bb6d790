use super::Matrix;

#[inline]
pub fn sigmoid_scalar(z: f64) -> f64 {
    // Branching keeps exp() argument non-positive so neither side overflows.
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Entrywise logistic function.
pub fn sigmoid(z: &Matrix) -> Matrix {
    z.map(sigmoid_scalar)
}

pub fn sigmoid_in_place(z: &mut Matrix) {
    z.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = sigmoid_scalar(*v));
}

/// `log Σ exp(z_i)` with max subtraction. Returns `-inf` for an empty slice.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Softmax of one row, stable for large logits.
pub fn softmax_row(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

pub fn log_softmax_row(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| v - lse).collect()
}
