//! Probability and loss primitives: temperature softmax, KL divergence,
//! cross entropy, and a central-difference gradient checker.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Softmax of `logits` at temperature `t`, with max subtraction for
/// stability: q_i = exp((z_i - max)/t) / sum_j exp((z_j - max)/t).
pub fn softmax_temperature(logits: &[f64], t: f64) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Dimension("softmax of empty slice".into()));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Parameter(format!(
            "softmax temperature must be finite and > 0, got {t}"
        )));
    }
    let mut max = f64::NEG_INFINITY;
    for &z in logits {
        if !z.is_finite() {
            return Err(Error::Numeric(format!("non-finite logit {z}")));
        }
        if z > max {
            max = z;
        }
    }
    let mut out: Vec<f64> = logits.iter().map(|&z| ((z - max) / t).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// Plain softmax (temperature 1).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    softmax_temperature(logits, 1.0)
}

/// KL(p || q) = sum_i p_i (ln p_i - ln q_i), with the 0 ln 0 = 0 convention.
///
/// Any q_i = 0 where p_i > 0 is a numeric error (infinite divergence).
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "kl_divergence length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi < 0.0 || qi < 0.0 || !pi.is_finite() || !qi.is_finite() {
            return Err(Error::Numeric(format!(
                "invalid probability pair ({pi}, {qi}) at index {i}"
            )));
        }
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::Numeric(format!(
                "kl_divergence: q is zero at index {i} where p is {pi}"
            )));
        }
        acc += pi * (pi.ln() - qi.ln());
    }
    Ok(acc)
}

/// Cross entropy of a predicted distribution against an integer label:
/// -ln(max(p[label], 1e-12)).
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::Index(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    let p = probs[label];
    if !p.is_finite() || p < 0.0 {
        return Err(Error::Numeric(format!("invalid probability {p}")));
    }
    Ok(-(p.max(1e-12)).ln())
}

/// Central-difference gradient of a scalar function of a tensor, one
/// coordinate at a time: (f(x+eps e_i) - f(x-eps e_i)) / (2 eps).
pub fn finite_diff_grad(
    f: &mut dyn FnMut(&Tensor) -> Result<f64>,
    x: &Tensor,
    eps: f64,
) -> Result<Tensor> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be > 0, got {eps}")));
    }
    let mut grad = vec![0.0; x.len()];
    for (i, g) in grad.iter_mut().enumerate() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let fp = f(&plus)?;
        let fm = f(&minus)?;
        *g = (fp - fm) / (2.0 * eps);
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// Max relative error between two gradient vectors, with an absolute floor
/// so near-zero entries compare on absolute error instead.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let mut worst = 0.0_f64;
    for (&x, &y) in a.iter().zip(b) {
        let denom = x.abs().max(y.abs()).max(floor);
        let err = (x - y).abs() / denom;
        if err > worst {
            worst = err;
        }
    }
    worst
}
