use ndarray::{Array1, ArrayView1};

use super::NnError;

pub fn log_softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits.mapv(|v| v - lse)
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    log_softmax(logits).mapv(f64::exp)
}

/// Softmax cross-entropy for one sample: `(loss, ∂loss/∂logits)`.
pub fn cross_entropy(logits: ArrayView1<f64>, label: usize) -> Result<(f64, Array1<f64>), NnError> {
    if label >= logits.len() {
        return Err(NnError::BadLabel {
            label,
            classes: logits.len(),
        });
    }
    let logp = log_softmax(logits);
    let loss = -logp[label];
    let mut grad = logp.mapv(f64::exp);
    grad[label] -= 1.0;
    if !loss.is_finite() {
        return Err(NnError::NonFinite("cross-entropy loss".into()));
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_log_c() {
        let (loss, _) = cross_entropy(array![0.3, 0.3, 0.3, 0.3, 0.3].view(), 2).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn large_margin_drives_loss_to_zero() {
        let (loss, grad) = cross_entropy(array![800.0, 0.0, -3.0].view(), 0).unwrap();
        assert!(loss < 1e-300 || loss == 0.0);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn gradient_sums_to_zero() {
        let (_, grad) = cross_entropy(array![1.5, -0.2, 3.0, 0.0].view(), 1).unwrap();
        assert!(grad.sum().abs() < 1e-12);
        assert!(grad[1] < 0.0);
    }

    #[test]
    fn out_of_range_label() {
        assert!(cross_entropy(array![1.0, 2.0].view(), 2).is_err());
    }
}
