//! Class-weighted cross-entropy over two-logit outputs.
//!
//! The loss is a weight-normalized mean: each sample contributes its class
//! weight times its negative log-likelihood, divided by the total weight in
//! the batch. With all-equal weights this reduces exactly to the plain mean
//! cross-entropy. The weighting compensates the heavy spoof:bonafide
//! imbalance of anti-spoofing training sets.

use crate::error::Error;
use crate::tensor::Tensor;
use crate::Result;

/// Per-class loss weights, indexed like the logits: `.0` = spoof (class 0),
/// `.1` = bonafide (class 1).
pub type ClassWeights = (f64, f64);

/// Default weights for a roughly 9:1 spoof:bonafide training split.
pub const DEFAULT_CLASS_WEIGHTS: ClassWeights = (0.1, 0.9);

/// Numerically stable softmax over a 2-logit slice.
fn softmax2(z: &[f64]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Compute the weighted cross-entropy loss and its gradient with respect to
/// every logit tensor.
///
/// `logits[i]` has shape `[2]`; `labels[i]` is the class index (0 = spoof,
/// 1 = bonafide). Returns `(loss, dlogits)` where `dlogits[i]` is the
/// gradient of the batch loss with respect to `logits[i]`.
pub fn weighted_cross_entropy(
    logits: &[Tensor],
    labels: &[usize],
    weights: ClassWeights,
) -> Result<(f64, Vec<Tensor>)> {
    if logits.is_empty() {
        return Err(Error::data("cross-entropy needs at least one sample"));
    }
    if logits.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} logit tensors vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if !(weights.0 > 0.0 && weights.1 > 0.0) {
        return Err(Error::config(format!(
            "class weights must be positive, got ({}, {})",
            weights.0, weights.1
        )));
    }
    let mut total_weight = 0.0;
    let mut total_loss = 0.0;
    let mut probs = Vec::with_capacity(logits.len());
    for (i, (z, &y)) in logits.iter().zip(labels).enumerate() {
        if z.shape() != [2] {
            return Err(Error::dim(format!(
                "sample {i}: logits shape {:?}, expected [2]",
                z.shape()
            )));
        }
        if y > 1 {
            return Err(Error::config(format!(
                "sample {i}: label {y} outside {{0, 1}}"
            )));
        }
        let zd = z.data();
        if !zd.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric(format!(
                "sample {i}: non-finite logits ({}, {})",
                zd[0], zd[1]
            )));
        }
        let p = softmax2(zd);
        let w = if y == 0 { weights.0 } else { weights.1 };
        // -ln p[y], written against the stable shifted logits
        let m = zd[0].max(zd[1]);
        let log_z = ((zd[0] - m).exp() + (zd[1] - m).exp()).ln() + m;
        total_loss += w * (log_z - zd[y]);
        total_weight += w;
        probs.push((p, w, y));
    }
    let loss = total_loss / total_weight;
    if !loss.is_finite() {
        return Err(Error::numeric(format!("non-finite loss {loss}")));
    }
    let dlogits = probs
        .into_iter()
        .map(|(p, w, y)| {
            let scale = w / total_weight;
            let mut d = [p[0] * scale, p[1] * scale];
            d[y] -= scale;
            Tensor::from_vec(&[2], d.to_vec()).expect("fixed shape")
        })
        .collect();
    Ok((loss, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(a: f64, b: f64) -> Tensor {
        Tensor::from_vec(&[2], vec![a, b]).unwrap()
    }

    #[test]
    fn zero_logits_uniform_weights_give_ln_2() {
        let logits = vec![t2(0.0, 0.0), t2(0.0, 0.0), t2(0.0, 0.0)];
        let (loss, _) = weighted_cross_entropy(&logits, &[0, 1, 0], (1.0, 1.0)).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15, "{loss}");
    }

    #[test]
    fn zero_logits_one_per_class_imbalanced_weights_still_ln_2() {
        // (0.1 ln2 + 0.9 ln2) / (0.1 + 0.9) = ln2
        let logits = vec![t2(0.0, 0.0), t2(0.0, 0.0)];
        let (loss, _) = weighted_cross_entropy(&logits, &[0, 1], (0.1, 0.9)).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15, "{loss}");
    }

    #[test]
    fn saturated_correct_sample_has_near_zero_loss() {
        let (loss, _) = weighted_cross_entropy(&[t2(-10.0, 10.0)], &[1], (0.1, 0.9)).unwrap();
        assert!(loss < 1e-4, "{loss}");
        assert!(loss > 0.0);
    }

    #[test]
    fn equal_weights_match_unweighted_mean_exactly() {
        let logits = vec![t2(0.3, -1.2), t2(2.0, 0.5), t2(-0.7, 0.1), t2(1.1, 1.4)];
        let labels = [1, 0, 1, 0];
        let (weighted, dw) = weighted_cross_entropy(&logits, &labels, (1.0, 1.0)).unwrap();
        // doubling both weights must not change anything
        let (doubled, dd) = weighted_cross_entropy(&logits, &labels, (2.0, 2.0)).unwrap();
        assert_eq!(weighted, doubled);
        for (a, b) in dw.iter().zip(&dd) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = vec![t2(0.4, -0.9), t2(-1.3, 0.2)];
        let labels = [1, 0];
        let w = (0.1, 0.9);
        let (_, analytic) = weighted_cross_entropy(&logits, &labels, w).unwrap();
        let h = 1e-6;
        for s in 0..logits.len() {
            for k in 0..2 {
                let mut plus = logits.clone();
                let mut minus = logits.clone();
                let mut dp = plus[s].data().to_vec();
                let mut dm = minus[s].data().to_vec();
                dp[k] += h;
                dm[k] -= h;
                plus[s] = Tensor::from_vec(&[2], dp).unwrap();
                minus[s] = Tensor::from_vec(&[2], dm).unwrap();
                let (lp, _) = weighted_cross_entropy(&plus, &labels, w).unwrap();
                let (lm, _) = weighted_cross_entropy(&minus, &labels, w).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let an = analytic[s].data()[k];
                assert!(
                    (fd - an).abs() < 1e-8 * an.abs().max(1.0),
                    "sample {s} logit {k}: fd {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn gradient_sums_to_zero_per_sample() {
        // softmax gradient rows always sum to zero
        let (_, d) = weighted_cross_entropy(&[t2(1.7, -0.3)], &[0], (0.1, 0.9)).unwrap();
        assert!((d[0].data()[0] + d[0].data()[1]).abs() < 1e-15);
    }

    #[test]
    fn non_finite_logits_are_numeric_errors() {
        // regular construction already refuses non-finite values…
        assert!(matches!(
            Tensor::from_vec(&[2], vec![f64::NAN, 0.0]),
            Err(Error::Numeric(_))
        ));
        // …and the loss still guards against values smuggled in behind it
        let mut z = t2(0.0, 0.0);
        z.data_mut()[0] = f64::NAN;
        let err = weighted_cross_entropy(&[z], &[0], (0.1, 0.9)).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        let mut z = t2(0.0, 0.0);
        z.data_mut()[1] = f64::INFINITY;
        let err = weighted_cross_entropy(&[z], &[0], (0.1, 0.9)).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(weighted_cross_entropy(&[], &[], (0.1, 0.9)).is_err());
        assert!(weighted_cross_entropy(&[t2(0.0, 0.0)], &[2], (0.1, 0.9)).is_err());
        assert!(weighted_cross_entropy(&[t2(0.0, 0.0)], &[0], (0.0, 0.9)).is_err());
        assert!(weighted_cross_entropy(&[t2(0.0, 0.0)], &[0, 1], (0.1, 0.9)).is_err());
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let (loss, d) = weighted_cross_entropy(&[t2(700.0, -700.0)], &[1], (0.1, 0.9)).unwrap();
        assert!(loss.is_finite());
        assert!((loss - 1400.0).abs() < 1e-9, "{loss}"); // -ln softmax ≈ z0 - z1
        assert!(d[0].data().iter().all(|v| v.is_finite()));
    }
}
