//! Loss terms for both GANs, each returning its value together with the
//! gradient with respect to every input element.
//!
//! Batches are slices with one tensor (or score) per sample; `N` below is
//! the batch size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Probability clamp applied before every logarithm.
pub const DEFAULT_EPS: f64 = 1e-7;

/// Weights of the adversarial and cyclic terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Adversarial term of the denoising objective.
    pub w1: f64,
    /// Adversarial term of the saliency objective.
    pub w2: f64,
    /// Cycle-consistency term of the saliency objective.
    pub w3: f64,
    pub eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w1: 1e-3, w2: 5e-3, w3: 1e-1, eps: DEFAULT_EPS }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3)] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Validation(format!("loss weight {name}={w} must be finite and >= 0")));
            }
        }
        if !(self.eps > 0.0 && self.eps < 1e-3) {
            return Err(Error::Validation(format!("eps {} outside (0, 1e-3)", self.eps)));
        }
        Ok(())
    }
}

/// A scalar loss and its gradient per input sample.
#[derive(Clone, Debug)]
pub struct LossGrad<T, G> {
    pub value: T,
    pub grads: Vec<G>,
}

/// Values of every term logged by one training step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub content: f64,
    pub adv_denoise: f64,
    pub total_denoise: f64,
    pub bce: f64,
    pub adv_sod: f64,
    pub cyclic: f64,
    pub total_sod: f64,
    pub d1: f64,
    pub d2: f64,
    pub batch_size: usize,
}

impl LossReport {
    pub const TERMS: [&'static str; 9] =
        ["content", "adv_denoise", "total_denoise", "bce", "adv_sod", "cyclic", "total_sod", "d1", "d2"];

    pub fn values(&self) -> [f64; 9] {
        [
            self.content,
            self.adv_denoise,
            self.total_denoise,
            self.bce,
            self.adv_sod,
            self.cyclic,
            self.total_sod,
            self.d1,
            self.d2,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    /// Both totals equal their weighted component sums to `1e-6` relative.
    pub fn totals_consistent(&self, w: &LossWeights) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1e-12);
        close(self.total_denoise, total_denoise_loss(self.content, self.adv_denoise, w))
            && close(self.total_sod, total_sod_loss(self.bce, self.adv_sod, self.cyclic, w))
    }
}

fn check_pairs<T: Scalar>(a: &[Tensor<T>], b: &[Tensor<T>]) -> Result<()> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Validation(format!("batch sizes {} and {} differ or are empty", a.len(), b.len())));
    }
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if !x.same_shape(y) {
            return Err(Error::Validation(format!(
                "sample {i}: shapes {:?} and {:?} differ",
                x.shape(),
                y.shape()
            )));
        }
    }
    Ok(())
}

/// `1/N * sum_i ||a_i - b_i||_2`, or the mean squared error over every
/// element when `squared` is set. Gradient is with respect to `a`.
fn l2_distance<T: Scalar>(a: &[Tensor<T>], b: &[Tensor<T>], squared: bool) -> Result<LossGrad<T, Tensor<T>>> {
    check_pairs(a, b)?;
    let n = T::from_usize(a.len()).unwrap();
    let mut value = T::zero();
    let mut grads = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        let mut diff = x.clone();
        for (d, &t) in diff.data_mut().iter_mut().zip(y.data()) {
            *d -= t;
        }
        if squared {
            let count = n * T::from_usize(x.len()).unwrap();
            value += diff.data().iter().map(|&d| d * d).sum::<T>() / count;
            diff.scale(T::lit(2.0) / count);
        } else {
            let norm = diff.l2_norm();
            value += norm / n;
            // the norm is not differentiable at 0; use the zero subgradient
            if norm > T::zero() {
                diff.scale(T::one() / (n * norm));
            } else {
                diff.scale(T::zero());
            }
        }
        grads.push(diff);
    }
    Ok(LossGrad { value, grads })
}

/// Content loss of the denoiser: batch mean of the per-sample L2 norm of
/// `pred - target`.
pub fn denoise_content_loss<T: Scalar>(
    pred: &[Tensor<T>],
    target: &[Tensor<T>],
    squared: bool,
) -> Result<LossGrad<T, Tensor<T>>> {
    l2_distance(pred, target, squared)
}

/// Cycle-consistency loss between `G3(G2(G1(x)))` and `G1(x)`. The returned
/// gradient is with respect to `reconstructed`; the gradient with respect
/// to `denoised` is its negation.
pub fn cycle_loss<T: Scalar>(
    reconstructed: &[Tensor<T>],
    denoised: &[Tensor<T>],
    squared: bool,
) -> Result<LossGrad<T, Tensor<T>>> {
    l2_distance(reconstructed, denoised, squared)
}

fn clamp_prob<T: Scalar>(p: T, eps: f64) -> (T, bool) {
    let lo = T::lit(eps);
    let hi = T::one() - lo;
    if p < lo {
        (lo, true)
    } else if p > hi {
        (hi, true)
    } else {
        (p, false)
    }
}

/// Non-saturating generator loss: mean of `-log D(fake)`.
pub fn adversarial_gen_loss<T: Scalar>(scores: &[T], eps: f64) -> Result<LossGrad<T, T>> {
    if scores.is_empty() {
        return Err(Error::Validation("empty score batch".into()));
    }
    let n = T::from_usize(scores.len()).unwrap();
    let mut value = T::zero();
    let grads = scores
        .iter()
        .map(|&s| {
            let (c, clamped) = clamp_prob(s, eps);
            value += -c.ln() / n;
            if clamped {
                T::zero()
            } else {
                -T::one() / (n * c)
            }
        })
        .collect();
    Ok(LossGrad { value, grads })
}

/// Binary cross-entropy averaged over every pixel of every sample.
/// Targets must be exactly 0 or 1.
pub fn saliency_bce_loss<T: Scalar>(
    pred: &[Tensor<T>],
    target: &[Tensor<T>],
    eps: f64,
) -> Result<LossGrad<T, Tensor<T>>> {
    check_pairs(pred, target)?;
    if let Some(i) = target.iter().position(|t| t.data().iter().any(|&v| v != T::zero() && v != T::one())) {
        return Err(Error::Validation(format!("target map {i} is not binary")));
    }
    let total = T::from_usize(pred.iter().map(|p| p.len()).sum()).unwrap();
    let mut value = T::zero();
    let mut grads = Vec::with_capacity(pred.len());
    for (p, z) in pred.iter().zip(target) {
        let mut g = p.clone();
        for (gv, (&pv, &zv)) in g.data_mut().iter_mut().zip(p.data().iter().zip(z.data())) {
            let (c, clamped) = clamp_prob(pv, eps);
            let positive = zv == T::one();
            value += -(if positive { c.ln() } else { (T::one() - c).ln() }) / total;
            *gv = if clamped {
                T::zero()
            } else if positive {
                -T::one() / (total * c)
            } else {
                T::one() / (total * (T::one() - c))
            };
        }
        grads.push(g);
    }
    Ok(LossGrad { value, grads })
}

/// Discriminator objective: `mean(-log real) + mean(-log(1 - fake))`.
/// Returns the gradients for the real and the fake scores.
pub fn discriminator_loss<T: Scalar>(
    real: &[T],
    fake: &[T],
    eps: f64,
) -> Result<(T, Vec<T>, Vec<T>)> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Validation("empty score batch".into()));
    }
    let on_real = adversarial_gen_loss(real, eps)?;
    let flipped: Vec<T> = fake.iter().map(|&f| T::one() - f).collect();
    let on_fake = adversarial_gen_loss(&flipped, eps)?;
    let fake_grads = on_fake.grads.into_iter().map(|g| -g).collect();
    Ok((on_real.value + on_fake.value, on_real.grads, fake_grads))
}

/// Denoiser objective: content plus `w1` times adversarial.
pub fn total_denoise_loss(content: f64, adversarial: f64, w: &LossWeights) -> f64 {
    content + w.w1 * adversarial
}

/// Saliency objective: BCE plus `w2` times adversarial plus `w3` times cyclic.
pub fn total_sod_loss(bce: f64, adversarial: f64, cyclic: f64, w: &LossWeights) -> f64 {
    bce + w.w2 * adversarial + w.w3 * cyclic
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t(data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(1, 2, data.len() / 2, data.to_vec()).unwrap()
    }

    #[test]
    fn content_loss_hand_values() {
        let target = t(&[0.2, 0.4, 0.6, 0.8]);
        let pred = target.map(|v| v + 0.1);
        assert_eq!(denoise_content_loss(&[target.clone()], &[target.clone()], false).unwrap().value, 0.0);
        let l = denoise_content_loss(&[pred.clone()], &[target.clone()], false).unwrap().value;
        assert_relative_eq!(l, 0.2, epsilon = 1e-12);
        let doubled = target.map(|v| v + 0.2);
        let l2 = denoise_content_loss(&[doubled], &[target.clone()], false).unwrap().value;
        assert_relative_eq!(l2, 2.0 * l, epsilon = 1e-12);
        let mse = denoise_content_loss(&[pred], &[target], true).unwrap().value;
        assert_relative_eq!(mse, 0.01, epsilon = 1e-12);
    }

    #[test]
    fn cycle_loss_is_symmetric() {
        let a = t(&[0.1, 0.5, 0.9, 0.3]);
        let b = t(&[0.7, 0.2, 0.4, 0.3]);
        let ab = cycle_loss(&[a.clone()], &[b.clone()], false).unwrap().value;
        let ba = cycle_loss(&[b], &[a], false).unwrap().value;
        assert_eq!(ab, ba);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let a = t(&[0.1, 0.5, 0.9, 0.3]);
        let b = Tensor::zeros(1, 1, 4);
        assert!(denoise_content_loss(&[a.clone()], &[b], false).is_err());
        assert!(cycle_loss(&[a.clone()], &[], false).is_err());
    }

    #[test]
    fn adversarial_hand_values() {
        let eps = DEFAULT_EPS;
        assert!(adversarial_gen_loss(&[1.0 - eps], eps).unwrap().value < 1e-6);
        assert_relative_eq!(adversarial_gen_loss(&[0.5], eps).unwrap().value, 0.693147, epsilon = 1e-6);
        assert_relative_eq!(adversarial_gen_loss(&[0.25, 0.25], eps).unwrap().value, 1.386294, epsilon = 1e-6);
    }

    #[test]
    fn bce_hand_values() {
        let eps = DEFAULT_EPS;
        let z = t(&[1.0, 0.0, 0.0, 1.0]);
        let p = t(&[0.9, 0.1, 0.2, 0.8]);
        let l = saliency_bce_loss(&[p], &[z.clone()], eps).unwrap().value;
        assert_relative_eq!(l, 0.164252, epsilon = 1e-6);
        let half = t(&[0.5; 4]);
        assert_relative_eq!(saliency_bce_loss(&[half], &[z.clone()], eps).unwrap().value, 2f64.ln(), epsilon = 1e-12);
        // a perfect prediction costs at most -log(1 - eps)
        let perfect = saliency_bce_loss(&[z.clone()], &[z.clone()], eps).unwrap().value;
        assert!(perfect <= -(1.0 - eps).ln() + 1e-15);
        assert!(saliency_bce_loss(&[z.clone()], &[t(&[0.5, 0.0, 1.0, 1.0])], eps).is_err());
    }

    #[test]
    fn bce_minimum_sits_at_target() {
        for target in [0.0, 1.0] {
            let z = Tensor::<f64>::filled(1, 1, 1, target);
            let best = (1..1000)
                .map(|k| k as f64 / 1000.0)
                .min_by(|&a, &b| {
                    let la = saliency_bce_loss(&[Tensor::filled(1, 1, 1, a)], &[z.clone()], 1e-7).unwrap().value;
                    let lb = saliency_bce_loss(&[Tensor::filled(1, 1, 1, b)], &[z.clone()], 1e-7).unwrap().value;
                    la.partial_cmp(&lb).unwrap()
                })
                .unwrap();
            assert!((best - target).abs() < 2e-3, "target {target} best {best}");
        }
    }

    #[test]
    fn discriminator_hand_values() {
        let eps = DEFAULT_EPS;
        let (perfect, _, _) = discriminator_loss(&[1.0 - eps], &[eps], eps).unwrap();
        assert!(perfect < 1e-6);
        let (half, _, _) = discriminator_loss(&[0.5], &[0.5], eps).unwrap();
        assert_relative_eq!(half, 1.386294, epsilon = 1e-6);
        let (hi, _, _) = discriminator_loss(&[0.9], &[0.3], eps).unwrap();
        let (lo, _, _) = discriminator_loss(&[0.6], &[0.3], eps).unwrap();
        assert!(hi < lo);
    }

    #[test]
    fn totals_are_weighted_sums() {
        let w0 = LossWeights { w1: 0.0, w2: 0.0, w3: 0.0, ..Default::default() };
        assert_eq!(total_denoise_loss(1.0, 2.0, &w0), 1.0);
        assert_eq!(total_denoise_loss(1.0, 2.0, &LossWeights { w1: 0.5, ..w0 }), 2.0);
        assert_eq!(total_sod_loss(1.0, 1.0, 1.0, &w0), 1.0);
        let w = LossWeights { w2: 0.1, w3: 0.5, ..w0 };
        assert_relative_eq!(total_sod_loss(1.0, 2.0, 3.0, &w), 2.7, epsilon = 1e-12);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights { w2: -1.0, ..Default::default() }.validate().is_err());
        assert!(LossWeights { eps: 0.1, ..Default::default() }.validate().is_err());
    }
}
