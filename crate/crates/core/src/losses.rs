//! Training objectives and their input gradients.
//!
//! Every loss here is a scalar mean, so gradients already carry the 1/N
//! batch factor and optimizer steps are batch-size independent. Composite
//! losses return their terms separately; `total` is always the exact sum
//! of the weighted parts.

use ndarray::{Array2, ArrayD};

use crate::models::LatentDistribution;

/// Probabilities are clamped to [CLAMP, 1 - CLAMP] inside the logs so a
/// saturated sigmoid cannot produce an infinite loss.
pub const CLAMP: f64 = 1e-7;

fn clamp01(p: f64) -> f64 {
    p.clamp(CLAMP, 1.0 - CLAMP)
}

/// Element-mean binary cross-entropy, -mean(t ln p + (1-t) ln(1-p)).
pub fn bce(pred: &ArrayD<f64>, target: &ArrayD<f64>) -> f64 {
    assert_eq!(pred.shape(), target.shape(), "bce shape mismatch");
    let n = pred.len() as f64;
    let mut acc = 0.0;
    for (&p, &t) in pred.iter().zip(target.iter()) {
        let p = clamp01(p);
        acc -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    acc / n
}

/// d bce / d pred. The loss is computed on the clamped probability, so
/// inside the clamped zone the loss is constant and the gradient is
/// exactly zero; anything else would disagree with the loss actually
/// being minimized.
pub fn bce_grad(pred: &ArrayD<f64>, target: &ArrayD<f64>) -> ArrayD<f64> {
    assert_eq!(pred.shape(), target.shape(), "bce shape mismatch");
    let n = pred.len() as f64;
    let mut grad = pred.clone();
    for (g, &t) in grad.iter_mut().zip(target.iter()) {
        let p = *g;
        *g = if p < CLAMP || p > 1.0 - CLAMP {
            0.0
        } else {
            (-t / p + (1.0 - t) / (1.0 - p)) / n
        };
    }
    grad
}

/// Element-mean squared error.
pub fn mse(pred: &ArrayD<f64>, target: &ArrayD<f64>) -> f64 {
    assert_eq!(pred.shape(), target.shape(), "mse shape mismatch");
    let n = pred.len() as f64;
    pred.iter()
        .zip(target.iter())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

pub fn mse_grad(pred: &ArrayD<f64>, target: &ArrayD<f64>) -> ArrayD<f64> {
    assert_eq!(pred.shape(), target.shape(), "mse shape mismatch");
    let n = pred.len() as f64;
    let mut grad = pred - target;
    grad.mapv_inplace(|d| 2.0 * d / n);
    grad
}

/// KL divergence of the diagonal-Gaussian posterior from the standard
/// normal: -0.5 * sum_dims(1 + logvar - mean^2 - exp(logvar)), averaged
/// over the batch. Zero exactly when mean = 0 and logvar = 0.
pub fn kld(dist: &LatentDistribution) -> f64 {
    let n = dist.mean.nrows() as f64;
    let mut acc = 0.0;
    for (&m, &lv) in dist.mean.iter().zip(dist.log_variance.iter()) {
        acc += -0.5 * (1.0 + lv - m * m - lv.exp());
    }
    acc / n
}

/// Gradients of `kld` with respect to (mean, log_variance).
pub fn kld_grad(dist: &LatentDistribution) -> (Array2<f64>, Array2<f64>) {
    let n = dist.mean.nrows() as f64;
    let dmean = dist.mean.mapv(|m| m / n);
    let dlogvar = dist.log_variance.mapv(|lv| 0.5 * (lv.exp() - 1.0) / n);
    (dmean, dlogvar)
}

/// Terms of a VAE objective. `total = content + kld_weight * kld`.
#[derive(Debug, Clone, Copy)]
pub struct VaeLossTerms {
    pub total: f64,
    pub content: f64,
    pub kld: f64,
}

/// Reconstruction BCE plus weighted KL, for maps in (0,1).
pub fn saliency_vae_loss(
    pred: &ArrayD<f64>,
    target: &ArrayD<f64>,
    dist: &LatentDistribution,
    kld_weight: f64,
) -> VaeLossTerms {
    let content = bce(pred, target);
    let k = kld(dist);
    VaeLossTerms {
        total: content + kld_weight * k,
        content,
        kld: k,
    }
}

/// Reconstruction MSE plus weighted KL, for unbounded EEG-image values.
pub fn eeg_vae_loss(
    pred: &ArrayD<f64>,
    target: &ArrayD<f64>,
    dist: &LatentDistribution,
    kld_weight: f64,
) -> VaeLossTerms {
    let content = mse(pred, target);
    let k = kld(dist);
    VaeLossTerms {
        total: content + kld_weight * k,
        content,
        kld: k,
    }
}

/// Terms of the translator objective.
///
/// `total = content + kld_weight * kld + adversarial`, where the
/// adversarial part scores the generated map against the real label.
/// `adversarial_real` is the discriminator's BCE on the ground-truth map;
/// it is recorded for monitoring only and contributes no gradient.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorLossTerms {
    pub total: f64,
    pub content: f64,
    pub kld: f64,
    pub adversarial: f64,
    pub adversarial_real: f64,
}

pub fn generator_loss(
    pred: &ArrayD<f64>,
    target: &ArrayD<f64>,
    dist: &LatentDistribution,
    d_fake: &Array2<f64>,
    d_real: &Array2<f64>,
    kld_weight: f64,
) -> GeneratorLossTerms {
    let content = bce(pred, target);
    let k = kld(dist);
    let ones = ArrayD::ones(d_fake.shape().to_vec());
    let adversarial = bce(&d_fake.to_owned().into_dyn(), &ones);
    let adversarial_real = bce(&d_real.to_owned().into_dyn(), &ones);
    GeneratorLossTerms {
        total: content + kld_weight * k + adversarial,
        content,
        kld: k,
        adversarial,
        adversarial_real,
    }
}

/// Gradient of the generator's adversarial term with respect to the
/// discriminator's fake scores, to be backpropagated through the frozen
/// discriminator into the generated map.
pub fn generator_adv_grad(d_fake: &Array2<f64>) -> Array2<f64> {
    let ones = ArrayD::ones(d_fake.shape().to_vec());
    let g = bce_grad(&d_fake.to_owned().into_dyn(), &ones);
    g.into_dimensionality().expect("score grad is 2-d")
}

/// Terms of the discriminator objective: real maps scored against 1,
/// generated maps against 0. `total = real + fake`.
#[derive(Debug, Clone, Copy)]
pub struct DiscriminatorLossTerms {
    pub total: f64,
    pub real: f64,
    pub fake: f64,
}

pub fn discriminator_loss(d_real: &Array2<f64>, d_fake: &Array2<f64>) -> DiscriminatorLossTerms {
    let ones = ArrayD::ones(d_real.shape().to_vec());
    let zeros = ArrayD::zeros(d_fake.shape().to_vec());
    let real = bce(&d_real.to_owned().into_dyn(), &ones);
    let fake = bce(&d_fake.to_owned().into_dyn(), &zeros);
    DiscriminatorLossTerms {
        total: real + fake,
        real,
        fake,
    }
}

/// Gradients of `discriminator_loss` with respect to (d_real, d_fake).
pub fn discriminator_grad(
    d_real: &Array2<f64>,
    d_fake: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let ones = ArrayD::ones(d_real.shape().to_vec());
    let zeros = ArrayD::zeros(d_fake.shape().to_vec());
    let gr = bce_grad(&d_real.to_owned().into_dyn(), &ones);
    let gf = bce_grad(&d_fake.to_owned().into_dyn(), &zeros);
    (
        gr.into_dimensionality().expect("score grad is 2-d"),
        gf.into_dimensionality().expect("score grad is 2-d"),
    )
}
