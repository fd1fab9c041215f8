//! Generator and discriminator objectives.
//!
//! Every loss returns its value together with the gradient with respect to
//! the tensor it is differentiated against, so the training loop can chain
//! straight into the networks' backward passes.

use std::fmt;
use std::str::FromStr;

use crate::model::FeatureExtractor;
use crate::nn::{sigmoid, Mode, Scalar, Tensor};

/// Floor applied inside every logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 4], [usize; 4]),
    #[error("non-finite loss (content={content}, adversarial={adversarial}, pixel={pixel})")]
    NonFiniteLoss { content: f64, adversarial: f64, pixel: f64 },
    #[error("loss weights must be non-negative")]
    NegativeWeight,
}

/// How the discriminator's raw scores are turned into a loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AdversarialMode {
    /// Squared error against targets 1 (real) and 0 (generated).
    #[default]
    LeastSquares,
    /// Log-loss on sigmoid-squashed scores.
    BinaryCrossEntropy,
}

impl fmt::Display for AdversarialMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LeastSquares => "least_squares",
            Self::BinaryCrossEntropy => "binary_cross_entropy",
        })
    }
}

impl FromStr for AdversarialMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "least_squares" | "lsgan" | "mse" => Ok(Self::LeastSquares),
            "binary_cross_entropy" | "bce" => Ok(Self::BinaryCrossEntropy),
            other => Err(format!("unknown adversarial mode `{other}`")),
        }
    }
}

/// Coefficients of the adversarial (λ) and pixel (β) terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_adv: f64,
    pub beta_pixel: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_adv: 0.001, beta_pixel: 10.0 }
    }
}

impl LossWeights {
    pub fn new(lambda_adv: f64, beta_pixel: f64) -> Result<Self, LossError> {
        if lambda_adv < 0.0 || beta_pixel < 0.0 || lambda_adv.is_nan() || beta_pixel.is_nan() {
            return Err(LossError::NegativeWeight);
        }
        Ok(Self { lambda_adv, beta_pixel })
    }
}

/// A scalar loss and its gradient.
#[derive(Clone, Debug)]
pub struct LossValue<T> {
    pub value: f64,
    pub grad: Tensor<T>,
}

fn check_same<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(), LossError> {
    if a.shape() != b.shape() {
        return Err(LossError::ShapeMismatch(a.shape(), b.shape()));
    }
    Ok(())
}

/// Mean squared difference and its gradient with respect to `gen`.
fn mse_against<T: Scalar>(target: &Tensor<T>, gen: &Tensor<T>) -> LossValue<T> {
    let n = gen.len() as f64;
    let mut sum = 0.0;
    let mut grad = Tensor::zeros(gen.shape());
    for ((g, &t), &p) in grad.data_mut().iter_mut().zip(target.data()).zip(gen.data()) {
        let d = p.as_f64() - t.as_f64();
        sum += d * d;
        *g = T::of(2.0 * d / n);
    }
    LossValue { value: sum / n, grad }
}

/// Mean of squared pixel differences; gradient is with respect to `gen`.
pub fn pixel_loss<T: Scalar>(hr: &Tensor<T>, gen: &Tensor<T>) -> Result<LossValue<T>, LossError> {
    check_same(hr, gen)?;
    Ok(mse_against(hr, gen))
}

/// Mean over feature elements of `(φ(hr) − φ(gen))²`; gradient is with
/// respect to `gen`, routed through φ's input path.
pub fn content_loss<T: Scalar>(
    hr: &Tensor<T>,
    gen: &Tensor<T>,
    phi: &mut dyn FeatureExtractor<T>,
) -> Result<LossValue<T>, LossError> {
    check_same(hr, gen)?;
    let target = phi.extract(hr, Mode::Eval);
    let features = phi.extract(gen, Mode::Train);
    let LossValue { value, grad } = mse_against(&target, &features);
    Ok(LossValue { value, grad: phi.backward_input(&grad) })
}

fn clamped_ln(p: f64) -> f64 {
    p.max(LOG_CLAMP).ln()
}

/// Generator's adversarial term on raw discriminator scores of generated
/// images; gradient is with respect to those scores.
pub fn adversarial_loss_generator<T: Scalar>(d_fake: &Tensor<T>, mode: AdversarialMode) -> LossValue<T> {
    match mode {
        AdversarialMode::LeastSquares => mse_against(&Tensor::full(d_fake.shape(), T::one()), d_fake),
        AdversarialMode::BinaryCrossEntropy => {
            let n = d_fake.len() as f64;
            let mut sum = 0.0;
            let mut grad = Tensor::zeros(d_fake.shape());
            for (g, &s) in grad.data_mut().iter_mut().zip(d_fake.data()) {
                let p = sigmoid(s.as_f64());
                sum -= clamped_ln(p);
                // d/ds −ln σ(s) = −σ(−s); zero where the clamp is active
                *g = if p > LOG_CLAMP { T::of(-sigmoid(-s.as_f64()) / n) } else { T::zero() };
            }
            LossValue { value: sum / n, grad }
        }
    }
}

/// Discriminator objective with gradients for both score maps.
#[derive(Clone, Debug)]
pub struct DiscriminatorLoss<T> {
    pub value: f64,
    pub grad_real: Tensor<T>,
    pub grad_fake: Tensor<T>,
}

/// Discriminator term on scores of real images (target "real").
pub fn discriminator_real_term<T: Scalar>(d_real: &Tensor<T>, mode: AdversarialMode) -> LossValue<T> {
    // identical to the generator's objective on its own fakes
    adversarial_loss_generator(d_real, mode)
}

/// Discriminator term on scores of generated images (target "fake").
pub fn discriminator_fake_term<T: Scalar>(d_fake: &Tensor<T>, mode: AdversarialMode) -> LossValue<T> {
    match mode {
        AdversarialMode::LeastSquares => mse_against(&Tensor::zeros(d_fake.shape()), d_fake),
        AdversarialMode::BinaryCrossEntropy => {
            let n = d_fake.len() as f64;
            let mut sum = 0.0;
            let mut grad = Tensor::zeros(d_fake.shape());
            for (g, &s) in grad.data_mut().iter_mut().zip(d_fake.data()) {
                // 1 − σ(s) == σ(−s), computed without cancellation
                let q = sigmoid(-s.as_f64());
                sum -= clamped_ln(q);
                *g = if q > LOG_CLAMP { T::of(sigmoid(s.as_f64()) / n) } else { T::zero() };
            }
            LossValue { value: sum / n, grad }
        }
    }
}

pub fn discriminator_loss<T: Scalar>(
    d_real: &Tensor<T>,
    d_fake: &Tensor<T>,
    mode: AdversarialMode,
) -> DiscriminatorLoss<T> {
    let real = discriminator_real_term(d_real, mode);
    let fake = discriminator_fake_term(d_fake, mode);
    DiscriminatorLoss { value: real.value + fake.value, grad_real: real.grad, grad_fake: fake.grad }
}

/// `content + λ·adversarial + β·pixel`, rejecting non-finite inputs.
pub fn total_generator_loss(content: f64, adversarial: f64, pixel: f64, w: &LossWeights) -> Result<f64, LossError> {
    let total = content + w.lambda_adv * adversarial + w.beta_pixel * pixel;
    if !(content.is_finite() && adversarial.is_finite() && pixel.is_finite() && total.is_finite()) {
        return Err(LossError::NonFiniteLoss { content, adversarial, pixel });
    }
    Ok(total)
}
