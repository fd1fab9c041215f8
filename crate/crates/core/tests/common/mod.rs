//! Finite-difference helpers shared by the gradient and acceptance suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seisr::losses::LossValue;
use seisr::model::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec};
use seisr::nn::{Mode, Module, Tensor};

// Small enough that a perturbation rarely carries an activation across a
// PReLU/LeakyReLU kink; batch-norm couples every unit to every input, so a
// larger step crosses many of them.
pub const STEP: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-3;
// Central-difference roundoff is about eps·|f|/STEP; below this both
// gradients are numerically zero (conv biases ahead of batch-norm).
pub const ABS_FLOOR: f64 = 1e-7;

pub fn random_tensor(shape: [usize; 4], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn agree(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS_FLOOR || diff <= REL_TOL * analytic.abs().max(numeric.abs())
}

pub fn central(f: &mut dyn FnMut(f64) -> f64) -> f64 {
    (f(STEP) - f(-STEP)) / (2.0 * STEP)
}

/// Up to `count` spread-out indices of a buffer of length `n`.
pub fn picks(n: usize, count: usize) -> Vec<usize> {
    if n <= count {
        return (0..n).collect();
    }
    (0..count).map(|i| i * (n - 1) / (count - 1)).collect()
}

pub fn weighted_sum(y: &Tensor<f64>, w: &[f64]) -> f64 {
    y.data().iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Checks every trainable tensor of `m` at a few entries; `eval` runs the
/// forward pass and returns the scalar objective.
pub fn check_params<M: Module<f64>>(m: &mut M, eval: &mut dyn FnMut(&mut M) -> f64, per_tensor: usize) -> Vec<String> {
    let mut grads = Vec::new();
    m.visit("", &mut |name, p| {
        if p.trainable() {
            grads.push((name.to_string(), p.grad.clone()));
        }
    });
    assert!(!grads.is_empty());
    let mut failures = Vec::new();
    for (name, grad) in &grads {
        for idx in picks(grad.len(), per_tensor) {
            let mut at = |delta: f64| {
                m.visit_mut("", &mut |n, p| {
                    if n == name {
                        p.value[idx] += delta;
                    }
                });
                let v = eval(m);
                m.visit_mut("", &mut |n, p| {
                    if n == name {
                        p.value[idx] -= delta;
                    }
                });
                v
            };
            let numeric = central(&mut at);
            if !agree(grad[idx], numeric) {
                failures.push(format!("{name}[{idx}]: analytic {} numeric {numeric}", grad[idx]));
            }
        }
    }
    failures
}

pub fn check_input(
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    eval: &mut dyn FnMut(&Tensor<f64>) -> f64,
    count: usize,
) -> Vec<String> {
    let mut failures = Vec::new();
    for idx in picks(x.len(), count) {
        let mut at = |delta: f64| {
            let mut xp = x.clone();
            xp.data_mut()[idx] += delta;
            eval(&xp)
        };
        let numeric = central(&mut at);
        if !agree(analytic.data()[idx], numeric) {
            failures.push(format!("input[{idx}]: analytic {} numeric {numeric}", analytic.data()[idx]));
        }
    }
    failures
}

/// Mismatches of a loss gradient with respect to every element of `x`.
pub fn check_loss(x: &Tensor<f64>, loss: &mut dyn FnMut(&Tensor<f64>) -> LossValue<f64>) -> Vec<String> {
    let analytic = loss(x).grad;
    check_input(x, &analytic, &mut |xp| loss(xp).value, x.len())
}

/// Parameter and input gradients of a width-8, two-block generator on
/// 4×4 inputs.
pub fn generator_mismatches(seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = GeneratorSpec { width: 8, residual_blocks: 2, ..GeneratorSpec::default() };
    let mut g = Generator::<f64>::new(&spec, &mut rng);
    let x = random_tensor([2, 3, 4, 4], 0.0, 1.0, &mut rng);
    let y = g.forward(&x, Mode::Train).unwrap();
    assert_eq!(y.shape(), [2, 3, 32, 32]);
    let w: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    g.zero_grad();
    let dx = g.backward(&Tensor::from_vec(y.shape(), w.clone()).unwrap());

    let mut failures = check_params(&mut g, &mut |g| weighted_sum(&g.forward(&x, Mode::Train).unwrap(), &w), 4);
    failures.extend(check_input(&x, &dx, &mut |xp| weighted_sum(&g.forward(xp, Mode::Train).unwrap(), &w), 24));
    failures
}

/// Same for a reduced discriminator. A 32×32 input keeps more than one
/// value per channel in the last batch-norm.
pub fn discriminator_mismatches(seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Discriminator::<f64>::new(&DiscriminatorSpec::reduced(8), &mut rng);
    let x = random_tensor([2, 3, 32, 32], 0.0, 1.0, &mut rng);
    let y = d.forward(&x, Mode::Train).unwrap();
    let w: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    d.zero_grad();
    let dx = d.backward(&Tensor::from_vec(y.shape(), w.clone()).unwrap());

    let mut failures = check_params(&mut d, &mut |d| weighted_sum(&d.forward(&x, Mode::Train).unwrap(), &w), 4);
    failures.extend(check_input(&x, &dx, &mut |xp| weighted_sum(&d.forward(xp, Mode::Train).unwrap(), &w), 24));
    failures
}
