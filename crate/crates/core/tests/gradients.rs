//! Central finite differences against the analytic backward passes, in f64.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{check_input, check_loss, random_tensor, weighted_sum};
use seisr::losses::{self, AdversarialMode};
use seisr::model::{Discriminator, DiscriminatorSpec, FeatureExtractor, VggFeatures};
use seisr::nn::{Mode, Module, Tensor};

#[test]
fn reduced_generator_gradients() {
    let failures = common::generator_mismatches(11);
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn reduced_discriminator_gradients() {
    let failures = common::discriminator_mismatches(12);
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn frozen_discriminator_input_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut d = Discriminator::<f64>::new(&DiscriminatorSpec::reduced(8), &mut rng);
    d.set_learning(false);
    let x = random_tensor([2, 3, 32, 32], 0.0, 1.0, &mut rng);
    let y = d.forward(&x, Mode::Train).unwrap();
    let w: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dx = d.backward(&Tensor::from_vec(y.shape(), w.clone()).unwrap());
    let failures = check_input(&x, &dx, &mut |xp| weighted_sum(&d.forward(xp, Mode::Train).unwrap(), &w), 24);
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn pixel_loss_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let hr = random_tensor([1, 3, 4, 4], 0.0, 1.0, &mut rng);
    let gen = random_tensor([1, 3, 4, 4], 0.0, 1.0, &mut rng);
    let failures = check_loss(&gen, &mut |g| losses::pixel_loss(&hr, g).unwrap());
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn adversarial_and_discriminator_term_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let scores = random_tensor([1, 1, 4, 4], -3.0, 3.0, &mut rng);
    for mode in [AdversarialMode::LeastSquares, AdversarialMode::BinaryCrossEntropy] {
        let mut failures = check_loss(&scores, &mut |s| losses::adversarial_loss_generator(s, mode));
        failures.extend(check_loss(&scores, &mut |s| losses::discriminator_real_term(s, mode)));
        failures.extend(check_loss(&scores, &mut |s| losses::discriminator_fake_term(s, mode)));
        assert!(failures.is_empty(), "{mode:?}: {failures:#?}");
    }
}

#[test]
fn discriminator_loss_gradients_split_by_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let real = random_tensor([1, 1, 4, 4], -2.0, 2.0, &mut rng);
    let fake = random_tensor([1, 1, 4, 4], -2.0, 2.0, &mut rng);
    for mode in [AdversarialMode::LeastSquares, AdversarialMode::BinaryCrossEntropy] {
        let l = losses::discriminator_loss(&real, &fake, mode);
        let f1 = check_input(&real, &l.grad_real, &mut |r| losses::discriminator_loss(r, &fake, mode).value, 16);
        let f2 = check_input(&fake, &l.grad_fake, &mut |f| losses::discriminator_loss(&real, f, mode).value, 16);
        assert!(f1.is_empty() && f2.is_empty(), "{f1:#?} {f2:#?}");
    }
}

#[test]
fn content_loss_gradient_through_feature_extractor() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    // conv, relu, conv, relu, pool at a sixteenth of the VGG widths
    let mut phi = VggFeatures::<f64>::random(5, 16, 3);
    let before = phi.fingerprint();
    let hr = random_tensor([1, 3, 4, 4], 0.0, 1.0, &mut rng);
    let gen = random_tensor([1, 3, 4, 4], 0.0, 1.0, &mut rng);
    let failures = check_loss(&gen, &mut |g| losses::content_loss(&hr, g, &mut phi).unwrap());
    assert!(failures.is_empty(), "{failures:#?}");
    assert_eq!(phi.fingerprint(), before);
    assert_eq!(phi.checksum(), before);
}
