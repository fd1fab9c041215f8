use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seisr::metrics::{mse_image, psnr, score, ssim, MetricImage, SsimParams};

fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> MetricImage {
    MetricImage::new(h, w, 3, (0..h * w * 3).map(|_| rng.gen()).collect()).unwrap()
}

fn mse_oracle(a: &MetricImage, b: &MetricImage) -> f64 {
    let (h, w, o) = a.shape();
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            for c in 0..o {
                let d = a.get(y, x, c) as f64 - b.get(y, x, c) as f64;
                sum += d * d;
            }
        }
    }
    sum / (h * w * o) as f64
}

/// Single-pass moments (E[x²] − E[x]²), unlike the library's two-pass form.
fn ssim_window_oracle(a: &MetricImage, b: &MetricImage, c: usize, y0: usize, x0: usize, k: (usize, usize)) -> f64 {
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let c3 = c2 / 2.0;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for y in y0..y0 + k.0 {
        for x in x0..x0 + k.1 {
            let p = a.get(y, x, c) as f64;
            let q = b.get(y, x, c) as f64;
            sx += p;
            sy += q;
            sxx += p * p;
            syy += q * q;
            sxy += p * q;
        }
    }
    let n = (k.0 * k.1) as f64;
    let (mx, my) = (sx / n, sy / n);
    let vx = (sxx / n - mx * mx).max(0.0);
    let vy = (syy / n - my * my).max(0.0);
    let cov = sxy / n - mx * my;
    let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
    let con = (2.0 * vx.sqrt() * vy.sqrt() + c2) / (vx + vy + c2);
    let s = (cov + c3) / (vx.sqrt() * vy.sqrt() + c3);
    l * con * s
}

fn ssim_oracle(a: &MetricImage, b: &MetricImage, window: Option<usize>) -> f64 {
    let (h, w, o) = a.shape();
    let mut total = 0.0;
    for c in 0..o {
        total += match window {
            None => ssim_window_oracle(a, b, c, 0, 0, (h, w)),
            Some(k) => {
                let mut acc = 0.0;
                for y in 0..=h - k {
                    for x in 0..=w - k {
                        acc += ssim_window_oracle(a, b, c, y, x, (k, k));
                    }
                }
                acc / ((h - k + 1) * (w - k + 1)) as f64
            }
        };
    }
    total / o as f64
}

#[test]
fn metrics_match_brute_force_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let a = random_image(8, 8, &mut rng);
        let b = random_image(8, 8, &mut rng);
        let mse = mse_oracle(&a, &b);
        assert_eq!(mse_image(&a, &b).unwrap(), mse);
        assert!((psnr(&a, &b).unwrap() - 10.0 * (65025.0 / mse).log10()).abs() < 1e-9);
        assert!((ssim(&a, &b, &SsimParams::default()).unwrap() - ssim_oracle(&a, &b, None)).abs() < 1e-9);
    }
    for _ in 0..20 {
        let a = random_image(12, 10, &mut rng);
        let b = random_image(12, 10, &mut rng);
        let got = ssim(&a, &b, &SsimParams::sliding(8)).unwrap();
        assert!((got - ssim_oracle(&a, &b, Some(8))).abs() < 1e-9);
    }
}

#[test]
fn mse_on_small_pair_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let a = random_image(4, 4, &mut rng);
    let b = random_image(4, 4, &mut rng);
    assert_eq!(mse_image(&a, &b).unwrap(), mse_oracle(&a, &b));
}

#[test]
fn score_bundles_all_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let a = random_image(8, 8, &mut rng);
    let b = random_image(8, 8, &mut rng);
    let s = score(&a, &b, &SsimParams::default()).unwrap();
    assert_eq!(s.mse, mse_image(&a, &b).unwrap());
    assert_eq!(s.psnr, psnr(&a, &b).unwrap());
    assert_eq!(s.ssim, ssim(&a, &b, &SsimParams::default()).unwrap());
}

#[test]
fn ssim_is_bounded_over_many_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for i in 0..10_000 {
        let a = random_image(4, 4, &mut rng);
        // mix in correlated and anti-correlated pairs
        let b = match i % 3 {
            0 => random_image(4, 4, &mut rng),
            1 => MetricImage::new(4, 4, 3, a.data().iter().map(|v| 255 - v).collect()).unwrap(),
            _ => MetricImage::new(4, 4, 3, a.data().iter().map(|v| v.saturating_add(rng.gen_range(0..8))).collect())
                .unwrap(),
        };
        let s = ssim(&a, &b, &SsimParams::default()).unwrap();
        assert!((-1.0..=1.0).contains(&s), "{s}");
    }
}

proptest! {
    #[test]
    fn symmetry_and_identity(data_a in prop::collection::vec(any::<u8>(), 6 * 5 * 3), data_b in prop::collection::vec(any::<u8>(), 6 * 5 * 3)) {
        let a = MetricImage::new(6, 5, 3, data_a).unwrap();
        let b = MetricImage::new(6, 5, 3, data_b).unwrap();
        let p = SsimParams::default();
        prop_assert_eq!(mse_image(&a, &b).unwrap(), mse_image(&b, &a).unwrap());
        prop_assert_eq!(ssim(&a, &b, &p).unwrap(), ssim(&b, &a, &p).unwrap());
        prop_assert_eq!(mse_image(&a, &a).unwrap(), 0.0);
        prop_assert!((ssim(&a, &a, &p).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((ssim(&a, &a, &SsimParams::sliding(4)).unwrap() - 1.0).abs() < 1e-12);
        prop_assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_decreases_as_mse_grows(base in prop::collection::vec(0u8..128, 16 * 3), steps in prop::collection::vec(1u8..8, 1..6)) {
        let a = MetricImage::new(4, 4, 3, base.clone()).unwrap();
        let mut offset = 0u8;
        let mut last = (0.0, f64::INFINITY);
        for s in steps {
            offset += s;
            let b = MetricImage::new(4, 4, 3, base.iter().map(|v| v + offset).collect()).unwrap();
            let (m, p) = (mse_image(&a, &b).unwrap(), psnr(&a, &b).unwrap());
            prop_assert!(m > last.0 && p < last.1);
            last = (m, p);
        }
    }
}
