use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seisr::analysis::{
    build_comparison_report, fourier_amplitude_spectrum, interpolate_record, linear_interp_upsample, time_domain_mse,
    REPORT_CHANNEL_ORDER,
};
use seisr::codec::{self, decimate_tile, decode_tiles, encode_record, DECIMATION};
use seisr::gm_io::{synthesize_record, Channel};
use seisr::metrics::{self, MetricImage, SsimParams};

/// Parseval for the one-sided `dt·|DFT|` spectrum: `Σx²·dt` against
/// `(1/(n·dt))·(A₀² + 2·Σ A_k² + A_{n/2}²)`, interior bins counted twice.
fn parseval_sides(x: &[f64], dt: f64) -> (f64, f64) {
    let n = x.len();
    let s = fourier_amplitude_spectrum(x, dt).unwrap();
    let energy = x.iter().map(|v| v * v).sum::<f64>() * dt;
    let a = &s.amplitudes;
    let last = a.len() - 1;
    let mut sum = a[0] * a[0];
    for (k, v) in a.iter().enumerate().skip(1) {
        let twice = !(n.is_multiple_of(2) && k == last);
        sum += if twice { 2.0 } else { 1.0 } * v * v;
    }
    (energy, sum / (n as f64 * dt))
}

#[test]
fn sinusoid_peak_height_and_location() {
    let (n, dt, amp) = (4096, 0.01, 2.5);
    let cycles = 205.0;
    let f = cycles / (n as f64 * dt);
    let x: Vec<f64> = (0..n).map(|i| amp * (std::f64::consts::TAU * f * i as f64 * dt + 0.3).sin()).collect();
    let s = fourier_amplitude_spectrum(&x, dt).unwrap();
    let (k, peak) = s.amplitudes.iter().enumerate().fold((0, 0.0), |m, (k, &a)| if a > m.1 { (k, a) } else { m });
    assert_eq!(k, cycles as usize);
    assert!((s.frequencies[k] - f).abs() < 1e-9);
    let expected = amp * n as f64 * dt / 2.0;
    assert!((peak - expected).abs() <= 0.01 * expected, "{peak} vs {expected}");
}

#[test]
fn parseval_on_random_signals() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.gen_range(2..3000);
        let dt = rng.gen_range(0.001..0.05);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (lhs, rhs) = parseval_sides(&x, dt);
        assert!((lhs - rhs).abs() <= 1e-6 * lhs, "n={n}: {lhs} vs {rhs}");
    }
}

#[test]
fn spectrum_length_law() {
    for n in (2..10_000).step_by(97).chain([2, 3, 4, 9999]) {
        let s = fourier_amplitude_spectrum(&vec![1.0; n], 0.02).unwrap();
        assert_eq!(s.amplitudes.len(), n / 2 + 1);
        assert_eq!(s.frequencies.len(), n / 2 + 1);
        assert!(s.frequencies.windows(2).all(|w| w[0] < w[1]));
        assert!(s.amplitudes.iter().all(|&a| a >= 0.0));
    }
}

#[test]
fn interpolation_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let lr: Vec<f64> = (0..40).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let target = (lr.len() - 1) * 64 + 1 + 50;
    let out = linear_interp_upsample(&lr, 64, target).unwrap();
    for (i, &v) in out.iter().enumerate() {
        let k = i / 64;
        let expected =
            if k + 1 >= lr.len() { lr[lr.len() - 1] } else { lr[k] + (i % 64) as f64 / 64.0 * (lr[k + 1] - lr[k]) };
        assert_eq!(v, expected, "i = {i}");
    }
    for (k, &v) in lr.iter().enumerate() {
        assert_eq!(out[64 * k], v);
    }
}

#[test]
fn interpolating_a_piecewise_linear_signal_is_exact() {
    // exactly representable knots keep the arithmetic exact
    let lr: Vec<f64> = (0..20).map(|k| ((k * 7) % 11) as f64 * 0.5).collect();
    let signal = linear_interp_upsample(&lr, 64, 19 * 64 + 1).unwrap();
    let decimated: Vec<f64> = signal.iter().step_by(64).copied().collect();
    let again = linear_interp_upsample(&decimated, 64, signal.len()).unwrap();
    assert_eq!(time_domain_mse(&signal, &again).unwrap(), 0.0);
}

#[test]
fn end_to_end_report_matches_component_operations() {
    let rec = synthesize_record(31, 25_000, 0.005, 3).unwrap();
    let (tiles, metas) = encode_record(&rec).unwrap();
    let lr_tiles: Vec<_> = tiles.iter().map(|t| decimate_tile(t).unwrap()).collect();
    let lr_metas: Vec<_> = metas.iter().map(|m| m.decimated()).collect();
    let lr = decode_tiles(&lr_tiles, &lr_metas).unwrap();
    // a stand-in "generated" record: the real one perturbed
    let mut generated = rec.clone();
    for (i, v) in generated.acceleration.iter_mut().enumerate() {
        *v += 0.01 * ((i % 13) as f64 - 6.0);
    }

    let report = build_comparison_report(&rec, &generated, &lr).unwrap();
    assert_eq!(report.channels.iter().map(|c| c.channel).collect::<Vec<_>>(), REPORT_CHANNEL_ORDER);
    let interp = interpolate_record(&lr, rec.len(), rec.dt).unwrap();
    for c in REPORT_CHANNEL_ORDER {
        let expected_interp = linear_interp_upsample(lr.channel(c), DECIMATION, rec.len()).unwrap();
        assert_eq!(interp.channel(c), &expected_interp[..]);
        let row = report.channel(c);
        assert_eq!(row.mse_srgan, time_domain_mse(rec.channel(c), generated.channel(c)).unwrap());
        assert_eq!(row.mse_interp, time_domain_mse(rec.channel(c), &expected_interp).unwrap());
    }
    assert_eq!(report.channel(Channel::Velocity).mse_srgan, 0.0);
    assert!(report.channel(Channel::Acceleration).mse_srgan > 0.0);

    let spectrum = report.spectrum(Channel::Acceleration);
    assert_eq!(spectrum.real, fourier_amplitude_spectrum(&rec.acceleration, rec.dt).unwrap());
    assert_eq!(spectrum.generated, fourier_amplitude_spectrum(&generated.acceleration, rec.dt).unwrap());

    assert_eq!(report.tiles.len(), 2);
    let (gen_tiles, _) = codec::encode_with_norms(&generated, &metas[0].norms).unwrap();
    for (k, t) in report.tiles.iter().enumerate() {
        let r = MetricImage::from(&codec::quantize(&tiles[k]).unwrap());
        let g = MetricImage::from(&codec::quantize(&gen_tiles[k]).unwrap());
        assert_eq!(t.srgan, metrics::score(&r, &g, &SsimParams::default()).unwrap());
        assert_eq!(t.srgan_ssim_sliding, metrics::ssim(&r, &g, &SsimParams::sliding(8)).unwrap());
    }
}

proptest! {
    #[test]
    fn spectrum_is_positively_homogeneous(x in prop::collection::vec(-10.0f64..10.0, 2..300), a in 0.01f64..100.0) {
        let s = fourier_amplitude_spectrum(&x, 0.01).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| a * v).collect();
        let t = fourier_amplitude_spectrum(&scaled, 0.01).unwrap();
        let peak = s.amplitudes.iter().copied().fold(0.0, f64::max);
        for (u, v) in s.amplitudes.iter().zip(&t.amplitudes) {
            prop_assert!((a * u - v).abs() <= 1e-9 * a * peak.max(1e-300) + 1e-12);
        }
    }

    #[test]
    fn mse_equals_mse_of_difference(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..200)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        prop_assert_eq!(time_domain_mse(&a, &b).unwrap(), time_domain_mse(&diff, &vec![0.0; diff.len()]).unwrap());
    }

    #[test]
    fn constant_offset_gives_its_square(a in prop::collection::vec(-5.0f64..5.0, 1..100), c in -3.0f64..3.0) {
        let b: Vec<f64> = a.iter().map(|v| v - c).collect();
        let m = time_domain_mse(&a, &b).unwrap();
        prop_assert!((m - c * c).abs() <= 1e-12 * (1.0 + c * c));
    }
}
