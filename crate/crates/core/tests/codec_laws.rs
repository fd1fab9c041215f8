use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seisr::codec::{
    decimate_tile, decode_tiles, dequantize, encode_record, normalize_channel, quantize, quantize_value, tile_count,
    DECIMATION, HR_TILE_SAMPLES, LR_TILE_SAMPLES,
};
use seisr::gm_io::{synthesize_record, Channel, GroundMotionRecord};

fn random_record(seed: u64, n: usize) -> GroundMotionRecord {
    synthesize_record(seed, n, 0.005, 1 + (seed % 4) as usize).unwrap()
}

#[test]
fn tile_count_law_at_boundaries() {
    for (n, expected) in [(1, 1), (18495, 1), (18496, 1), (18497, 2), (36992, 2), (36993, 3), (1_000_000, 55)] {
        assert_eq!(tile_count(n), expected, "n = {n}");
        assert_eq!(tile_count(n), n.div_ceil(HR_TILE_SAMPLES));
    }
}

#[test]
fn quantization_error_is_at_most_half_a_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1_000_000 {
        let x: f64 = rng.gen_range(0.0..=1.0);
        let q = quantize_value(x).unwrap();
        assert!((x - q as f64 / 255.0).abs() <= 1.0 / 510.0 + 1e-15, "{x}");
    }
    assert_eq!(quantize_value(0.0).unwrap(), 0);
    assert_eq!(quantize_value(1.0).unwrap(), 255);
    assert_eq!(quantize_value(0.5).unwrap(), 128);
}

#[test]
fn normalize_round_trip_on_random_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let values: Vec<f64> = (0..1000).map(|_| rng.gen_range(-50.0..50.0)).collect();
    let (x, norm) = normalize_channel(&values).unwrap();
    assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
    for (v, n) in values.iter().zip(&x) {
        let back = norm.denormalize(*n);
        assert!((back - v).abs() <= 1e-12 * v.abs().max(norm.range()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decode_inverts_encode_with_quantization_bound(seed in any::<u64>(), n in 1usize..40_000) {
        let rec = random_record(seed, n);
        let (tiles, metas) = encode_record(&rec).unwrap();
        prop_assert_eq!(tiles.len(), tile_count(n));
        prop_assert_eq!(metas.iter().map(|m| m.true_sample_count).sum::<usize>(), n);

        let back = decode_tiles(&tiles, &metas).unwrap();
        let quantized: Vec<_> = tiles.iter().map(|t| dequantize(&quantize(t).unwrap())).collect();
        let lossy = decode_tiles(&quantized, &metas).unwrap();
        for c in Channel::ALL {
            let range = metas[0].norms[c.index()].range();
            for ((a, b), q) in rec.channel(c).iter().zip(back.channel(c)).zip(lossy.channel(c)) {
                prop_assert!((a - b).abs() <= 1e-12 * range.max(a.abs()));
                // the 1/510 bound plus rounding of the affine map
                prop_assert!((a - q).abs() <= range / 510.0 + 1e-12 * range.max(a.abs()));
            }
        }
    }

    #[test]
    fn lr_decode_equals_decimated_hr_decode(seed in any::<u64>(), n in 65usize..40_000) {
        let rec = random_record(seed, n);
        let (tiles, metas) = encode_record(&rec).unwrap();
        let lr: Vec<_> = tiles.iter().map(|t| decimate_tile(t).unwrap()).collect();
        let lr_metas: Vec<_> = metas.iter().map(|m| m.decimated()).collect();
        let lr_rec = decode_tiles(&lr, &lr_metas).unwrap();
        prop_assert_eq!(lr_rec.dt, rec.dt * DECIMATION as f64);

        let hr = decode_tiles(&tiles, &metas).unwrap();
        // decimation restarts at every tile boundary
        for c in Channel::ALL {
            let expected: Vec<f64> = hr
                .channel(c)
                .chunks(HR_TILE_SAMPLES)
                .flat_map(|chunk| chunk.iter().step_by(DECIMATION).copied())
                .collect();
            prop_assert_eq!(lr_rec.channel(c), &expected[..]);
        }
        prop_assert!(lr.iter().all(|t| t.samples_per_channel() == LR_TILE_SAMPLES));
    }
}
