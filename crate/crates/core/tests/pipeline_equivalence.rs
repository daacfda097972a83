use p2m_core::adc_cds::AdcConfig;
use p2m_core::array_pipeline::{convolve_layer, FrontEndGeometry, PixelArrayConfig};
use p2m_core::codesign::{BnParams, ConvWeights};
use p2m_core::pixel_model::{default_surrogate, TransferFunction};
use p2m_core::reference_oracle::oracle_forward;
use p2m_core::tensor::Tensor3;
use p2m_core::verification::{check_instance, random_instance, Instance, InstanceLimits};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn geometry(h: usize, w: usize, cin: usize, k: usize, co: usize) -> FrontEndGeometry {
    FrontEndGeometry { height: h, width: w, in_channels: cin, kernel: k, stride: k, padding: 0, out_channels: co, p2m_mode: true }
}

#[test]
fn ten_by_ten_rgb_instance_matches_oracle() {
    let image = Tensor3::from_fn(10, 10, 3, |y, x, c| ((y * 31 + x * 7 + c * 3) % 17) as f64 / 16.0);
    let data: Vec<f64> = (0..4 * 25 * 3).map(|j| ((j * 37 % 23) as f64 - 11.0) / 11.0).collect();
    let inst = Instance {
        image,
        weights: ConvWeights::new(4, 5, 3, data).unwrap(),
        bn: BnParams {
            gamma: vec![1.0, 0.5, -0.8, 1.2],
            beta: vec![0.1, -0.2, 0.3, 0.0],
            mean: vec![0.05, 0.0, -0.1, 0.2],
            var: vec![1.0, 0.5, 0.8, 1.5],
            eps: 1e-5,
        },
        adc: AdcConfig { full_scale: 8.0, ..AdcConfig::default() },
    };
    assert_eq!(check_instance(&inst, false).unwrap(), None);
}

#[test]
fn oracle_float_map_tracks_codes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let mut inst = random_instance(&mut rng, &InstanceLimits::default());
        // |A| <= 3 and inputs <= 1, so no partial sum can saturate.
        inst.adc.full_scale = 3.0 * inst.weights.per_channel() as f64;
        let r = oracle_forward(&inst.image, &inst.weights, inst.stride(), 0, &inst.bn, &inst.adc).unwrap();
        let lsb = inst.adc.full_scale / inst.adc.max_code() as f64;
        for (f, &c) in r.float_map.data().iter().zip(&r.codes) {
            assert!(f.is_finite());
            let clipped = f.min(inst.adc.full_scale);
            assert!((clipped - c as f64 * lsb).abs() <= 2.0 * lsb + 1e-9, "{clipped} vs code {c}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pipeline_equals_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, &InstanceLimits::default());
        prop_assert_eq!(check_instance(&inst, false).unwrap(), None, "{}", inst.describe());
    }

    #[test]
    fn flipping_every_sign_swaps_the_pair(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, &InstanceLimits::default());
        let (h, w, cin) = inst.image.dims();
        let g = geometry(h, w, cin, inst.weights.kernel, inst.weights.out_channels);
        let cfg = PixelArrayConfig::from_signed(g, &inst.weights.data).unwrap();
        let tf = TransferFunction::ideal();
        let a = convolve_layer(&cfg, &tf, &inst.image).unwrap();
        let b = convolve_layer(&cfg.with_signs_flipped(), &tf, &inst.image).unwrap();
        for (p, q) in a.pairs.iter().zip(&b.pairs) {
            prop_assert_eq!(p.v_pos, q.v_neg);
            prop_assert_eq!(p.v_neg, q.v_pos);
        }
    }

    #[test]
    fn ideal_difference_is_signed_convolution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, &InstanceLimits::default());
        let (h, w, cin) = inst.image.dims();
        let k = inst.weights.kernel;
        let g = geometry(h, w, cin, k, inst.weights.out_channels);
        let cfg = PixelArrayConfig::from_signed(g, &inst.weights.data).unwrap();
        let map = convolve_layer(&cfg, &TransferFunction::ideal(), &inst.image).unwrap();
        for y in 0..map.height {
            for x in 0..map.width {
                for c in 0..map.channels {
                    let mut s = 0.0;
                    for ky in 0..k { for kx in 0..k { for ci in 0..cin {
                        s += inst.weights.data[((c * k + ky) * k + kx) * cin + ci] * inst.image.get(y * k + ky, x * k + kx, ci);
                    }}}
                    prop_assert!((map.get(y, x, c).difference() - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn surrogate_outputs_are_non_negative_and_bounded(w in 0.0f64..=1.0, i in 0.0f64..=1.0) {
        let tf = default_surrogate();
        let v = tf.evaluate(w, i).unwrap();
        prop_assert!(v > -5e-3 && v <= tf.max_output() + 1e-12);
    }
}
