//! Randomized equivalence checks between the hardware pipeline and the
//! reference oracle, and between the two ADC models.

use rand::Rng;
use serde::Serialize;

use crate::adc_cds::{convert_with_preset, simulate_conversion, AdcConfig};
use crate::array_pipeline::{AnalogSamplePair, FrontEndGeometry};
use crate::codesign::{deploy, fold_bn, BnParams, ConvWeights};
use crate::error::Result;
use crate::pixel_model::TransferFunction;
use crate::reference_oracle::oracle_forward;
use crate::tensor::Tensor3;

/// Bounds for random instances.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceLimits {
    pub max_side: usize,
    pub max_in_channels: usize,
    pub kernels: Vec<usize>,
    pub max_out_channels: usize,
    pub bits: Vec<u32>,
}

impl Default for InstanceLimits {
    fn default() -> Self {
        InstanceLimits { max_side: 20, max_in_channels: 3, kernels: vec![1, 5], max_out_channels: 8, bits: vec![4, 8] }
    }
}

/// One conv -> BN -> ReLU -> ADC problem with stride equal to kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub image: Tensor3,
    pub weights: ConvWeights,
    pub bn: BnParams,
    pub adc: AdcConfig,
}

impl Instance {
    pub fn stride(&self) -> usize {
        self.weights.kernel
    }

    fn geometry(&self) -> FrontEndGeometry {
        let (h, w, c) = self.image.dims();
        FrontEndGeometry {
            height: h,
            width: w,
            in_channels: c,
            kernel: self.weights.kernel,
            stride: self.stride(),
            padding: 0,
            out_channels: self.weights.out_channels,
            p2m_mode: true,
        }
    }

    pub fn describe(&self) -> String {
        let (h, w, c) = self.image.dims();
        format!(
            "image {h}x{w}x{c}, kernel {k} stride {k}, {co} output channels, {n}-bit ADC, full scale {fs}",
            k = self.weights.kernel,
            co = self.weights.out_channels,
            n = self.adc.bits,
            fs = self.adc.full_scale
        )
    }
}

pub fn random_instance<R: Rng>(rng: &mut R, lim: &InstanceLimits) -> Instance {
    let k = lim.kernels[rng.gen_range(0..lim.kernels.len())];
    let cells = (lim.max_side / k).max(1);
    let h = rng.gen_range(1..=cells) * k;
    let w = rng.gen_range(1..=cells) * k;
    let cin = rng.gen_range(1..=lim.max_in_channels);
    let co = rng.gen_range(1..=lim.max_out_channels);
    let image = Tensor3::from_fn(h, w, cin, |_, _, _| rng.gen_range(0.0..=1.0));
    let n = co * k * k * cin;
    let data = (0..n).map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(-1.0..=1.0) }).collect();
    let weights = ConvWeights::new(co, k, cin, data).expect("shape by construction");
    // Keeps |B| < 2 * full_scale so every shift fits the counter preset.
    let bn = BnParams {
        gamma: (0..co).map(|_| rng.gen_range(0.2..=1.5) * if rng.gen_bool(0.2) { -1.0 } else { 1.0 }).collect(),
        beta: (0..co).map(|_| rng.gen_range(-0.5..=0.5)).collect(),
        mean: (0..co).map(|_| rng.gen_range(-0.3..=0.3)).collect(),
        var: (0..co).map(|_| rng.gen_range(0.25..=2.0)).collect(),
        eps: 1e-5,
    };
    let bits = lim.bits[rng.gen_range(0..lim.bits.len())];
    let field = (k * k * cin) as f64;
    let full_scale = rng.gen_range(1.0..=(field / 2.0).max(1.0));
    let adc = AdcConfig { bits, full_scale, ..AdcConfig::default() };
    Instance { image, weights, bn, adc }
}

/// First disagreeing code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub channel: usize,
    pub y: usize,
    pub x: usize,
    pub pipeline: u32,
    pub oracle: u32,
}

/// Runs the pipeline with an ideal transfer function. With `corrupt_sign`,
/// the largest weight of every channel has its sign tag flipped.
pub fn pipeline_codes(inst: &Instance, corrupt_sign: bool) -> Result<Vec<u32>> {
    let folded = fold_bn(&inst.weights, &inst.bn)?;
    let mut dep = deploy(&folded, inst.geometry(), inst.adc, false)?;
    if corrupt_sign {
        let per = inst.weights.per_channel();
        for c in 0..inst.weights.out_channels {
            let mags = &dep.array.magnitudes()[c * per..(c + 1) * per];
            let (j, _) = mags.iter().enumerate().fold((0, -1.0), |best, (j, &m)| if m > best.1 { (j, m) } else { best });
            let idx = c * per + j;
            let flipped = dep.array.signs()[idx].flipped();
            dep.array.set_sign(idx, flipped);
        }
    }
    Ok(dep.simulate(&TransferFunction::ideal(), &inst.image)?.codes)
}

pub fn check_instance(inst: &Instance, corrupt_sign: bool) -> Result<Option<Mismatch>> {
    let got = pipeline_codes(inst, corrupt_sign)?;
    let want = oracle_forward(&inst.image, &inst.weights, inst.stride(), 0, &inst.bn, &inst.adc)?.codes;
    let co = inst.weights.out_channels;
    let wo = inst.image.width() / inst.stride();
    Ok(got.iter().zip(&want).position(|(a, b)| a != b).map(|i| Mismatch {
        channel: i % co,
        y: i / co / wo,
        x: i / co % wo,
        pipeline: got[i],
        oracle: want[i],
    }))
}

/// Reduces a failing instance to the single channel and receptive field
/// of `m`. Returns the original when the reduced one no longer fails.
pub fn shrink(inst: &Instance, m: &Mismatch, corrupt_sign: bool) -> (Instance, Mismatch) {
    let k = inst.weights.kernel;
    let cin = inst.image.channels();
    let image = Tensor3::from_fn(k, k, cin, |y, x, c| inst.image.get(m.y * k + y, m.x * k + x, c));
    let per = inst.weights.per_channel();
    let data = inst.weights.data[m.channel * per..(m.channel + 1) * per].to_vec();
    let pick = |v: &[f64]| vec![v[m.channel]];
    let small = Instance {
        image,
        weights: ConvWeights { out_channels: 1, kernel: k, in_channels: cin, data },
        bn: BnParams {
            gamma: pick(&inst.bn.gamma),
            beta: pick(&inst.bn.beta),
            mean: pick(&inst.bn.mean),
            var: pick(&inst.bn.var),
            eps: inst.bn.eps,
        },
        adc: inst.adc,
    };
    match check_instance(&small, corrupt_sign) {
        Ok(Some(sm)) => (small, sm),
        _ => (inst.clone(), m.clone()),
    }
}

/// A closed-form / cycle-counter disagreement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterMismatch {
    pub bits: u32,
    pub preset: i64,
    pub v_pos: f64,
    pub v_neg: f64,
    pub closed_form: u32,
    pub counter: u32,
}

fn compare(cfg: &AdcConfig, preset: i64, s: AnalogSamplePair) -> Result<Option<CounterMismatch>> {
    let a = convert_with_preset(cfg, preset, s)?.code;
    let b = simulate_conversion(cfg, preset, s)?.code;
    Ok((a != b).then_some(CounterMismatch {
        bits: cfg.bits,
        preset,
        v_pos: s.v_pos,
        v_neg: s.v_neg,
        closed_form: a,
        counter: b,
    }))
}

/// Every preset against every pair from a grid of four points per LSB
/// spanning `[0, 1.25 * full_scale]`. Returns the number of cases run.
pub fn exhaustive_counter_check(cfg: &AdcConfig) -> Result<(u64, Option<CounterMismatch>)> {
    cfg.validate()?;
    let levels = cfg.max_code() as f64;
    let steps = (5.0 * levels) as usize;
    let grid: Vec<f64> = (0..=steps).map(|j| j as f64 * cfg.full_scale / (4.0 * levels)).collect();
    let (lo, hi) = cfg.preset_range();
    let mut n = 0;
    for preset in lo..=hi {
        for &v_pos in &grid {
            for &v_neg in &grid {
                n += 1;
                if let Some(m) = compare(cfg, preset, AnalogSamplePair { v_pos, v_neg })? {
                    return Ok((n, Some(m)));
                }
            }
        }
    }
    Ok((n, None))
}

/// `cases` random presets and sample pairs in `[0, 1.25 * full_scale]`.
pub fn random_counter_check<R: Rng>(rng: &mut R, cfg: &AdcConfig, cases: u64) -> Result<Option<CounterMismatch>> {
    cfg.validate()?;
    let (lo, hi) = cfg.preset_range();
    let top = 1.25 * cfg.full_scale;
    for _ in 0..cases {
        let preset = rng.gen_range(lo..=hi);
        let s = AnalogSamplePair { v_pos: rng.gen_range(0.0..=top), v_neg: rng.gen_range(0.0..=top) };
        if let Some(m) = compare(cfg, preset, s)? {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_instances_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, &InstanceLimits::default());
            assert_eq!(check_instance(&inst, false).unwrap(), None, "{}", inst.describe());
        }
    }

    #[test]
    fn corrupted_sign_is_caught_and_shrunk() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let found = (0..200).find_map(|_| {
            let inst = random_instance(&mut rng, &InstanceLimits::default());
            check_instance(&inst, true).unwrap().map(|m| (inst, m))
        });
        let (inst, m) = found.expect("a flipped sign changes some code");
        let (small, sm) = shrink(&inst, &m, true);
        assert_eq!(small.weights.out_channels, 1);
        assert_eq!((sm.y, sm.x, sm.channel), (0, 0, 0));
        assert_ne!(sm.pipeline, sm.oracle);
    }

    #[test]
    fn small_exhaustive_counter() {
        let cfg = AdcConfig { bits: 2, ..AdcConfig::default() };
        let (n, m) = exhaustive_counter_check(&cfg).unwrap();
        assert!(m.is_none());
        assert_eq!(n, 16 * 16 * 16);
    }
}
