//! Brute-force digital reference for conv -> batch norm -> ReLU -> quantize.
//!
//! Shares no code with the array pipeline or the ADC model; only the plain
//! data containers are common. Loops accumulate in row-major
//! `(ky, kx, in_channel)` order so results are reproducible.
//!
//! The code map applies the hardware's read-out semantics: positive and
//! negative partial sums are each floor-quantized before the shift is added
//! and the result is clipped. The float map is the continuous
//! `ReLU(A * conv + B)`; while neither partial sum exceeds full scale it
//! agrees with the codes to within two LSB.

use crate::adc_cds::AdcConfig;
use crate::codesign::{BnParams, ConvWeights};
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// `ReLU(A * conv(x) + B)` in analog units, `[h_o][w_o][c_o]`.
    pub float_map: Tensor3,
    /// Codes in `[0, 2^N - 1]`, same layout.
    pub codes: Vec<u32>,
}

pub fn oracle_forward(
    image: &Tensor3,
    weights: &ConvWeights,
    stride: usize,
    padding: usize,
    bn: &BnParams,
    adc: &AdcConfig,
) -> Result<OracleResult> {
    let (h, w, cin) = image.dims();
    let k = weights.kernel;
    if cin != weights.in_channels {
        return Err(Error::Shape(format!("image has {cin} channels, weights expect {}", weights.in_channels)));
    }
    if bn.gamma.len() != weights.out_channels
        || bn.beta.len() != weights.out_channels
        || bn.mean.len() != weights.out_channels
        || bn.var.len() != weights.out_channels
    {
        return Err(Error::Shape("batch-norm length differs from output channels".into()));
    }
    if stride == 0 || h + 2 * padding < k || w + 2 * padding < k {
        return Err(Error::Shape("kernel does not fit the image".into()));
    }
    if !(h + 2 * padding - k).is_multiple_of(stride) || !(w + 2 * padding - k).is_multiple_of(stride) {
        return Err(Error::Shape("output size is not integral".into()));
    }
    let ho = (h + 2 * padding - k) / stride + 1;
    let wo = (w + 2 * padding - k) / stride + 1;
    let co = weights.out_channels;

    let levels = ((1u64 << adc.bits) - 1) as f64;
    let lsb_of = |v: f64| v * levels / adc.full_scale;
    let floor_code = |v: f64| -> i64 {
        let x = lsb_of(v).floor();
        x.max(0.0).min(levels) as i64
    };

    let mut float_map = Tensor3::zeros(ho, wo, co);
    let mut codes = vec![0u32; ho * wo * co];

    for c in 0..co {
        let sd = (bn.var[c] + bn.eps).sqrt();
        let a = bn.gamma[c] / sd;
        let b = bn.beta[c] - bn.gamma[c] * bn.mean[c] / sd;
        let preset = (b * levels / adc.full_scale).round() as i64;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut signed = 0.0;
                let mut pos = 0.0;
                let mut neg = 0.0;
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        for ci in 0..cin {
                            let theta = weights.data[((c * k + ky) * k + kx) * cin + ci];
                            let folded = a * theta;
                            let x = image.get(iy as usize, ix as usize, ci);
                            signed += theta * x;
                            if folded > 0.0 {
                                pos += folded.abs() * x;
                            } else if folded < 0.0 {
                                neg += folded.abs() * x;
                            }
                        }
                    }
                }
                float_map.set(oy, ox, c, (a * signed + b).max(0.0));
                let raw = preset + floor_code(pos) - floor_code(neg);
                codes[(oy * wo + ox) * co + c] = raw.max(0).min(levels as i64) as u32;
            }
        }
    }
    Ok(OracleResult { float_map, codes })
}
