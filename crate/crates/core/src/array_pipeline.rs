//! Channel-serial in-situ convolution over the pixel array.
//!
//! For one output channel all pixels of a receptive field are activated at
//! once and their outputs sum on the column line. Positive- and
//! negative-tagged weight transistors are read in two separate samples, so
//! each output position yields an [`AnalogSamplePair`].
//!
//! Model limits: column-line saturation is not modeled beyond the per-pixel
//! transfer function, positive and negative weight lines are perfectly
//! isolated (no sneak current), and pixel-to-pixel mismatch is not sampled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pixel_model::TransferFunction;
use crate::tensor::Tensor3;

/// `(input - kernel + 2 * padding) / stride + 1`, rejecting non-integral results.
pub fn conv_output_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::Geometry("kernel and stride must be positive".into()));
    }
    let span = (input + 2 * padding)
        .checked_sub(kernel)
        .ok_or_else(|| Error::Geometry(format!("kernel {kernel} larger than padded input {}", input + 2 * padding)))?;
    if span % stride != 0 {
        return Err(Error::Geometry(format!(
            "({input} - {kernel} + 2*{padding}) / {stride} is not an integer"
        )));
    }
    Ok(span / stride + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSign {
    Positive,
    Negative,
}

impl WeightSign {
    pub fn of(w: f64) -> Self {
        if w < 0.0 {
            WeightSign::Negative
        } else {
            WeightSign::Positive
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            WeightSign::Positive => WeightSign::Negative,
            WeightSign::Negative => WeightSign::Positive,
        }
    }
}

/// Shape of the in-pixel layer, without weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontEndGeometry {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_channels: usize,
    /// Enforce non-overlapping receptive fields (`stride == kernel`, no padding).
    pub p2m_mode: bool,
}

impl FrontEndGeometry {
    /// `(h_o, w_o)`.
    pub fn output_dims(&self) -> Result<(usize, usize)> {
        Ok((
            conv_output_dim(self.height, self.kernel, self.stride, self.padding)?,
            conv_output_dim(self.width, self.kernel, self.stride, self.padding)?,
        ))
    }

    pub fn receptive_field(&self) -> usize {
        self.kernel * self.kernel * self.in_channels
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.receptive_field()
    }
}

/// Weights embedded in the pixel array: magnitudes (transistor driving
/// strengths, never negative) plus a sign tag per transistor.
///
/// Weight layout is `[out_channel][ky][kx][in_channel]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelArrayConfig {
    geometry: FrontEndGeometry,
    magnitudes: Vec<f64>,
    signs: Vec<WeightSign>,
}

impl PixelArrayConfig {
    pub fn new(geometry: FrontEndGeometry, magnitudes: Vec<f64>, signs: Vec<WeightSign>) -> Result<Self> {
        let g = geometry;
        if g.in_channels == 0 || g.out_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if g.p2m_mode && (g.stride != g.kernel || g.padding != 0) {
            return Err(Error::Config(format!(
                "non-overlapping mode needs stride == kernel and padding 0 (kernel {}, stride {}, padding {})",
                g.kernel, g.stride, g.padding
            )));
        }
        g.output_dims()?;
        let n = g.weight_count();
        if magnitudes.len() != n || signs.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} weights and sign tags, got {} and {}",
                magnitudes.len(),
                signs.len()
            )));
        }
        if let Some(m) = magnitudes.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::Config(format!("weight magnitude {m} must be finite and non-negative")));
        }
        Ok(PixelArrayConfig { geometry, magnitudes, signs })
    }

    /// Splits signed weights into magnitude and sign tag.
    pub fn from_signed(geometry: FrontEndGeometry, weights: &[f64]) -> Result<Self> {
        let magnitudes = weights.iter().map(|w| w.abs()).collect();
        let signs = weights.iter().map(|&w| WeightSign::of(w)).collect();
        Self::new(geometry, magnitudes, signs)
    }

    pub fn geometry(&self) -> &FrontEndGeometry {
        &self.geometry
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn signs(&self) -> &[WeightSign] {
        &self.signs
    }

    #[inline]
    pub fn weight_index(&self, co: usize, ky: usize, kx: usize, ci: usize) -> usize {
        let g = &self.geometry;
        ((co * g.kernel + ky) * g.kernel + kx) * g.in_channels + ci
    }

    /// Same magnitudes with every sign tag inverted.
    pub fn with_signs_flipped(&self) -> Self {
        PixelArrayConfig {
            geometry: self.geometry,
            magnitudes: self.magnitudes.clone(),
            signs: self.signs.iter().map(|s| s.flipped()).collect(),
        }
    }

    /// Overrides a single sign tag. Used to inject faults in verification.
    pub fn set_sign(&mut self, index: usize, sign: WeightSign) {
        self.signs[index] = sign;
    }
}

/// Column-line values for the positive and negative read-outs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AnalogSamplePair {
    pub v_pos: f64,
    pub v_neg: f64,
}

impl AnalogSamplePair {
    pub fn difference(&self) -> f64 {
        self.v_pos - self.v_neg
    }
}

/// Analog output of a whole layer, `[h_o][w_o][c_o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pairs: Vec<AnalogSamplePair>,
}

impl AnalogMap {
    pub fn get(&self, y: usize, x: usize, c: usize) -> AnalogSamplePair {
        self.pairs[(y * self.width + x) * self.channels + c]
    }
}

fn check_image(cfg: &PixelArrayConfig, image: &Tensor3) -> Result<()> {
    let g = cfg.geometry();
    if image.dims() != (g.height, g.width, g.in_channels) {
        return Err(Error::Shape(format!(
            "image is {:?}, layer expects ({}, {}, {})",
            image.dims(),
            g.height,
            g.width,
            g.in_channels
        )));
    }
    Ok(())
}

/// Accumulates one receptive field for output channel `channel` at `(oy, ox)`.
pub fn convolve_position(
    cfg: &PixelArrayConfig,
    tf: &TransferFunction,
    image: &Tensor3,
    channel: usize,
    oy: usize,
    ox: usize,
) -> Result<AnalogSamplePair> {
    check_image(cfg, image)?;
    let (ho, wo) = cfg.geometry.output_dims()?;
    if channel >= cfg.geometry.out_channels || oy >= ho || ox >= wo {
        return Err(Error::Index(format!(
            "channel {channel}, position ({oy}, {ox}) outside {ho}x{wo}x{}",
            cfg.geometry.out_channels
        )));
    }
    accumulate(cfg, tf, image, channel, oy, ox)
}

fn accumulate(
    cfg: &PixelArrayConfig,
    tf: &TransferFunction,
    image: &Tensor3,
    channel: usize,
    oy: usize,
    ox: usize,
) -> Result<AnalogSamplePair> {
    let g = &cfg.geometry;
    let mut pair = AnalogSamplePair::default();
    for ky in 0..g.kernel {
        // Padding taps have no physical pixel behind them and contribute nothing.
        let Some(y) = (oy * g.stride + ky).checked_sub(g.padding).filter(|&y| y < g.height) else {
            continue;
        };
        for kx in 0..g.kernel {
            let Some(x) = (ox * g.stride + kx).checked_sub(g.padding).filter(|&x| x < g.width) else {
                continue;
            };
            for ci in 0..g.in_channels {
                let idx = cfg.weight_index(channel, ky, kx, ci);
                let w = cfg.magnitudes[idx];
                if w == 0.0 {
                    continue;
                }
                let v = tf.evaluate(w, image.get(y, x, ci))?;
                match cfg.signs[idx] {
                    WeightSign::Positive => pair.v_pos += v,
                    WeightSign::Negative => pair.v_neg += v,
                }
            }
        }
    }
    Ok(pair)
}

/// Runs every output position; channels are visited in index order.
///
/// Rows are processed in parallel. Each position is computed independently,
/// so results are bit-identical to a serial run.
pub fn convolve_layer(cfg: &PixelArrayConfig, tf: &TransferFunction, image: &Tensor3) -> Result<AnalogMap> {
    check_image(cfg, image)?;
    let (ho, wo) = cfg.geometry.output_dims()?;
    let co = cfg.geometry.out_channels;
    let rows: Vec<Vec<AnalogSamplePair>> = (0..ho)
        .into_par_iter()
        .map(|oy| {
            let mut row = Vec::with_capacity(wo * co);
            for ox in 0..wo {
                for c in 0..co {
                    row.push(accumulate(cfg, tf, image, c, oy, ox)?);
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(AnalogMap { height: ho, width: wo, channels: co, pairs: rows.into_iter().flatten().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(h: usize, w: usize, cin: usize, k: usize, co: usize) -> FrontEndGeometry {
        FrontEndGeometry {
            height: h,
            width: w,
            in_channels: cin,
            kernel: k,
            stride: k,
            padding: 0,
            out_channels: co,
            p2m_mode: true,
        }
    }

    #[test]
    fn output_dim_formula() {
        assert_eq!(conv_output_dim(560, 5, 5, 0).unwrap(), 112);
        assert!(conv_output_dim(224, 3, 2, 1).unwrap_err().to_string().contains("not an integer"));
        assert_eq!(conv_output_dim(10, 3, 1, 1).unwrap(), 10);
        assert!(conv_output_dim(2, 5, 5, 0).is_err());
    }

    #[test]
    fn zero_weights_give_zero() {
        let g = geom(5, 5, 3, 5, 1);
        let cfg = PixelArrayConfig::from_signed(g, &vec![0.0; 75]).unwrap();
        let img = Tensor3::from_fn(5, 5, 3, |y, x, c| (y + x + c) as f64 / 20.0);
        let p = convolve_position(&cfg, &TransferFunction::ideal(), &img, 0, 0, 0).unwrap();
        assert_eq!(p, AnalogSamplePair { v_pos: 0.0, v_neg: 0.0 });
    }

    #[test]
    fn one_hot_kernel_reads_one_pixel() {
        let g = geom(5, 5, 3, 5, 1);
        let mut w = vec![0.0; 75];
        let cfg0 = PixelArrayConfig::from_signed(g, &w).unwrap();
        w[cfg0.weight_index(0, 2, 3, 1)] = 1.0;
        let cfg = PixelArrayConfig::from_signed(g, &w).unwrap();
        let mut img = Tensor3::zeros(5, 5, 3);
        img.set(2, 3, 1, 0.37);
        let p = convolve_position(&cfg, &TransferFunction::ideal(), &img, 0, 0, 0).unwrap();
        assert_eq!(p, AnalogSamplePair { v_pos: 0.37, v_neg: 0.0 });
    }

    #[test]
    fn table1_geometry_gives_112_by_112_by_8() {
        let g = geom(560, 560, 3, 5, 8);
        assert_eq!(g.output_dims().unwrap(), (112, 112));
        assert_eq!(g.receptive_field(), 75);
    }

    #[test]
    fn single_receptive_field_layer() {
        let g = geom(5, 5, 3, 5, 4);
        let cfg = PixelArrayConfig::from_signed(g, &vec![0.5; g.weight_count()]).unwrap();
        let out = convolve_layer(&cfg, &TransferFunction::ideal(), &Tensor3::zeros(5, 5, 3)).unwrap();
        assert_eq!((out.height, out.width, out.channels), (1, 1, 4));
    }

    #[test]
    fn invalid_position_and_shape() {
        let g = geom(10, 10, 1, 5, 2);
        let cfg = PixelArrayConfig::from_signed(g, &vec![0.1; 50]).unwrap();
        let img = Tensor3::zeros(10, 10, 1);
        let tf = TransferFunction::ideal();
        assert!(matches!(convolve_position(&cfg, &tf, &img, 2, 0, 0), Err(Error::Index(_))));
        assert!(matches!(convolve_position(&cfg, &tf, &img, 0, 2, 0), Err(Error::Index(_))));
        assert!(matches!(convolve_layer(&cfg, &tf, &Tensor3::zeros(10, 10, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn overlap_rejected_in_p2m_mode() {
        let mut g = geom(9, 9, 1, 3, 1);
        g.stride = 2;
        g.height = 9;
        assert!(matches!(PixelArrayConfig::from_signed(g, &[0.0; 9]), Err(Error::Config(_))));
        g.p2m_mode = false;
        assert!(PixelArrayConfig::from_signed(g, &[0.0; 9]).is_ok());
    }

    #[test]
    fn negative_magnitude_rejected() {
        let g = geom(5, 5, 1, 5, 1);
        let r = PixelArrayConfig::new(g, vec![-0.1; 25], vec![WeightSign::Positive; 25]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn surrogate_domain_error_propagates() {
        let tf = crate::pixel_model::default_surrogate();
        let g = geom(5, 5, 1, 5, 1);
        let cfg = PixelArrayConfig::from_signed(g, &[2.0; 25]).unwrap();
        let img = Tensor3::from_fn(5, 5, 1, |_, _, _| 0.5);
        assert!(matches!(convolve_layer(&cfg, &tf, &img), Err(Error::Domain { .. })));
    }

    #[test]
    fn padding_taps_contribute_nothing() {
        let g = FrontEndGeometry {
            height: 3,
            width: 3,
            in_channels: 1,
            kernel: 3,
            stride: 1,
            padding: 1,
            out_channels: 1,
            p2m_mode: false,
        };
        let cfg = PixelArrayConfig::from_signed(g, &[1.0; 9]).unwrap();
        let img = Tensor3::from_fn(3, 3, 1, |_, _, _| 1.0);
        let out = convolve_layer(&cfg, &TransferFunction::ideal(), &img).unwrap();
        assert_eq!(out.get(0, 0, 0).v_pos, 4.0);
        assert_eq!(out.get(1, 1, 0).v_pos, 9.0);
    }
}
