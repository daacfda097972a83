//! Compiles a trained first layer into an in-pixel deployment.
//!
//! Batch norm `gamma * (x - mean) / sqrt(var + eps) + beta` is rewritten as
//! `A * x + B`. The scale `A` is folded into the weights (which become
//! transistor driving strengths), and `B` becomes the ADC counter preset.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adc_cds::{convert_with_preset, AdcConfig};
use crate::array_pipeline::{convolve_layer, FrontEndGeometry, PixelArrayConfig};
use crate::error::{Error, Result};
use crate::pixel_model::TransferFunction;
use crate::tensor::{RawTensor, Tensor3};

/// Output channels a pixel may host (one weight transistor per channel).
pub const DEFAULT_CHANNEL_BUDGET: usize = 32;

/// Inference-time batch-norm parameters, one entry per output channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BnParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    /// Running variance (the squared sigma under the square root).
    pub var: Vec<f64>,
    pub eps: f64,
}

impl BnParams {
    pub fn identity(channels: usize, eps: f64) -> Self {
        BnParams {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            mean: vec![0.0; channels],
            var: vec![1.0 - eps; channels],
            eps,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.gamma.len();
        if [self.beta.len(), self.mean.len(), self.var.len()].iter().any(|&l| l != n) {
            return Err(Error::Shape("batch-norm arrays differ in length".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("batch-norm eps {} must be positive", self.eps)));
        }
        if let Some(v) = self.var.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Config(format!("batch-norm variance {v} must be non-negative")));
        }
        Ok(())
    }

    /// `(A, B)` for channel `c`.
    pub fn scale_shift(&self, c: usize) -> (f64, f64) {
        let denom = (self.var[c] + self.eps).sqrt();
        let a = self.gamma[c] / denom;
        (a, self.beta[c] - self.gamma[c] * self.mean[c] / denom)
    }
}

/// Signed float weights `[out_channel][ky][kx][in_channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub out_channels: usize,
    pub kernel: usize,
    pub in_channels: usize,
    pub data: Vec<f64>,
}

impl ConvWeights {
    pub fn new(out_channels: usize, kernel: usize, in_channels: usize, data: Vec<f64>) -> Result<Self> {
        let n = out_channels * kernel * kernel * in_channels;
        if data.len() != n {
            return Err(Error::Shape(format!("weight tensor needs {n} values, got {}", data.len())));
        }
        if data.iter().any(|w| !w.is_finite()) {
            return Err(Error::Range("non-finite weight".into()));
        }
        Ok(ConvWeights { out_channels, kernel, in_channels, data })
    }

    pub fn per_channel(&self) -> usize {
        self.kernel * self.kernel * self.in_channels
    }
}

/// Weights with batch norm folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedLayer {
    pub out_channels: usize,
    pub kernel: usize,
    pub in_channels: usize,
    /// `A_c * theta` per channel, signed.
    pub scaled_weights: Vec<f64>,
    /// Float shift `B_c`.
    pub shifts: Vec<f64>,
    /// Integer counter presets, present once quantized.
    pub shift_codes: Option<Vec<i64>>,
    pub quantized: bool,
    pub weight_bits: Option<u32>,
    pub act_bits: Option<u32>,
    /// Largest magnitude on the weight grid; grid step is `weight_max / (2^(b-1) - 1)`.
    weight_max: Option<f64>,
}

impl FoldedLayer {
    pub fn per_channel(&self) -> usize {
        self.kernel * self.kernel * self.in_channels
    }

    /// Quantization step of the weight grid, when quantized.
    pub fn weight_step(&self) -> Option<f64> {
        Some(self.weight_max? / weight_levels(self.weight_bits?))
    }
}

pub fn fold_bn(weights: &ConvWeights, bn: &BnParams) -> Result<FoldedLayer> {
    bn.validate()?;
    if bn.channels() != weights.out_channels {
        return Err(Error::Shape(format!(
            "{} batch-norm channels for {} output channels",
            bn.channels(),
            weights.out_channels
        )));
    }
    let per = weights.per_channel();
    let mut scaled = Vec::with_capacity(weights.data.len());
    let mut shifts = Vec::with_capacity(weights.out_channels);
    for c in 0..weights.out_channels {
        let (a, b) = bn.scale_shift(c);
        scaled.extend(weights.data[c * per..(c + 1) * per].iter().map(|w| a * w));
        shifts.push(b);
    }
    Ok(FoldedLayer {
        out_channels: weights.out_channels,
        kernel: weights.kernel,
        in_channels: weights.in_channels,
        scaled_weights: scaled,
        shifts,
        shift_codes: None,
        quantized: false,
        weight_bits: None,
        act_bits: None,
        weight_max: None,
    })
}

fn weight_levels(bits: u32) -> f64 {
    ((1u64 << (bits - 1)) - 1) as f64
}

fn check_bits(name: &str, bits: u32) -> Result<()> {
    if !(2..=16).contains(&bits) {
        return Err(Error::Config(format!("{name} {bits} outside [2, 16]")));
    }
    Ok(())
}

/// Counter preset for a float shift, rounded half away from zero.
pub fn shift_code(shift: f64, act_bits: u32, full_scale: f64) -> Result<i64> {
    let adc = AdcConfig { bits: act_bits, full_scale, ..AdcConfig::default() };
    adc.validate()?;
    let code = (shift * adc.max_code() as f64 / full_scale).round();
    let (lo, hi) = adc.preset_range();
    if !code.is_finite() || code < lo as f64 || code > hi as f64 {
        return Err(Error::Overflow(format!("shift {shift} maps to preset {code}, outside [{lo}, {hi}]")));
    }
    Ok(code as i64)
}

/// Per-tensor symmetric weight quantization plus integer shift presets.
pub fn quantize_layer(folded: &FoldedLayer, weight_bits: u32, act_bits: u32, full_scale: f64) -> Result<FoldedLayer> {
    check_bits("weight bits", weight_bits)?;
    check_bits("activation bits", act_bits)?;
    let levels = weight_levels(weight_bits);
    // An already-quantized layer keeps its grid, which makes this idempotent.
    let anchor = match (folded.quantized, folded.weight_bits, folded.weight_max) {
        (true, Some(b), Some(m)) if b == weight_bits => m,
        _ => folded.scaled_weights.iter().fold(0.0f64, |m, w| m.max(w.abs())),
    };
    let weights = if anchor == 0.0 {
        folded.scaled_weights.clone()
    } else {
        folded
            .scaled_weights
            .iter()
            .map(|&w| {
                let code = (w * levels / anchor).round().clamp(-levels, levels);
                code * anchor / levels
            })
            .collect()
    };
    let codes = folded.shifts.iter().map(|&b| shift_code(b, act_bits, full_scale)).collect::<Result<Vec<_>>>()?;
    Ok(FoldedLayer {
        scaled_weights: weights,
        shift_codes: Some(codes),
        quantized: true,
        weight_bits: Some(weight_bits),
        act_bits: Some(act_bits),
        weight_max: Some(anchor),
        ..folded.clone()
    })
}

/// A constraint the in-pixel layer breaks.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    OverlappingStride { kernel: usize, stride: usize },
    NonZeroPadding { padding: usize },
    ChannelBudget { channels: usize, budget: usize },
    Geometry { message: String },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::OverlappingStride { kernel, stride } => {
                write!(f, "stride {stride} differs from kernel {kernel}: receptive fields overlap")
            }
            Violation::NonZeroPadding { padding } => write!(f, "padding {padding} has no pixels behind it"),
            Violation::ChannelBudget { channels, budget } => {
                write!(f, "{channels} output channels exceed the per-pixel budget of {budget} transistors")
            }
            Violation::Geometry { message } => write!(f, "{message}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_constraints(g: &FrontEndGeometry, channel_budget: usize) -> ConstraintReport {
    let mut violations = Vec::new();
    if g.p2m_mode && g.stride != g.kernel {
        violations.push(Violation::OverlappingStride { kernel: g.kernel, stride: g.stride });
    }
    if g.padding != 0 {
        violations.push(Violation::NonZeroPadding { padding: g.padding });
    }
    if g.out_channels > channel_budget {
        violations.push(Violation::ChannelBudget { channels: g.out_channels, budget: channel_budget });
    }
    if let Err(e) = g.output_dims() {
        violations.push(Violation::Geometry { message: e.to_string() });
    }
    ConstraintReport { violations }
}

/// Everything needed to run the in-pixel layer on an image.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub array: PixelArrayConfig,
    pub shift_codes: Vec<i64>,
    pub adc: AdcConfig,
    /// Physical weight represented by normalized weight 1.0.
    pub weight_scale: f64,
}

/// Maps a folded layer onto the pixel array.
///
/// With `normalize_weights`, magnitudes are divided by the largest one so
/// they fall in the `[0, 1]` domain of a fitted surrogate; shifts are
/// divided by the same factor so the preset stays in analog units.
pub fn deploy(folded: &FoldedLayer, geometry: FrontEndGeometry, adc: AdcConfig, normalize_weights: bool) -> Result<Deployment> {
    adc.validate()?;
    if (geometry.out_channels, geometry.kernel, geometry.in_channels) != (folded.out_channels, folded.kernel, folded.in_channels) {
        return Err(Error::Shape(format!(
            "layer is {}x{}x{}x{}, geometry expects {}x{}x{}x{}",
            folded.out_channels,
            folded.kernel,
            folded.kernel,
            folded.in_channels,
            geometry.out_channels,
            geometry.kernel,
            geometry.kernel,
            geometry.in_channels
        )));
    }
    let max_abs = folded.scaled_weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let scale = if normalize_weights && max_abs > 0.0 { max_abs } else { 1.0 };
    let array = if scale == 1.0 {
        PixelArrayConfig::from_signed(geometry, &folded.scaled_weights)?
    } else {
        let w: Vec<f64> = folded.scaled_weights.iter().map(|w| w / scale).collect();
        PixelArrayConfig::from_signed(geometry, &w)?
    };
    let shift_codes = match (&folded.shift_codes, folded.act_bits) {
        (Some(codes), Some(bits)) if scale == 1.0 && bits == adc.bits => codes.clone(),
        _ => folded.shifts.iter().map(|&b| shift_code(b / scale, adc.bits, adc.full_scale)).collect::<Result<_>>()?,
    };
    Ok(Deployment { array, shift_codes, adc, weight_scale: scale })
}

/// Quantized activations `[h_o][w_o][c_o]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub bits: u32,
    pub codes: Vec<u32>,
}

impl CodeMap {
    pub fn get(&self, y: usize, x: usize, c: usize) -> u32 {
        self.codes[(y * self.width + x) * self.channels + c]
    }

    pub fn to_raw(&self) -> RawTensor {
        let dtype = if self.bits <= 8 { crate::tensor::DType::U8 } else { crate::tensor::DType::U16 };
        RawTensor {
            dims: vec![self.height, self.width, self.channels],
            dtype,
            bit_depth: self.bits as u8,
            data: self.codes.iter().map(|&c| c as f64).collect(),
            signs: None,
        }
    }
}

impl Deployment {
    pub fn simulate(&self, tf: &TransferFunction, image: &Tensor3) -> Result<CodeMap> {
        let analog = convolve_layer(&self.array, tf, image)?;
        let mut codes = Vec::with_capacity(analog.pairs.len());
        for (k, pair) in analog.pairs.iter().enumerate() {
            let c = k % analog.channels;
            codes.push(convert_with_preset(&self.adc, self.shift_codes[c], *pair)?.code);
        }
        Ok(CodeMap { height: analog.height, width: analog.width, channels: analog.channels, bits: self.adc.bits, codes })
    }
}

// ---------------------------------------------------------------------------
// Layer import file
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    schema_version: u32,
    kernel: usize,
    stride: usize,
    #[serde(default)]
    padding: usize,
    in_channels: usize,
    out_channels: usize,
    #[serde(default = "yes")]
    p2m_mode: bool,
    #[serde(default)]
    weight_bits: Option<u32>,
    act_bits: u32,
    #[serde(default)]
    weights: Option<Vec<f64>>,
    #[serde(default)]
    weights_file: Option<String>,
    bn: BnParams,
}

fn yes() -> bool {
    true
}

/// A first layer as read from a layer file.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub p2m_mode: bool,
    pub weights: ConvWeights,
    pub bn: BnParams,
    pub weight_bits: Option<u32>,
    pub act_bits: u32,
}

impl LayerSpec {
    pub fn geometry(&self, height: usize, width: usize) -> FrontEndGeometry {
        FrontEndGeometry {
            height,
            width,
            in_channels: self.weights.in_channels,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
            out_channels: self.weights.out_channels,
            p2m_mode: self.p2m_mode,
        }
    }

    /// Folds BN and, when `weight_bits` is set, quantizes.
    pub fn compile(&self, full_scale: f64) -> Result<FoldedLayer> {
        let folded = fold_bn(&self.weights, &self.bn)?;
        match self.weight_bits {
            Some(wb) => quantize_layer(&folded, wb, self.act_bits, full_scale),
            None => Ok(folded),
        }
    }
}

/// Parses a layer file; `base` resolves a relative `weights_file`.
pub fn parse_layer(text: &str, base: Option<&Path>) -> Result<LayerSpec> {
    let doc: LayerDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if doc.schema_version != 1 {
        return Err(Error::Parse(format!("unsupported layer schema_version {}", doc.schema_version)));
    }
    let data = match (doc.weights, doc.weights_file) {
        (Some(w), None) => w,
        (None, Some(file)) => {
            let path = base.map_or_else(|| Path::new(&file).to_path_buf(), |b| b.join(&file));
            let raw = RawTensor::from_bytes(&std::fs::read(&path)?)?;
            let want = [doc.out_channels, doc.kernel, doc.kernel, doc.in_channels];
            if raw.dims != want {
                return Err(Error::Shape(format!("weights file dims {:?}, expected {:?}", raw.dims, want)));
            }
            match &raw.signs {
                Some(signs) => raw.data.iter().zip(signs).map(|(m, &neg)| if neg { -m.abs() } else { m.abs() }).collect(),
                None => raw.data.clone(),
            }
        }
        _ => return Err(Error::Parse("layer needs exactly one of `weights` or `weights_file`".into())),
    };
    let weights = ConvWeights::new(doc.out_channels, doc.kernel, doc.in_channels, data)?;
    if let Some(wb) = doc.weight_bits {
        check_bits("weight bits", wb)?;
    }
    check_bits("activation bits", doc.act_bits)?;
    doc.bn.validate()?;
    Ok(LayerSpec {
        kernel: doc.kernel,
        stride: doc.stride,
        padding: doc.padding,
        p2m_mode: doc.p2m_mode,
        weights,
        bn: doc.bn,
        weight_bits: doc.weight_bits,
        act_bits: doc.act_bits,
    })
}
