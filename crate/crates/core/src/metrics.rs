//! Analytical bandwidth, energy, delay and energy-delay-product models.
//!
//! Internally everything is in joules and seconds. The constants file uses
//! pJ, ns and ms to match the usual datasheet units.

use serde::{Deserialize, Serialize};

use crate::adc_cds::AdcConfig;
use crate::array_pipeline::conv_output_dim;
use crate::error::{Error, Result};
use crate::netmodel::{count_reads, ArchSpec, Layer};

const PJ: f64 = 1e-12;
const NS: f64 = 1e-9;
const MS: f64 = 1e-3;

/// Bayer RGGB -> RGB factor.
const BAYER_FACTOR: f64 = 4.0 / 3.0;
/// Bit depth of raw sensor pixels.
const RAW_PIXEL_BITS: f64 = 12.0;

/// Output size of the in-pixel layer relative to the raw image stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandwidthReduction {
    /// `(O / I) * (4/3) * (12 / N_b)`.
    pub value: f64,
    pub output_elems: u64,
    pub input_elems: u64,
}

impl BandwidthReduction {
    /// How many times smaller the transmitted data is (`1 / value`).
    pub fn compression_factor(&self) -> f64 {
        1.0 / self.value
    }
}

pub fn bandwidth_reduction(i: usize, k: usize, p: usize, s: usize, c_o: usize, n_b: u32) -> Result<BandwidthReduction> {
    if !(1..=32).contains(&n_b) {
        return Err(Error::Config(format!("output bit depth {n_b} outside [1, 32]")));
    }
    if i == 0 || c_o == 0 {
        return Err(Error::Geometry("image size and channel count must be positive".into()));
    }
    let side = conv_output_dim(i, k, s, p)? as u64;
    let output_elems = side * side * c_o as u64;
    let input_elems = (i * i * 3) as u64;
    let value = (output_elems as f64 / input_elems as f64) * BAYER_FACTOR * (RAW_PIXEL_BITS / n_b as f64);
    Ok(BandwidthReduction { value, output_elems, input_elems })
}

/// Which sensor row of the constants file applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    P2m,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConstants {
    pub e_pix_pj: f64,
    pub e_adc_pj: f64,
    pub t_sens_ms: f64,
    pub t_adc_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocConstants {
    pub e_com_pj: f64,
    pub e_mac_pj: f64,
    #[serde(default)]
    pub e_read_pj: f64,
    pub b_io_bits: u32,
    pub b_w_bits: u32,
    pub n_bank: u32,
    pub n_mult: u32,
    pub t_mult_ns: f64,
    pub t_read_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorTable {
    pub p2m: SensorConstants,
    pub baseline: SensorConstants,
}

/// Contents of a hardware-constants file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsFile {
    pub schema_version: u32,
    pub soc: SocConstants,
    pub sensor: SensorTable,
    #[serde(default)]
    pub adc: Option<AdcConfig>,
}

pub const DEFAULT_CONSTANTS: &str = include_str!("../fixtures/constants.toml");

impl ConstantsFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ConstantsFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.schema_version != 1 {
            return Err(Error::Parse(format!("unsupported constants schema_version {}", file.schema_version)));
        }
        file.hw(SensorKind::P2m).validate()?;
        file.hw(SensorKind::Baseline).validate()?;
        if let Some(adc) = &file.adc {
            adc.validate()?;
        }
        Ok(file)
    }

    /// Bundled defaults.
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_CONSTANTS).expect("bundled constants are valid")
    }

    pub fn hw(&self, kind: SensorKind) -> HwConstants {
        let s = match kind {
            SensorKind::P2m => &self.sensor.p2m,
            SensorKind::Baseline => &self.sensor.baseline,
        };
        let soc = &self.soc;
        HwConstants {
            e_pix: s.e_pix_pj * PJ,
            e_adc: s.e_adc_pj * PJ,
            e_com: soc.e_com_pj * PJ,
            e_mac: soc.e_mac_pj * PJ,
            e_read: soc.e_read_pj * PJ,
            b_io: soc.b_io_bits,
            b_w: soc.b_w_bits,
            n_bank: soc.n_bank,
            n_mult: soc.n_mult,
            t_sens: s.t_sens_ms * MS,
            t_adc: s.t_adc_ms * MS,
            t_mult: soc.t_mult_ns * NS,
            t_read: soc.t_read_ns * NS,
        }
    }

    pub fn adc_or_default(&self) -> AdcConfig {
        self.adc.unwrap_or_default()
    }
}

/// Per-operation energy (J) and delay (s) constants for one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HwConstants {
    pub e_pix: f64,
    pub e_adc: f64,
    pub e_com: f64,
    pub e_mac: f64,
    pub e_read: f64,
    pub b_io: u32,
    pub b_w: u32,
    pub n_bank: u32,
    pub n_mult: u32,
    pub t_sens: f64,
    pub t_adc: f64,
    pub t_mult: f64,
    pub t_read: f64,
}

impl HwConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("e_pix", self.e_pix),
            ("e_adc", self.e_adc),
            ("e_com", self.e_com),
            ("e_mac", self.e_mac),
            ("t_sens", self.t_sens),
            ("t_adc", self.t_adc),
            ("t_mult", self.t_mult),
            ("t_read", self.t_read),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.e_read.is_finite() && self.e_read >= 0.0) {
            return Err(Error::Config(format!("e_read = {} must be non-negative", self.e_read)));
        }
        if self.b_io == 0 || self.b_w == 0 || self.n_bank == 0 || self.n_mult == 0 {
            return Err(Error::Config("bandwidth, width, bank and multiplier counts must be positive".into()));
        }
        if self.b_io < self.b_w {
            return Err(Error::Config(format!("I/O width {} narrower than weight width {}", self.b_io, self.b_w)));
        }
        Ok(())
    }

    /// Weights fetched per read cycle: `(B_IO / B_W) * N_bank`.
    fn words_per_read(&self) -> u64 {
        (self.b_io / self.b_w) as u64 * self.n_bank as u64
    }
}

/// Energy terms in joules.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnergyBreakdown {
    pub e_sens: f64,
    pub e_com: f64,
    pub e_mac: f64,
    pub e_read: f64,
    pub e_tot: f64,
}

impl EnergyBreakdown {
    /// Processor-side energy.
    pub fn e_soc(&self) -> f64 {
        self.e_mac + self.e_read
    }
}

pub fn energy_total(c: &HwConstants, n_pix: u64, n_mac: u64, n_read: u64) -> EnergyBreakdown {
    let e_sens = (c.e_pix + c.e_adc) * n_pix as f64;
    let e_com = c.e_com * n_pix as f64;
    let e_mac = c.e_mac * n_mac as f64;
    let e_read = c.e_read * n_read as f64;
    EnergyBreakdown { e_sens, e_com, e_mac, e_read, e_tot: e_sens + e_com + e_mac + e_read }
}

/// Delay of one processor layer: weight fetch plus multiplies.
pub fn conv_delay(c: &HwConstants, layer: &Layer) -> f64 {
    let weights = count_reads(layer);
    if weights == 0 {
        return 0.0;
    }
    let read_cycles = weights.div_ceil(c.words_per_read());
    let mult_rounds = weights.div_ceil(c.n_mult as u64);
    read_cycles as f64 * c.t_read + (mult_rounds * (layer.h_o * layer.w_o) as u64) as f64 * c.t_mult
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMode {
    /// Sensing, conversion and compute in series.
    Sequential,
    /// Sensing overlapped with compute: `max(T_sens + T_adc, T_conv)`.
    Conservative,
}

impl std::str::FromStr for DelayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(DelayMode::Sequential),
            "conservative" => Ok(DelayMode::Conservative),
            other => Err(Error::Parse(format!("unknown delay mode `{other}`"))),
        }
    }
}

/// Sum of [`conv_delay`] over processor layers.
pub fn compute_delay(c: &HwConstants, arch: &ArchSpec) -> f64 {
    arch.processor_layers().map(|l| conv_delay(c, l)).fold(0.0, |a, b| a + b)
}

pub fn total_delay(c: &HwConstants, arch: &ArchSpec, mode: DelayMode) -> f64 {
    combine_delay(c.t_sens + c.t_adc, compute_delay(c, arch), mode)
}

fn combine_delay(sensor: f64, compute: f64, mode: DelayMode) -> f64 {
    match mode {
        DelayMode::Sequential => sensor + compute,
        DelayMode::Conservative => sensor.max(compute),
    }
}

/// Energy, delay and EDP of one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostReport {
    pub energy: EnergyBreakdown,
    /// `T_sens + T_adc`.
    pub t_sensor: f64,
    pub t_conv: f64,
    pub t_delay_sequential: f64,
    pub t_delay_conservative: f64,
    pub edp_sequential: f64,
    pub edp_conservative: f64,
    pub n_pix: u64,
    pub n_mac: u64,
    pub n_read: u64,
}

impl CostReport {
    pub fn delay(&self, mode: DelayMode) -> f64 {
        match mode {
            DelayMode::Sequential => self.t_delay_sequential,
            DelayMode::Conservative => self.t_delay_conservative,
        }
    }

    pub fn edp(&self, mode: DelayMode) -> f64 {
        match mode {
            DelayMode::Sequential => self.edp_sequential,
            DelayMode::Conservative => self.edp_conservative,
        }
    }
}

/// Full cost of running `arch` on hardware `c`.
pub fn cost_report(c: &HwConstants, arch: &ArchSpec) -> CostReport {
    let n_pix = arch.sensor_output_elems();
    let n_mac: u64 = arch.processor_layers().map(crate::netmodel::count_macs).sum();
    let n_read: u64 = arch.processor_layers().map(count_reads).sum();
    cost_from_counts(c, n_pix, n_mac, n_read, compute_delay(c, arch))
}

pub fn cost_from_counts(c: &HwConstants, n_pix: u64, n_mac: u64, n_read: u64, t_conv: f64) -> CostReport {
    let energy = energy_total(c, n_pix, n_mac, n_read);
    let t_sensor = c.t_sens + c.t_adc;
    let seq = combine_delay(t_sensor, t_conv, DelayMode::Sequential);
    let cons = combine_delay(t_sensor, t_conv, DelayMode::Conservative);
    CostReport {
        energy,
        t_sensor,
        t_conv,
        t_delay_sequential: seq,
        t_delay_conservative: cons,
        edp_sequential: energy.e_tot * seq,
        edp_conservative: energy.e_tot * cons,
        n_pix,
        n_mac,
        n_read,
    }
}
