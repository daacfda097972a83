//! Single-slope ADC with digital correlated double sampling.
//!
//! The counter is preset to the shift code, counts up while the ramp is
//! below the positive-weight sample, then counts down while the ramp is
//! below the negative-weight sample. Latching the result clipped to
//! `[0, 2^N - 1]` gives a quantized shifted ReLU in code space.
//!
//! Two routes are provided: the closed form [`convert`] and the
//! cycle-by-cycle [`CycleCounter`]. They must agree exactly.

use serde::{Deserialize, Serialize};

use crate::array_pipeline::AnalogSamplePair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcConfig {
    /// Output resolution N.
    pub bits: u32,
    /// Counter clock in Hz.
    pub clock_hz: f64,
    /// Analog value mapped to code `2^N - 1`.
    pub full_scale: f64,
    /// Counter preset (shift code).
    #[serde(default)]
    pub preset: i64,
    /// Column ADCs converting simultaneously.
    #[serde(default = "one")]
    pub columns_parallel: usize,
    /// Samples per conversion; 2 with CDS.
    #[serde(default = "two")]
    pub samples_per_conversion: u32,
    /// Error when the pre-clip counter leaves `(-2^(N+1), 2^(N+1))`.
    #[serde(default)]
    pub headroom_check: bool,
}

fn one() -> usize {
    1
}

fn two() -> u32 {
    2
}

impl Default for AdcConfig {
    /// 8-bit, 2 GHz counter, unit full scale, CDS.
    fn default() -> Self {
        AdcConfig {
            bits: 8,
            clock_hz: 2e9,
            full_scale: 1.0,
            preset: 0,
            columns_parallel: 1,
            samples_per_conversion: 2,
            headroom_check: false,
        }
    }
}

/// Latched ADC output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DigitalActivation {
    pub code: u32,
}

impl AdcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.bits) {
            return Err(Error::Config(format!("ADC bits {} outside [1, 16]", self.bits)));
        }
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(Error::Config(format!("clock {} Hz must be positive", self.clock_hz)));
        }
        if !(self.full_scale.is_finite() && self.full_scale > 0.0) {
            return Err(Error::Config(format!("full scale {} must be positive", self.full_scale)));
        }
        if self.columns_parallel == 0 {
            return Err(Error::Config("columns_parallel must be at least 1".into()));
        }
        if self.samples_per_conversion == 0 {
            return Err(Error::Config("samples_per_conversion must be at least 1".into()));
        }
        Ok(())
    }

    /// Largest output code, `2^N - 1`.
    pub fn max_code(&self) -> i64 {
        (1i64 << self.bits) - 1
    }

    /// Clock cycles per sample.
    pub fn cycles_per_sample(&self) -> u64 {
        1u64 << self.bits
    }

    /// Inclusive preset range a counter with two bits of headroom can hold.
    pub fn preset_range(&self) -> (i64, i64) {
        let lim = 1i64 << (self.bits + 1);
        (-lim, lim - 1)
    }

    /// Input value expressed in LSB units of the ramp.
    #[inline]
    pub fn to_lsb(&self, v: f64) -> f64 {
        v * self.max_code() as f64 / self.full_scale
    }

    /// `floor(v / full_scale * (2^N - 1))` clamped to `[0, 2^N - 1]`.
    pub fn quantize(&self, v: f64) -> i64 {
        let x = self.to_lsb(v).floor();
        if x <= 0.0 {
            0
        } else if x >= self.max_code() as f64 {
            self.max_code()
        } else {
            x as i64
        }
    }

    pub fn with_preset(mut self, preset: i64) -> Self {
        self.preset = preset;
        self
    }
}

fn check_sample(sample: &AnalogSamplePair) -> Result<()> {
    for (name, v) in [("v_pos", sample.v_pos), ("v_neg", sample.v_neg)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Range(format!("{name} = {v} must be finite and non-negative")));
        }
    }
    Ok(())
}

/// Closed-form conversion using `cfg.preset`.
pub fn convert(cfg: &AdcConfig, sample: AnalogSamplePair) -> Result<DigitalActivation> {
    convert_with_preset(cfg, cfg.preset, sample)
}

/// `clamp(preset + q(v_pos) - q(v_neg), 0, 2^N - 1)`.
pub fn convert_with_preset(cfg: &AdcConfig, preset: i64, sample: AnalogSamplePair) -> Result<DigitalActivation> {
    cfg.validate()?;
    check_sample(&sample)?;
    let pre_clip = preset + cfg.quantize(sample.v_pos) - cfg.quantize(sample.v_neg);
    if cfg.headroom_check {
        let lim = 1i64 << (cfg.bits + 1);
        // the extreme value of the running count is reached after the up phase
        let peak = (preset + cfg.quantize(sample.v_pos)).abs().max(pre_clip.abs()).max(preset.abs());
        if peak >= lim {
            return Err(Error::Overflow(format!("counter reached {peak}, beyond {} bits of range", cfg.bits + 2)));
        }
    }
    Ok(DigitalActivation { code: pre_clip.clamp(0, cfg.max_code()) as u32 })
}

/// Seconds to perform `conversions_per_column` conversions on one column ADC.
pub fn conversion_time(cfg: &AdcConfig, conversions_per_column: u64) -> Result<f64> {
    cfg.validate()?;
    let cycles = conversions_per_column as f64 * cfg.samples_per_conversion as f64 * cfg.cycles_per_sample() as f64;
    Ok(cycles / cfg.clock_hz)
}

/// Conversions each column ADC performs for `total` outputs.
pub fn conversions_per_column(total: u64, columns_parallel: usize) -> u64 {
    total.div_ceil(columns_parallel.max(1) as u64)
}

/// Cycle-by-cycle model of the ramp, comparator and up/down counter.
#[derive(Debug, Clone)]
pub struct CycleCounter {
    cfg: AdcConfig,
    count: i64,
    peak: i64,
    cycles: u64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Up,
    Down,
}

impl CycleCounter {
    pub fn new(cfg: AdcConfig, preset: i64) -> Self {
        CycleCounter { cfg, count: preset, peak: preset.abs(), cycles: 0 }
    }

    /// One sample: cycle 0 resets the ramp, cycles `1..2^N` step it by one
    /// LSB. The counter runs until the comparator trips.
    fn sample(&mut self, v: f64, dir: Direction) {
        let x = self.cfg.to_lsb(v);
        let mut enabled = true;
        for cycle in 0..self.cfg.cycles_per_sample() {
            self.cycles += 1;
            if cycle == 0 {
                continue;
            }
            let ramp = cycle as f64;
            if ramp > x {
                enabled = false;
            }
            if enabled {
                match dir {
                    Direction::Up => self.count += 1,
                    Direction::Down => self.count -= 1,
                }
                self.peak = self.peak.max(self.count.abs());
            }
        }
    }

    /// Runs both samples and latches the result.
    pub fn run(mut self, sample: AnalogSamplePair) -> Result<(DigitalActivation, u64)> {
        self.cfg.validate()?;
        check_sample(&sample)?;
        self.sample(sample.v_pos, Direction::Up);
        self.sample(sample.v_neg, Direction::Down);
        if self.cfg.headroom_check && self.peak >= 1i64 << (self.cfg.bits + 1) {
            return Err(Error::Overflow(format!("counter reached {}", self.peak)));
        }
        let latched = if self.count < 0 { 0 } else { self.count.min(self.cfg.max_code()) };
        Ok((DigitalActivation { code: latched as u32 }, self.cycles))
    }
}

/// Cycle-accurate conversion; returns the code only.
pub fn simulate_conversion(cfg: &AdcConfig, preset: i64, sample: AnalogSamplePair) -> Result<DigitalActivation> {
    CycleCounter::new(*cfg, preset).run(sample).map(|(a, _)| a)
}
