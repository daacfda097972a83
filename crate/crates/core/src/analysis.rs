//! Side-by-side cost comparison of several models against a P2M model.

use serde::Serialize;

use crate::error::Result;
use crate::metrics::{bandwidth_reduction, cost_report, BandwidthReduction, ConstantsFile, CostReport, SensorKind};
use crate::netmodel::{count, ArchSpec};

/// Reference headline figures the computed numbers are compared with.
pub mod reference {
    pub const ENERGY_RATIO: f64 = 7.81;
    pub const DELAY_RATIO: f64 = 2.15;
    pub const EDP_RATIO: f64 = 16.76;
    pub const EDP_RATIO_CONSERVATIVE: f64 = 11.0;
    /// Claimed bandwidth compression of the in-pixel layer.
    pub const COMPRESSION: f64 = 21.0;
    pub const BASELINE_MACS: f64 = 1.93e9;
    pub const P2M_MACS: f64 = 0.27e9;
    pub const BASELINE_PEAK_MEMORY_MB: f64 = 7.53;
    pub const P2M_PEAK_MEMORY_MB: f64 = 0.30;
}

/// Relative deviation above which a comparison is flagged.
pub const FLAG_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRow {
    pub name: String,
    pub sensor: SensorKind,
    pub cost: CostReport,
    pub peak_memory_bytes: u64,
}

/// Ratios `baseline / p2m` (larger means P2M wins).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ratio {
    pub baseline: String,
    pub energy: f64,
    pub delay_sequential: f64,
    pub delay_conservative: f64,
    pub edp_sequential: f64,
    pub edp_conservative: f64,
}

/// Energy and delay components divided by the largest total across models.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Normalized {
    pub model: String,
    pub energy_total: f64,
    pub energy_sensing: f64,
    pub energy_com: f64,
    pub energy_soc: f64,
    pub delay_total: f64,
    pub delay_sensing: f64,
    pub delay_soc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceCheck {
    pub quantity: String,
    pub computed: f64,
    pub reference: f64,
    pub rel_diff: f64,
    pub flagged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ReferenceCheck {
    fn new(quantity: &str, computed: f64, reference: f64, note: Option<String>) -> Self {
        let rel_diff = (computed - reference) / reference;
        ReferenceCheck {
            quantity: quantity.to_owned(),
            computed,
            reference,
            rel_diff,
            flagged: rel_diff.abs() > FLAG_TOLERANCE,
            note,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub act_bits: u32,
    /// First model with an in-pixel layer; ratios are relative to it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p2m: Option<String>,
    pub rows: Vec<ModelRow>,
    pub ratios: Vec<Ratio>,
    pub normalized: Vec<Normalized>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<BandwidthReduction>,
    pub checks: Vec<ReferenceCheck>,
}

impl AnalysisReport {
    pub fn row(&self, name: &str) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn max_ratio(&self, f: impl Fn(&Ratio) -> f64) -> f64 {
        self.ratios.iter().map(f).fold(f64::NAN, f64::max)
    }

    /// One line per model with energies in uJ and delays in ms.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "model,sensor,n_pix,n_mac,n_read,peak_memory_bytes,e_sens_uj,e_com_uj,e_mac_uj,e_read_uj,e_tot_uj,\
             t_sensor_ms,t_conv_ms,t_seq_ms,t_cons_ms,edp_seq_uj_ms,edp_cons_uj_ms\n",
        );
        for r in &self.rows {
            let c = &r.cost;
            let e = &c.energy;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.name,
                match r.sensor {
                    SensorKind::P2m => "p2m",
                    SensorKind::Baseline => "baseline",
                },
                c.n_pix,
                c.n_mac,
                c.n_read,
                r.peak_memory_bytes,
                e.e_sens * 1e6,
                e.e_com * 1e6,
                e.e_mac * 1e6,
                e.e_read * 1e6,
                e.e_tot * 1e6,
                c.t_sensor * 1e3,
                c.t_conv * 1e3,
                c.t_delay_sequential * 1e3,
                c.t_delay_conservative * 1e3,
                c.edp_sequential * 1e9,
                c.edp_conservative * 1e9,
            ));
        }
        out
    }
}

/// Sensor kind implied by the architecture: P2M when the first layer runs
/// in-pixel.
pub fn sensor_kind(arch: &ArchSpec) -> SensorKind {
    if arch.in_pixel_layer().is_some() {
        SensorKind::P2m
    } else {
        SensorKind::Baseline
    }
}

/// Costs every model and compares the baselines with the first P2M model.
/// Without a P2M model only the per-model rows are filled in.
pub fn analyze(archs: &[ArchSpec], consts: &ConstantsFile, act_bits: u32) -> Result<AnalysisReport> {
    let rows: Vec<ModelRow> = archs
        .iter()
        .map(|a| {
            let sensor = sensor_kind(a);
            ModelRow {
                name: a.name.clone(),
                sensor,
                cost: cost_report(&consts.hw(sensor), a),
                peak_memory_bytes: count(a, act_bits.div_ceil(8) as u64).peak_memory_bytes,
            }
        })
        .collect();
    let Some(p2m_idx) = archs.iter().position(|a| sensor_kind(a) == SensorKind::P2m) else {
        let normalized = normalize(&rows);
        return Ok(AnalysisReport { act_bits, p2m: None, rows, ratios: Vec::new(), normalized, bandwidth: None, checks: Vec::new() });
    };
    let p2m_arch = &archs[p2m_idx];
    let p = &rows[p2m_idx].cost;

    let ratios: Vec<Ratio> = rows
        .iter()
        .filter(|r| r.sensor == SensorKind::Baseline)
        .map(|r| {
            let b = &r.cost;
            Ratio {
                baseline: r.name.clone(),
                energy: b.energy.e_tot / p.energy.e_tot,
                delay_sequential: b.t_delay_sequential / p.t_delay_sequential,
                delay_conservative: b.t_delay_conservative / p.t_delay_conservative,
                edp_sequential: b.edp_sequential / p.edp_sequential,
                edp_conservative: b.edp_conservative / p.edp_conservative,
            }
        })
        .collect();
    let normalized = normalize(&rows);

    let front = p2m_arch.in_pixel_layer().expect("p2m model has an in-pixel layer");
    let bandwidth = if front.h_i == front.w_i {
        let pad = match front.p {
            crate::netmodel::Padding::Explicit(p) => Some(p),
            crate::netmodel::Padding::Same(_) => None,
        };
        pad.and_then(|pad| bandwidth_reduction(front.h_i, front.k, pad, front.s, front.c_out, act_bits).ok())
    } else {
        None
    };

    let mut checks = Vec::new();
    if !ratios.is_empty() {
        let max = |f: fn(&Ratio) -> f64| ratios.iter().map(f).fold(f64::NAN, f64::max);
        checks.push(ReferenceCheck::new("energy_ratio_max", max(|r| r.energy), reference::ENERGY_RATIO, None));
        checks.push(ReferenceCheck::new("delay_ratio_max", max(|r| r.delay_sequential), reference::DELAY_RATIO, None));
        checks.push(ReferenceCheck::new("edp_ratio_max", max(|r| r.edp_sequential), reference::EDP_RATIO, None));
        checks.push(ReferenceCheck::new(
            "edp_ratio_conservative_max",
            max(|r| r.edp_conservative),
            reference::EDP_RATIO_CONSERVATIVE,
            None,
        ));
        let worst = rows
            .iter()
            .filter(|r| r.sensor == SensorKind::Baseline)
            .max_by_key(|r| r.cost.n_mac)
            .expect("ratios imply a baseline");
        checks.push(ReferenceCheck::new("baseline_macs_max", worst.cost.n_mac as f64, reference::BASELINE_MACS, None));
        checks.push(ReferenceCheck::new(
            "baseline_peak_memory_mb",
            worst.peak_memory_bytes as f64 / 1e6,
            reference::BASELINE_PEAK_MEMORY_MB,
            None,
        ));
    }
    checks.push(ReferenceCheck::new("p2m_macs", p.n_mac as f64, reference::P2M_MACS, None));
    checks.push(ReferenceCheck::new(
        "p2m_peak_memory_mb",
        rows[p2m_idx].peak_memory_bytes as f64 / 1e6,
        reference::P2M_PEAK_MEMORY_MB,
        None,
    ));
    if let Some(br) = &bandwidth {
        let cf = br.compression_factor();
        checks.push(ReferenceCheck::new(
            "bandwidth_compression",
            cf,
            reference::COMPRESSION,
            Some(format!(
                "the in-pixel layer shape gives BR = {:.6}, i.e. {cf:.4}x fewer bits than the raw stream; \
                 the claimed {}x is not reproduced by the formula",
                br.value,
                reference::COMPRESSION
            )),
        ));
    }

    Ok(AnalysisReport { act_bits, p2m: Some(rows[p2m_idx].name.clone()), rows, ratios, normalized, bandwidth, checks })
}

fn normalize(rows: &[ModelRow]) -> Vec<Normalized> {
    let e_max = rows.iter().map(|r| r.cost.energy.e_tot).fold(0.0, f64::max);
    let t_max = rows.iter().map(|r| r.cost.t_delay_sequential).fold(0.0, f64::max);
    let div = |x: f64, m: f64| if m > 0.0 { x / m } else { 0.0 };
    rows.iter()
        .map(|r| {
            let c = &r.cost;
            Normalized {
                model: r.name.clone(),
                energy_total: div(c.energy.e_tot, e_max),
                energy_sensing: div(c.energy.e_sens, e_max),
                energy_com: div(c.energy.e_com, e_max),
                energy_soc: div(c.energy.e_soc(), e_max),
                delay_total: div(c.t_delay_sequential, t_max),
                delay_sensing: div(c.t_sensor, t_max),
                delay_soc: div(c.t_conv, t_max),
            }
        })
        .collect()
}
