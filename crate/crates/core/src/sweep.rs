//! Design-space sweep over in-pixel layer shapes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adc_cds::{conversion_time, conversions_per_column};
use crate::array_pipeline::FrontEndGeometry;
use crate::codesign::{validate_constraints, DEFAULT_CHANNEL_BUDGET};
use crate::error::{Error, Result};
use crate::metrics::{bandwidth_reduction, compute_delay, cost_from_counts, ConstantsFile, SensorKind};
use crate::netmodel::{count_reads, ArchSpec, LayerDecl};

/// `stride = "kernel"` ties the stride to the kernel size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrideSpec {
    Tied(TiedTag),
    List(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiedTag {
    Kernel,
}

impl Default for StrideSpec {
    fn default() -> Self {
        StrideSpec::Tied(TiedTag::Kernel)
    }
}

/// Where each point's ADC time comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdcTimeSource {
    /// Computed from the point's output shape and bit depth.
    #[default]
    Derived,
    /// The fixed P2M value from the constants file.
    Constants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub schema_version: u32,
    pub image: Vec<usize>,
    pub kernel: Vec<usize>,
    #[serde(default)]
    pub stride: StrideSpec,
    #[serde(default = "zero_padding")]
    pub padding: Vec<usize>,
    pub channels: Vec<usize>,
    pub bits: Vec<u32>,
    #[serde(default = "three")]
    pub in_channels: usize,
    #[serde(default)]
    pub t_adc: AdcTimeSource,
    #[serde(default = "budget")]
    pub channel_budget: usize,
}

fn zero_padding() -> Vec<usize> {
    vec![0]
}

fn three() -> usize {
    3
}

fn budget() -> usize {
    DEFAULT_CHANNEL_BUDGET
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let g: GridSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if g.schema_version != 1 {
            return Err(Error::Parse(format!("unsupported grid schema_version {}", g.schema_version)));
        }
        if g.image.is_empty() || g.kernel.is_empty() || g.padding.is_empty() || g.channels.is_empty() || g.bits.is_empty() {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        if matches!(&g.stride, StrideSpec::List(v) if v.is_empty()) {
            return Err(Error::Config("stride list is empty".into()));
        }
        Ok(g)
    }

    /// Grid points in axis order image, kernel, stride, padding, channels, bits.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &image in &self.image {
            for &kernel in &self.kernel {
                let strides = match &self.stride {
                    StrideSpec::Tied(_) => vec![kernel],
                    StrideSpec::List(v) => v.clone(),
                };
                for stride in strides {
                    for &padding in &self.padding {
                        for &channels in &self.channels {
                            for &bits in &self.bits {
                                out.push(SweepPoint { image, kernel, stride, padding, channels, bits });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SweepPoint {
    pub image: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub channels: usize,
    pub bits: u32,
}

/// One evaluated grid point. Energies in J, times in s.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: SweepPoint,
    /// Hardware constraints the point breaks; metrics are still reported.
    pub violations: Vec<String>,
    pub br: Option<f64>,
    pub compression: Option<f64>,
    pub n_pix: Option<u64>,
    pub n_mac: Option<u64>,
    pub e_tot: Option<f64>,
    pub t_adc: Option<f64>,
    pub t_seq: Option<f64>,
    pub t_cons: Option<f64>,
    pub edp_seq: Option<f64>,
    pub edp_cons: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(point: SweepPoint, violations: Vec<String>, error: String) -> Self {
        SweepRow {
            point,
            violations,
            br: None,
            compression: None,
            n_pix: None,
            n_mac: None,
            e_tot: None,
            t_adc: None,
            t_seq: None,
            t_cons: None,
            edp_seq: None,
            edp_cons: None,
            error: Some(error),
        }
    }

    pub fn feasible(&self) -> bool {
        self.violations.is_empty() && self.error.is_none()
    }
}

/// Evaluates one point with `downstream` (if any) as the processor network.
pub fn evaluate(grid: &GridSpec, consts: &ConstantsFile, downstream: Option<&ArchSpec>, pt: SweepPoint) -> SweepRow {
    let geometry = FrontEndGeometry {
        height: pt.image,
        width: pt.image,
        in_channels: grid.in_channels,
        kernel: pt.kernel,
        stride: pt.stride,
        padding: pt.padding,
        out_channels: pt.channels,
        p2m_mode: true,
    };
    let violations: Vec<String> =
        validate_constraints(&geometry, grid.channel_budget).violations.iter().map(|v| v.to_string()).collect();
    match evaluate_inner(grid, consts, downstream, pt) {
        Ok(mut row) => {
            row.violations = violations;
            row
        }
        Err(e) => {
            let mut row = SweepRow::failed(pt, violations, e.to_string());
            // Keep the bandwidth figures when only a later stage failed.
            if let Ok(br) = bandwidth_reduction(pt.image, pt.kernel, pt.padding, pt.stride, pt.channels, pt.bits) {
                row.br = Some(br.value);
                row.compression = Some(br.compression_factor());
            }
            row
        }
    }
}

fn evaluate_inner(grid: &GridSpec, consts: &ConstantsFile, downstream: Option<&ArchSpec>, pt: SweepPoint) -> Result<SweepRow> {
    let br = bandwidth_reduction(pt.image, pt.kernel, pt.padding, pt.stride, pt.channels, pt.bits)?;
    let front = LayerDecl::conv(pt.kernel, pt.stride, pt.padding, pt.channels);
    let input = (pt.image, pt.image, grid.in_channels);
    let arch = match downstream {
        Some(a) => a.with_front_end(input, front)?,
        None => ArchSpec::build("front-end", input, &[LayerDecl { in_pixel: true, ..front }])?,
    };
    let front = arch.in_pixel_layer().expect("front end is in-pixel");
    let mut hw = consts.hw(SensorKind::P2m);
    if grid.t_adc == AdcTimeSource::Derived {
        let mut adc = consts.adc_or_default();
        adc.bits = pt.bits;
        adc.columns_parallel = front.w_o;
        let total = front.output_elems();
        hw.t_adc = conversion_time(&adc, conversions_per_column(total, adc.columns_parallel))?;
    }
    let n_mac: u64 = arch.processor_layers().map(crate::netmodel::count_macs).sum();
    let n_read: u64 = arch.processor_layers().map(count_reads).sum();
    let cost = cost_from_counts(&hw, arch.sensor_output_elems(), n_mac, n_read, compute_delay(&hw, &arch));
    Ok(SweepRow {
        point: pt,
        violations: Vec::new(),
        br: Some(br.value),
        compression: Some(br.compression_factor()),
        n_pix: Some(cost.n_pix),
        n_mac: Some(n_mac),
        e_tot: Some(cost.energy.e_tot),
        t_adc: Some(hw.t_adc),
        t_seq: Some(cost.t_delay_sequential),
        t_cons: Some(cost.t_delay_conservative),
        edp_seq: Some(cost.edp_sequential),
        edp_cons: Some(cost.edp_conservative),
        error: None,
    })
}

/// Evaluates every grid point in parallel; output order matches
/// [`GridSpec::points`].
pub fn run_sweep(grid: &GridSpec, consts: &ConstantsFile, downstream: Option<&ArchSpec>) -> Vec<SweepRow> {
    grid.points().into_par_iter().map(|pt| evaluate(grid, consts, downstream, pt)).collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn scaled(v: Option<f64>, k: f64) -> String {
    opt(v.map(|x| x * k))
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// CSV with energies in uJ and times in ms.
pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "image,kernel,stride,padding,channels,bits,feasible,br,compression,n_pix,n_mac,e_tot_uj,t_adc_ms,\
         t_seq_ms,t_cons_ms,edp_seq_uj_ms,edp_cons_uj_ms,violations,error\n",
    );
    for r in rows {
        let p = &r.point;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            p.image,
            p.kernel,
            p.stride,
            p.padding,
            p.channels,
            p.bits,
            r.feasible(),
            opt(r.br),
            opt(r.compression),
            opt(r.n_pix),
            opt(r.n_mac),
            scaled(r.e_tot, 1e6),
            scaled(r.t_adc, 1e3),
            scaled(r.t_seq, 1e3),
            scaled(r.t_cons, 1e3),
            scaled(r.edp_seq, 1e9),
            scaled(r.edp_cons, 1e9),
            quote(&r.violations.join("; ")),
            quote(r.error.as_deref().unwrap_or("")),
        ));
    }
    out
}
