//! Browser bindings for the demo page in `www/`. Every export returns a JSON
//! string; the `*_json` functions are the same operations callable natively.

use p2m_core::adc_cds::{convert_with_preset, simulate_conversion, AdcConfig};
use p2m_core::array_pipeline::AnalogSamplePair;
use p2m_core::codesign::DEFAULT_CHANNEL_BUDGET;
use p2m_core::metrics::{cost_report, ConstantsFile, CostReport, SensorKind};
use p2m_core::netmodel::{parse_arch, BASELINE_NC_ARCH, P2M_CUSTOM_ARCH};
use p2m_core::pixel_model::{default_surrogate, TransferFunction};
use p2m_core::sweep::{evaluate, AdcTimeSource, GridSpec, StrideSpec, SweepPoint, SweepRow};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Surface {
    w: Vec<f64>,
    i: Vec<f64>,
    /// `v[a][b]` at `(w[a], i[b])`.
    surrogate: Vec<Vec<f64>>,
    ideal: Vec<Vec<f64>>,
    synthetic: bool,
}

fn axis(n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}

pub fn transfer_surface_json(n: usize) -> Result<String, String> {
    let tf = default_surrogate();
    let ideal = TransferFunction::ideal();
    let (w, i) = (axis(n), axis(n));
    let eval = |f: &TransferFunction| -> Result<Vec<Vec<f64>>, String> {
        w.iter().map(|&a| i.iter().map(|&b| f.evaluate(a, b).map_err(|e| e.to_string())).collect()).collect()
    };
    let s = Surface { surrogate: eval(&tf)?, ideal: eval(&ideal)?, synthetic: tf.is_synthetic(), w: w.clone(), i: i.clone() };
    serde_json::to_string(&s).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct AdcCurve {
    v_pos: Vec<f64>,
    /// Closed-form codes.
    code: Vec<u32>,
    /// Cycle-level counter codes; identical to `code`.
    counter: Vec<u32>,
    max_code: i64,
}

pub fn adc_curve_json(bits: u32, full_scale: f64, preset: i64, v_neg: f64, points: usize) -> Result<String, String> {
    let cfg = AdcConfig { bits, full_scale, ..AdcConfig::default() };
    let v_pos: Vec<f64> = axis(points).into_iter().map(|t| t * 1.25 * full_scale).collect();
    let mut code = Vec::with_capacity(v_pos.len());
    let mut counter = Vec::with_capacity(v_pos.len());
    for &v in &v_pos {
        let sample = AnalogSamplePair { v_pos: v, v_neg };
        code.push(convert_with_preset(&cfg, preset, sample).map_err(|e| e.to_string())?.code);
        counter.push(simulate_conversion(&cfg, preset, sample).map_err(|e| e.to_string())?.code);
    }
    serde_json::to_string(&AdcCurve { v_pos, code, counter, max_code: cfg.max_code() }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Explorer {
    point: SweepRow,
    baseline: CostReport,
    energy_ratio: Option<f64>,
    delay_ratio: Option<f64>,
}

/// In-pixel layer with stride equal to kernel ahead of the bundled downstream
/// network, compared with the bundled non-compressed baseline. Both see the
/// baseline's input resolution.
pub fn explore_json(kernel: usize, channels: usize, bits: u32) -> Result<String, String> {
    let consts = ConstantsFile::bundled();
    let downstream = parse_arch(P2M_CUSTOM_ARCH).map_err(|e| e.to_string())?;
    let base_arch = parse_arch(BASELINE_NC_ARCH).map_err(|e| e.to_string())?;
    let image = base_arch.input.0;
    let grid = GridSpec {
        schema_version: 1,
        image: vec![image],
        kernel: vec![kernel],
        stride: StrideSpec::default(),
        padding: vec![0],
        channels: vec![channels],
        bits: vec![bits],
        in_channels: 3,
        t_adc: AdcTimeSource::Derived,
        channel_budget: DEFAULT_CHANNEL_BUDGET,
    };
    let pt = SweepPoint { image, kernel, stride: kernel, padding: 0, channels, bits };
    let row = evaluate(&grid, &consts, Some(&downstream), pt);
    let baseline = cost_report(&consts.hw(SensorKind::Baseline), &base_arch);
    let out = Explorer {
        energy_ratio: row.e_tot.map(|e| baseline.energy.e_tot / e),
        delay_ratio: row.t_seq.map(|t| baseline.t_delay_sequential / t),
        point: row,
        baseline,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn transfer_surface(n: usize) -> Result<String, JsError> {
    js(transfer_surface_json(n))
}

#[wasm_bindgen]
pub fn adc_curve(bits: u32, full_scale: f64, preset: i32, v_neg: f64, points: usize) -> Result<String, JsError> {
    js(adc_curve_json(bits, full_scale, preset as i64, v_neg, points))
}

#[wasm_bindgen]
pub fn explore(kernel: usize, channels: usize, bits: u32) -> Result<String, JsError> {
    js(explore_json(kernel, channels, bits))
}
