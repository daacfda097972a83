use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use p2m_core::adc_cds::{conversion_time, conversions_per_column, AdcConfig};
use p2m_core::analysis::{analyze, AnalysisReport};
use p2m_core::codesign::{deploy, parse_layer, validate_constraints, DEFAULT_CHANNEL_BUDGET};
use p2m_core::metrics::DelayMode;
use p2m_core::pixel_model::{fit_surrogate_with, parse_samples_csv, surrogate_to_toml, FitOptions, TransferKind};
use p2m_core::sweep::{rows_to_csv, run_sweep, GridSpec, SweepRow};
use p2m_core::tensor::load_image;
use p2m_core::verification::{
    check_instance, exhaustive_counter_check, random_counter_check, random_instance, shrink, CounterMismatch, Instance,
    InstanceLimits, Mismatch,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::inputs::{read, read_text, Inputs};
use crate::manifest::Manifest;

/// Raised when `verify` finds a disagreement.
#[derive(Debug)]
pub struct VerifyFailed;

impl std::fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("verification failed")
    }
}

impl std::error::Error for VerifyFailed {}

struct OutDir(PathBuf);

impl OutDir {
    fn create(path: &Path) -> Result<Self> {
        std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(OutDir(path.to_path_buf()))
    }

    fn write(&self, name: &str, bytes: &[u8], m: &mut Manifest) -> Result<PathBuf> {
        let path = self.0.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        m.output(&path, bytes);
        Ok(path)
    }

    /// Writes the structured summary last so it can list the other outputs.
    fn finish<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf> {
        let text = toml::to_string(body).context("serializing report")?;
        let path = self.0.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

// ---------------------------------------------------------------------------

pub struct FitArgs {
    pub samples: PathBuf,
    pub degree_w: usize,
    pub degree_i: usize,
    pub allow_non_monotone: bool,
    pub synthetic: bool,
    pub out: PathBuf,
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let mut m = Manifest::new("fit");
    let text = read_text(&a.samples)?;
    m.input(a.samples.display().to_string(), text.as_bytes());
    let samples = parse_samples_csv(&text).with_context(|| format!("in {}", a.samples.display()))?;
    let tf = fit_surrogate_with(
        &samples,
        FitOptions { degree_w: a.degree_w, degree_i: a.degree_i, allow_non_monotone: a.allow_non_monotone },
    )?;
    let out = OutDir::create(&a.out)?;
    let note = a.synthetic.then_some("Fitted to synthetic samples, not to circuit simulation.");
    let path = out.write("surrogate.toml", surrogate_to_toml(&tf, a.synthetic, note).as_bytes(), &mut m)?;
    let d = tf.diagnostics().expect("fitted surrogates carry diagnostics");
    println!("fitted {}x{} surrogate to {} samples", a.degree_w, a.degree_i, d.samples);
    println!("residual rms {:.3e}, r^2 {:.9}, monotone {}", d.residual_rms, d.r_squared, d.monotone);
    for w in &d.warnings {
        println!("warning: {w}");
    }
    println!("wrote {}", path.display());
    #[derive(Serialize)]
    struct Summary<'a> {
        manifest: Manifest,
        diagnostics: &'a p2m_core::pixel_model::FitDiagnostics,
    }
    out.finish("fit.toml", &Summary { manifest: m, diagnostics: d })?;
    Ok(())
}

// ---------------------------------------------------------------------------

pub struct SimulateArgs {
    pub image: PathBuf,
    pub layer: PathBuf,
    pub surrogate: Option<PathBuf>,
    pub adc: Option<PathBuf>,
    pub full_scale: Option<f64>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Timing {
    columns_parallel: usize,
    conversions_per_column: u64,
    t_adc_ms: f64,
}

#[derive(Serialize)]
struct CodeStats {
    min: u32,
    max: u32,
    mean: f64,
    saturated_fraction: f64,
}

pub fn simulate(inputs: &Inputs, a: &SimulateArgs) -> Result<()> {
    let mut m = Manifest::new("simulate");
    m.input(a.image.display().to_string(), &read(&a.image)?);
    let image = load_image(&a.image).with_context(|| format!("in {}", a.image.display()))?;
    let layer_text = read_text(&a.layer)?;
    m.input(a.layer.display().to_string(), layer_text.as_bytes());
    let spec = parse_layer(&layer_text, a.layer.parent()).with_context(|| format!("in {}", a.layer.display()))?;
    let tf = inputs.transfer(a.surrogate.as_deref(), &mut m)?;
    let mut adc = inputs.adc(a.adc.as_deref(), &mut m)?.unwrap_or(AdcConfig { bits: spec.act_bits, ..AdcConfig::default() });
    if let Some(fs) = a.full_scale {
        adc.full_scale = fs;
    }
    adc.validate()?;
    if adc.bits != spec.act_bits {
        bail!(p2m_core::Error::Config(format!("ADC has {} bits but the layer expects {}", adc.bits, spec.act_bits)));
    }

    let (h, w, _) = image.dims();
    let geometry = spec.geometry(h, w);
    let constraints = validate_constraints(&geometry, DEFAULT_CHANNEL_BUDGET);
    let folded = spec.compile(adc.full_scale)?;
    let normalize = tf.kind() == TransferKind::PolynomialSurrogate;
    let dep = deploy(&folded, geometry, adc, normalize)?;
    let codes = dep.simulate(&tf, &image)?;

    let total = codes.codes.len() as u64;
    let per_col = conversions_per_column(total, codes.width);
    let t_adc = conversion_time(&AdcConfig { columns_parallel: codes.width, ..adc }, per_col)?;
    let max_code = adc.max_code() as u32;
    let stats = CodeStats {
        min: codes.codes.iter().copied().min().unwrap_or(0),
        max: codes.codes.iter().copied().max().unwrap_or(0),
        mean: codes.codes.iter().map(|&c| c as f64).sum::<f64>() / total.max(1) as f64,
        saturated_fraction: codes.codes.iter().filter(|&&c| c == max_code).count() as f64 / total.max(1) as f64,
    };

    let out = OutDir::create(&a.out)?;
    let path = out.write("activations.p2mt", &codes.to_raw().to_bytes()?, &mut m)?;
    println!("{}x{}x{} input -> {}x{}x{} codes at {} bits", h, w, image.channels(), codes.height, codes.width, codes.channels, codes.bits);
    println!("ADC: {per_col} conversions per column, {:.6} ms", t_adc * 1e3);
    for v in &constraints.violations {
        println!("warning: {v}");
    }
    println!("wrote {}", path.display());

    #[derive(Serialize)]
    struct Summary {
        manifest: Manifest,
        transfer: TransferKind,
        output_dims: [usize; 3],
        bits: u32,
        weight_scale: f64,
        shift_codes: Vec<i64>,
        violations: Vec<String>,
        timing: Timing,
        codes: CodeStats,
    }
    out.finish(
        "simulate.toml",
        &Summary {
            manifest: m,
            transfer: tf.kind(),
            output_dims: [codes.height, codes.width, codes.channels],
            bits: codes.bits,
            weight_scale: dep.weight_scale,
            shift_codes: dep.shift_codes.clone(),
            violations: constraints.violations.iter().map(ToString::to_string).collect(),
            timing: Timing { columns_parallel: codes.width, conversions_per_column: per_col, t_adc_ms: t_adc * 1e3 },
            codes: stats,
        },
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------

pub struct AnalyzeArgs {
    pub arch: Vec<PathBuf>,
    pub constants: Option<PathBuf>,
    pub mode: DelayMode,
    pub bits: u32,
    pub out: Option<PathBuf>,
}

fn normalized_csv(r: &AnalysisReport) -> String {
    let mut s = String::from("model,energy_total,energy_sensing,energy_com,energy_soc,delay_total,delay_sensing,delay_soc\n");
    for n in &r.normalized {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            n.model, n.energy_total, n.energy_sensing, n.energy_com, n.energy_soc, n.delay_total, n.delay_sensing, n.delay_soc
        );
    }
    s
}

fn print_analysis(r: &AnalysisReport, mode: DelayMode) {
    let label = match mode {
        DelayMode::Sequential => "sequential",
        DelayMode::Conservative => "conservative",
    };
    println!("{:<16} {:>12} {:>12} {:>14}", "model", "energy (uJ)", "delay (ms)", "EDP (uJ*ms)");
    for row in &r.rows {
        let c = &row.cost;
        println!(
            "{:<16} {:>12.2} {:>12.3} {:>14.1}",
            row.name,
            c.energy.e_tot * 1e6,
            c.delay(mode) * 1e3,
            c.edp(mode) * 1e9
        );
    }
    if let Some(p) = &r.p2m {
        println!();
        println!("ratios against {p} ({label} delay):");
        for x in &r.ratios {
            let (d, e) = match mode {
                DelayMode::Sequential => (x.delay_sequential, x.edp_sequential),
                DelayMode::Conservative => (x.delay_conservative, x.edp_conservative),
            };
            println!("  {:<14} energy {:>6.2}x  delay {:>5.2}x  EDP {:>6.2}x", x.baseline, x.energy, d, e);
        }
    }
    if let Some(b) = &r.bandwidth {
        println!();
        println!("bandwidth reduction {:.6} ({:.4}x compression)", b.value, b.compression_factor());
    }
    let flagged: Vec<_> = r.checks.iter().filter(|c| c.flagged).collect();
    if !flagged.is_empty() {
        println!();
        println!("differences from reference figures:");
        for c in flagged {
            println!("  {:<28} {:>14.4} vs {:<10} ({:+.1}%)", c.quantity, c.computed, c.reference, c.rel_diff * 100.0);
            if let Some(n) = &c.note {
                println!("    {n}");
            }
        }
    }
}

pub fn analyze_cmd(inputs: &Inputs, a: &AnalyzeArgs) -> Result<()> {
    let mut m = Manifest::new("analyze");
    let consts = inputs.constants(a.constants.as_deref(), &mut m)?;
    let archs = inputs.archs(&a.arch, &mut m)?;
    let report = analyze(&archs, &consts, a.bits)?;
    print_analysis(&report, a.mode);
    if let Some(dir) = &a.out {
        let out = OutDir::create(dir)?;
        out.write("analysis.csv", report.to_csv().as_bytes(), &mut m)?;
        out.write("normalized.csv", normalized_csv(&report).as_bytes(), &mut m)?;
        #[derive(Serialize)]
        struct Summary<'a> {
            manifest: Manifest,
            mode: DelayMode,
            report: &'a AnalysisReport,
        }
        let path = out.finish("analysis.toml", &Summary { manifest: m, mode: a.mode, report: &report })?;
        println!();
        println!("wrote {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------

pub struct SweepArgs {
    pub grid: PathBuf,
    pub arch: Option<PathBuf>,
    pub constants: Option<PathBuf>,
    pub out: PathBuf,
}

fn load_grid(path: &Path, m: &mut Manifest) -> Result<GridSpec> {
    let text = read_text(path)?;
    m.input(path.display().to_string(), text.as_bytes());
    GridSpec::parse(&text).with_context(|| format!("in {}", path.display()))
}

pub fn sweep(inputs: &Inputs, a: &SweepArgs) -> Result<()> {
    let mut m = Manifest::new("sweep");
    let grid = load_grid(&a.grid, &mut m)?;
    let consts = inputs.constants(a.constants.as_deref(), &mut m)?;
    let downstream = a.arch.as_deref().map(|p| inputs.arch(p, &mut m)).transpose()?;
    let rows = run_sweep(&grid, &consts, downstream.as_ref());
    let out = OutDir::create(&a.out)?;
    let path = out.write("sweep.csv", rows_to_csv(&rows).as_bytes(), &mut m)?;
    let feasible = rows.iter().filter(|r| r.feasible()).count();
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} grid points: {feasible} feasible, {failed} with errors", rows.len());
    println!("wrote {}", path.display());
    #[derive(Serialize)]
    struct Summary {
        manifest: Manifest,
        points: usize,
        feasible: usize,
        errors: usize,
    }
    out.finish("sweep.toml", &Summary { manifest: m, points: rows.len(), feasible, errors: failed })?;
    Ok(())
}

// ---------------------------------------------------------------------------

pub struct VerifyArgs {
    pub seed: u64,
    pub instances: usize,
    pub max_side: usize,
    pub max_out_channels: usize,
    pub counter_cases: u64,
    pub corrupt_sign: bool,
    pub out: Option<PathBuf>,
}

/// Plain-data dump of an instance so a failure can be replayed.
#[derive(Serialize)]
struct InstanceDump {
    image_dims: [usize; 3],
    image: Vec<f64>,
    kernel: usize,
    stride: usize,
    in_channels: usize,
    out_channels: usize,
    weights: Vec<f64>,
    bn: p2m_core::codesign::BnParams,
    adc: AdcConfig,
}

impl From<&Instance> for InstanceDump {
    fn from(i: &Instance) -> Self {
        let (h, w, c) = i.image.dims();
        InstanceDump {
            image_dims: [h, w, c],
            image: i.image.data().to_vec(),
            kernel: i.weights.kernel,
            stride: i.stride(),
            in_channels: i.weights.in_channels,
            out_channels: i.weights.out_channels,
            weights: i.weights.data.clone(),
            bn: i.bn.clone(),
            adc: i.adc,
        }
    }
}

#[derive(Serialize)]
struct OracleFailure {
    instance_index: usize,
    original: String,
    mismatch: Mismatch,
    minimal: InstanceDump,
}

#[derive(Serialize)]
struct CounterResult {
    bits: u32,
    cases: u64,
    exhaustive: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    mismatch: Option<CounterMismatch>,
}

pub fn verify(a: &VerifyArgs) -> Result<()> {
    let mut m = Manifest::new("verify");
    m.seed = Some(a.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let limits = InstanceLimits { max_side: a.max_side, max_out_channels: a.max_out_channels, ..InstanceLimits::default() };
    if a.max_side < 1 || a.max_out_channels < 1 {
        bail!(p2m_core::Error::Config("instance sizes must be at least 1".into()));
    }

    let mut failure = None;
    let mut checked = 0;
    for idx in 0..a.instances {
        let inst = random_instance(&mut rng, &limits);
        checked += 1;
        if let Some(mm) = check_instance(&inst, a.corrupt_sign)? {
            let (small, sm) = shrink(&inst, &mm, a.corrupt_sign);
            failure = Some(OracleFailure { instance_index: idx, original: inst.describe(), mismatch: sm, minimal: (&small).into() });
            break;
        }
    }
    match &failure {
        None => println!("oracle equivalence: {checked} instances, all codes equal"),
        Some(f) => {
            println!("oracle equivalence: FAILED at instance {} ({})", f.instance_index, f.original);
            let mm = &f.mismatch;
            println!(
                "  minimal instance: {}x{}x{} image, 1 channel; position ({}, {}) pipeline code {} vs oracle {}",
                f.minimal.image_dims[0], f.minimal.image_dims[1], f.minimal.image_dims[2], mm.y, mm.x, mm.pipeline, mm.oracle
            );
        }
    }

    let mut counters = Vec::new();
    for bits in 1..=4 {
        let (cases, mismatch) = exhaustive_counter_check(&AdcConfig { bits, ..AdcConfig::default() })?;
        counters.push(CounterResult { bits, cases, exhaustive: true, mismatch });
    }
    let cfg8 = AdcConfig::default();
    let mismatch = random_counter_check(&mut rng, &cfg8, a.counter_cases)?;
    counters.push(CounterResult { bits: cfg8.bits, cases: a.counter_cases, exhaustive: false, mismatch });
    for c in &counters {
        let kind = if c.exhaustive { "exhaustive" } else { "random" };
        match &c.mismatch {
            None => println!("counter vs closed form, {}-bit {kind}: {} cases agree", c.bits, c.cases),
            Some(x) => println!("counter vs closed form, {}-bit {kind}: FAILED {x:?}", c.bits),
        }
    }

    let passed = failure.is_none() && counters.iter().all(|c| c.mismatch.is_none());
    if let Some(dir) = &a.out {
        let out = OutDir::create(dir)?;
        #[derive(Serialize)]
        struct Summary {
            manifest: Manifest,
            passed: bool,
            instances: usize,
            counters: Vec<CounterResult>,
            #[serde(skip_serializing_if = "Option::is_none")]
            oracle_failure: Option<OracleFailure>,
        }
        out.finish("verify.toml", &Summary { manifest: m, passed, instances: checked, counters, oracle_failure: failure })?;
    }
    println!("{}", if passed { "PASS" } else { "FAIL" });
    if passed {
        Ok(())
    } else {
        Err(VerifyFailed.into())
    }
}

// ---------------------------------------------------------------------------

pub struct PlotArgs {
    pub arch: Vec<PathBuf>,
    pub constants: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub bits: u32,
    pub out: PathBuf,
}

fn breakdown_long(r: &AnalysisReport) -> String {
    let mut s = String::from("model,quantity,component,value\n");
    for n in &r.normalized {
        for (q, comp, v) in [
            ("energy", "total", n.energy_total),
            ("energy", "sensing", n.energy_sensing),
            ("energy", "communication", n.energy_com),
            ("energy", "soc", n.energy_soc),
            ("delay", "total", n.delay_total),
            ("delay", "sensing", n.delay_sensing),
            ("delay", "soc", n.delay_soc),
        ] {
            let _ = writeln!(s, "{},{q},{comp},{v}", n.model);
        }
    }
    s
}

fn sweep_long(rows: &[SweepRow]) -> String {
    let mut s = String::from("point,image,kernel,stride,padding,channels,bits,metric,value\n");
    for (i, r) in rows.iter().enumerate() {
        let p = &r.point;
        let metrics = [
            ("br", r.br),
            ("compression", r.compression),
            ("e_tot_uj", r.e_tot.map(|v| v * 1e6)),
            ("t_adc_ms", r.t_adc.map(|v| v * 1e3)),
            ("t_seq_ms", r.t_seq.map(|v| v * 1e3)),
            ("t_cons_ms", r.t_cons.map(|v| v * 1e3)),
            ("edp_seq_uj_ms", r.edp_seq.map(|v| v * 1e9)),
            ("edp_cons_uj_ms", r.edp_cons.map(|v| v * 1e9)),
        ];
        for (name, v) in metrics {
            if let Some(v) = v {
                let _ = writeln!(s, "{i},{},{},{},{},{},{},{name},{v}", p.image, p.kernel, p.stride, p.padding, p.channels, p.bits);
            }
        }
    }
    s
}

pub fn plot_data(inputs: &Inputs, a: &PlotArgs) -> Result<()> {
    let mut m = Manifest::new("plot-data");
    let consts = inputs.constants(a.constants.as_deref(), &mut m)?;
    let archs = inputs.archs(&a.arch, &mut m)?;
    let report = analyze(&archs, &consts, a.bits)?;
    let out = OutDir::create(&a.out)?;
    let p = out.write("breakdown_long.csv", breakdown_long(&report).as_bytes(), &mut m)?;
    println!("wrote {}", p.display());
    if let Some(g) = &a.grid {
        let grid = load_grid(g, &mut m)?;
        let rows = run_sweep(&grid, &consts, None);
        let p = out.write("sweep_long.csv", sweep_long(&rows).as_bytes(), &mut m)?;
        println!("wrote {}", p.display());
    }
    #[derive(Serialize)]
    struct Summary {
        manifest: Manifest,
    }
    out.finish("plot-data.toml", &Summary { manifest: m })?;
    Ok(())
}
