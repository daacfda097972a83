use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use p2m_core::adc_cds::AdcConfig;
use p2m_core::codesign::parse_layer;
use p2m_core::reference_oracle::oracle_forward;
use p2m_core::tensor::{encode_pnm, RawTensor, Tensor3};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> PathBuf {
    repo_root().join("configs").join(name)
}

fn p2m(dir: &Path, args: &[&str]) -> Output {
    p2m_env(dir, args, &[])
}

fn p2m_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_p2m"));
    cmd.current_dir(dir).args(args).env_remove("P2M_CONFIG_DIR").env("SOURCE_DATE_EPOCH", "1700000000");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_ppm(path: &Path, h: usize, w: usize) -> Tensor3 {
    let img = Tensor3::from_fn(h, w, 3, |y, x, c| ((y * 7 + x * 13 + c * 29) % 256) as f64 / 255.0);
    std::fs::write(path, encode_pnm(&img, 255).unwrap()).unwrap();
    img
}

fn grid_samples(n: usize) -> String {
    let mut s = String::from("w_norm,i_norm,v_out\n");
    for a in 0..n {
        for b in 0..n {
            let (w, i) = (a as f64 / (n - 1) as f64, b as f64 / (n - 1) as f64);
            s.push_str(&format!("{w},{i},{}\n", 0.9 * w * i + 0.05 * w * w * i));
        }
    }
    s
}

#[test]
fn fit_writes_surrogate() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.csv"), grid_samples(9)).unwrap();
    let o = p2m(dir.path(), &["fit", "--samples", "s.csv", "--degree-w", "2", "--degree-i", "1", "--out", "fit"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("fit/surrogate.toml")).unwrap();
    assert!(text.contains("schema_version = 1"));
    assert!(dir.path().join("fit/fit.toml").is_file());
}

#[test]
fn fit_malformed_row_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.csv"), "w_norm,i_norm,v_out\n0,0,0\n0.5,oops,0.1\n").unwrap();
    let o = p2m(dir.path(), &["fit", "--samples", "s.csv"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn fit_underdetermined_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.csv"), grid_samples(2)).unwrap();
    let o = p2m(dir.path(), &["fit", "--samples", "s.csv", "--degree-w", "3", "--degree-i", "3"]);
    assert_eq!(o.status.code(), Some(6), "{}", stderr(&o));
}

#[test]
fn missing_file_is_io_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = p2m(dir.path(), &["fit", "--samples", "nope.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_full_resolution_layer() {
    let dir = tempfile::tempdir().unwrap();
    write_ppm(&dir.path().join("img.ppm"), 560, 560);
    let layer = config("layer_5x5_s5_c8.toml");
    let o = p2m(
        dir.path(),
        &["simulate", "--image", "img.ppm", "--layer", layer.to_str().unwrap(), "--surrogate", "bundled", "--full-scale", "8", "--out", "sim"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let raw = RawTensor::from_bytes(&std::fs::read(dir.path().join("sim/activations.p2mt")).unwrap()).unwrap();
    assert_eq!(raw.dims, vec![112, 112, 8]);
    let summary = std::fs::read_to_string(dir.path().join("sim/simulate.toml")).unwrap();
    assert!(summary.contains("conversions_per_column = 896"), "{summary}");
}

#[test]
fn simulate_single_position() {
    let dir = tempfile::tempdir().unwrap();
    write_ppm(&dir.path().join("img.ppm"), 5, 5);
    let layer = config("layer_5x5_s5_c8.toml");
    let o = p2m(dir.path(), &["simulate", "--image", "img.ppm", "--layer", layer.to_str().unwrap(), "--out", "sim"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let raw = RawTensor::from_bytes(&std::fs::read(dir.path().join("sim/activations.p2mt")).unwrap()).unwrap();
    assert_eq!(raw.dims, vec![1, 1, 8]);
}

#[test]
fn simulate_ideal_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let img = write_ppm(&dir.path().join("img.ppm"), 10, 15);
    // Unquantized weights so the oracle sees the same values.
    let text = std::fs::read_to_string(config("layer_5x5_s5_c8.toml")).unwrap().replace("weight_bits = 8\n", "");
    std::fs::write(dir.path().join("layer.toml"), &text).unwrap();
    let o = p2m(dir.path(), &["simulate", "--image", "img.ppm", "--layer", "layer.toml", "--full-scale", "6", "--out", "sim"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let raw = RawTensor::from_bytes(&std::fs::read(dir.path().join("sim/activations.p2mt")).unwrap()).unwrap();
    let spec = parse_layer(&text, None).unwrap();
    let adc = AdcConfig { full_scale: 6.0, ..AdcConfig::default() };
    let want = oracle_forward(&img, &spec.weights, 5, 0, &spec.bn, &adc).unwrap().codes;
    let got: Vec<u32> = raw.data.iter().map(|&v| v as u32).collect();
    assert_eq!(got, want);
}

#[test]
fn simulate_overlapping_stride_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_ppm(&dir.path().join("img.ppm"), 21, 21);
    let text = std::fs::read_to_string(config("layer_5x5_s5_c8.toml")).unwrap().replace("stride = 5", "stride = 4");
    std::fs::write(dir.path().join("layer.toml"), text).unwrap();
    let o = p2m(dir.path(), &["simulate", "--image", "img.ppm", "--layer", "layer.toml"]);
    assert!(!o.status.success());
}

#[test]
fn analyze_bundled_models() {
    let dir = tempfile::tempdir().unwrap();
    let o = p2m(dir.path(), &["analyze", "--out", "a"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("baseline-nc") && out.contains("21x"), "{out}");
    let csv = std::fs::read_to_string(dir.path().join("a/analysis.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let norm = std::fs::read_to_string(dir.path().join("a/normalized.csv")).unwrap();
    assert!(norm.starts_with("model,energy_total,energy_sensing"));
}

#[test]
fn analyze_zero_layer_arch() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bare.toml"), "schema_version = 1\nname = \"bare\"\ninput = [560, 560, 3]\n").unwrap();
    let o = p2m(dir.path(), &["analyze", "--arch", "bare.toml", "--out", "a"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("a/analysis.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    // n_mac, e_mac_uj and t_conv_ms are zero.
    assert_eq!((row[3], row[8], row[12]), ("0", "0", "0"));
}

#[test]
fn analyze_bad_arch_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = "schema_version = 1\nname = \"x\"\ninput = [8, 8, 3]\nlayer = [\n  { kind = \"conv\", k = 3, s = 2, c_out = 4 },\n]\n";
    std::fs::write(dir.path().join("bad.toml"), text).unwrap();
    let o = p2m(dir.path(), &["analyze", "--arch", "bad.toml"]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));
}

#[test]
fn analyze_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    assert!(p2m(dir.path(), &["analyze", "--out", "a"]).status.success());
    let first = std::fs::read(dir.path().join("a/analysis.toml")).unwrap();
    assert!(p2m(dir.path(), &["analyze", "--out", "a"]).status.success());
    assert_eq!(first, std::fs::read(dir.path().join("a/analysis.toml")).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.contains("timestamp = \"2023-11-14T22:13:20Z\""), "{text}");
}

#[test]
fn config_dir_supplies_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg");
    std::fs::create_dir(&cfg).unwrap();
    let text = p2m_core::metrics::DEFAULT_CONSTANTS.replace("e_com_pj = 900.0", "e_com_pj = 0.0001");
    std::fs::write(cfg.join("constants.toml"), text).unwrap();
    let o = p2m_env(dir.path(), &["analyze", "--out", "a"], &[("P2M_CONFIG_DIR", cfg.to_str().unwrap())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("a/analysis.toml")).unwrap();
    assert!(report.contains("cfg/constants.toml"), "{report}");
    assert!(!report.contains("bundled:constants.toml"));
}

#[test]
fn invalid_constants_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = p2m_core::metrics::DEFAULT_CONSTANTS.replace("t_mult_ns = 5.48", "t_mult_ns = -1.0");
    std::fs::write(dir.path().join("c.toml"), text).unwrap();
    let o = p2m(dir.path(), &["analyze", "--constants", "c.toml"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn sweep_nine_point_grid() {
    let dir = tempfile::tempdir().unwrap();
    let grid = config("grid_kernel_channels.toml");
    let o = p2m(dir.path(), &["sweep", "--grid", grid.to_str().unwrap(), "--out", "s"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
    assert!(dir.path().join("s/sweep.toml").is_file());
}

#[test]
fn sweep_bits_grid_has_monotone_br() {
    let dir = tempfile::tempdir().unwrap();
    let grid = config("grid_bits.toml");
    assert!(p2m(dir.path(), &["sweep", "--grid", grid.to_str().unwrap(), "--out", "s"]).status.success());
    let csv = std::fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "br").unwrap();
    let brs: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert_eq!(brs.len(), 5);
    assert!(brs.windows(2).all(|w| w[0] > w[1]), "{brs:?}");
}

#[test]
fn sweep_rejects_bad_grid() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.toml"), "schema_version = 1\nimage = [560]\n").unwrap();
    let o = p2m(dir.path(), &["sweep", "--grid", "g.toml"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn verify_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = p2m(dir.path(), &["verify", "--instances", "200", "--counter-cases", "2000", "--out", "v"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let report = std::fs::read_to_string(dir.path().join("v/verify.toml")).unwrap();
    assert!(report.contains("passed = true"));
    assert!(report.contains("seed = 0"));
}

#[test]
fn verify_catches_corrupted_sign() {
    let dir = tempfile::tempdir().unwrap();
    let o = p2m(dir.path(), &["verify", "--corrupt-sign", "--counter-cases", "10", "--out", "v"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("minimal instance") && out.contains("FAIL"), "{out}");
    let report = std::fs::read_to_string(dir.path().join("v/verify.toml")).unwrap();
    assert!(report.contains("[oracle_failure.minimal]"), "{report}");
}

#[test]
fn plot_data_long_tables() {
    let dir = tempfile::tempdir().unwrap();
    let grid = config("grid_kernel_channels.toml");
    let o = p2m(dir.path(), &["plot-data", "--grid", grid.to_str().unwrap(), "--out", "p"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let long = std::fs::read_to_string(dir.path().join("p/breakdown_long.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 3 * 7);
    let sweep = std::fs::read_to_string(dir.path().join("p/sweep_long.csv")).unwrap();
    assert!(sweep.lines().count() > 9);
}

#[test]
fn mode_flag_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let o = p2m(dir.path(), &["analyze", "--mode", "fastest"]);
    assert_eq!(o.status.code(), Some(2));
}
