use p2m_core::analysis::analyze;
use p2m_core::metrics::{
    bandwidth_reduction, cost_from_counts, energy_total, total_delay, ConstantsFile, DelayMode, SensorKind,
};
use p2m_core::netmodel::{bundled_archs, parse_arch, P2M_CUSTOM_ARCH};
use p2m_core::sweep::{run_sweep, GridSpec};
use proptest::prelude::*;

#[test]
fn bandwidth_falls_with_output_bits() {
    let brs: Vec<f64> = [4, 6, 8, 16, 32].iter().map(|&n| bandwidth_reduction(560, 5, 0, 5, 8, n).unwrap().value).collect();
    assert!(brs.windows(2).all(|w| w[0] > w[1]), "{brs:?}");
}

#[test]
fn sweep_bits_column_is_monotone() {
    let g = GridSpec::parse("schema_version = 1\nimage = [560]\nkernel = [5]\nchannels = [8]\nbits = [4, 6, 8, 16, 32]\n").unwrap();
    let rows = run_sweep(&g, &ConstantsFile::bundled(), None);
    let brs: Vec<f64> = rows.iter().map(|r| r.br.unwrap()).collect();
    assert!(brs.windows(2).all(|w| w[0] > w[1]), "{brs:?}");
}

#[test]
fn kernel_channel_grid_has_nine_rows_and_adc_time_grows_with_channels() {
    let g = GridSpec::parse("schema_version = 1\nimage = [105]\nkernel = [3, 5, 7]\nchannels = [4, 8, 16]\nbits = [8]\n").unwrap();
    let rows = run_sweep(&g, &ConstantsFile::bundled(), None);
    assert_eq!(rows.len(), 9);
    for chunk in rows.chunks(3) {
        let t: Vec<f64> = chunk.iter().map(|r| r.t_adc.unwrap()).collect();
        assert!(t[0] < t[1] && t[1] < t[2], "{t:?}");
    }
}

#[test]
fn one_point_sweep_equals_analysis() {
    let consts = ConstantsFile::bundled();
    let arch = parse_arch(P2M_CUSTOM_ARCH).unwrap();
    let g = GridSpec::parse("schema_version = 1\nimage = [560]\nkernel = [5]\nchannels = [8]\nbits = [8]\nt_adc = \"constants\"\n").unwrap();
    let row = &run_sweep(&g, &consts, Some(&arch))[0];
    let report = analyze(&bundled_archs(), &consts, 8).unwrap();
    let p = &report.row("p2m-custom").unwrap().cost;
    assert_eq!(row.e_tot.unwrap(), p.energy.e_tot);
    assert_eq!(row.t_seq.unwrap(), p.t_delay_sequential);
    assert_eq!(row.edp_cons.unwrap(), p.edp_conservative);
    assert_eq!(row.n_mac.unwrap(), p.n_mac);
}

#[test]
fn sweep_order_is_grid_order() {
    let g = GridSpec::parse("schema_version = 1\nimage = [60, 120]\nkernel = [2, 3, 4, 5]\nchannels = [1, 2, 4, 8, 16]\nbits = [4, 8]\n").unwrap();
    let rows = run_sweep(&g, &ConstantsFile::bundled(), None);
    let pts: Vec<_> = rows.iter().map(|r| r.point).collect();
    assert_eq!(pts, g.points());
}

proptest! {
    #[test]
    fn bandwidth_grows_with_channels(c in 1usize..64, n in 1u32..=32) {
        let a = bandwidth_reduction(100, 5, 0, 5, c, n).unwrap().value;
        let b = bandwidth_reduction(100, 5, 0, 5, c + 1, n).unwrap().value;
        prop_assert!(b > a);
    }

    #[test]
    fn energy_is_linear_in_counts(p1 in 0u64..1_000_000, p2 in 0u64..1_000_000, m1 in 0u64..1u64 << 32, m2 in 0u64..1u64 << 32, r in 0u64..1000) {
        let c = ConstantsFile::bundled().hw(SensorKind::Baseline);
        let a = energy_total(&c, p1, m1, r);
        let b = energy_total(&c, p2, m2, r);
        let s = energy_total(&c, p1 + p2, m1 + m2, 2 * r);
        prop_assert!((s.e_tot - a.e_tot - b.e_tot).abs() <= 1e-12 * s.e_tot.max(1e-30));
    }

    #[test]
    fn sequential_never_beats_conservative(n_mac in 0u64..1u64 << 34, t_conv in 0.0f64..1.0) {
        let c = ConstantsFile::bundled().hw(SensorKind::P2m);
        let r = cost_from_counts(&c, 1000, n_mac, 0, t_conv);
        prop_assert!(r.t_delay_sequential >= r.t_delay_conservative);
        prop_assert!(r.edp_sequential >= r.edp_conservative);
    }
}

#[test]
fn bundled_models_sequential_at_least_conservative() {
    let consts = ConstantsFile::bundled();
    for arch in bundled_archs() {
        let hw = consts.hw(p2m_core::analysis::sensor_kind(&arch));
        assert!(total_delay(&hw, &arch, DelayMode::Sequential) >= total_delay(&hw, &arch, DelayMode::Conservative));
    }
}
