use p2m_core::pixel_model::{
    fit_surrogate, fit_surrogate_with, parse_samples_csv, parse_surrogate, samples_to_csv, surrogate_to_toml, FitOptions,
    FitSample,
};
use p2m_core::Error;
use proptest::prelude::*;

fn grid(f: impl Fn(f64, f64) -> f64, n: usize) -> Vec<FitSample> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            let (w, i) = (a as f64 / (n - 1) as f64, b as f64 / (n - 1) as f64);
            out.push(FitSample { w_norm: w, i_norm: i, v_out: f(w, i) });
        }
    }
    out
}

fn poly(c: &[Vec<f64>], w: f64, i: f64) -> f64 {
    c.iter().enumerate().map(|(m, row)| row.iter().enumerate().map(|(n, k)| k * w.powi(m as i32) * i.powi(n as i32)).sum::<f64>()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Non-negative coefficients keep the surface monotone on the unit square.
    #[test]
    fn in_class_function_is_recovered(dw in 1usize..=3, di in 1usize..=3, seed in prop::collection::vec(0.0f64..2.0, 16)) {
        let coeffs: Vec<Vec<f64>> = (0..=dw).map(|m| (0..=di).map(|n| seed[m * 4 + n]).collect()).collect();
        let samples = grid(|w, i| poly(&coeffs, w, i), 9);
        let tf = fit_surrogate(&samples, dw, di).unwrap();
        let d = tf.diagnostics().unwrap();
        prop_assert!(d.residual_rms < 1e-9, "rms {}", d.residual_rms);
        prop_assert!(d.monotone);
        prop_assert!(tf.check_monotone().is_ok());
        for (got, want) in tf.coeffs().iter().flatten().zip(coeffs.iter().flatten()) {
            prop_assert!((got - want).abs() < 1e-8);
        }
    }
}

#[test]
fn bilinear_product_is_exact() {
    let tf = fit_surrogate(&grid(|w, i| w * i, 5), 1, 1).unwrap();
    assert!(tf.diagnostics().unwrap().residual_rms < 1e-12);
    assert!((tf.evaluate(0.5, 0.4).unwrap() - 0.2).abs() < 1e-12);
}

#[test]
fn decreasing_data_fails_monotonicity_unless_allowed() {
    let samples = grid(|w, i| w * i - 0.8 * w * w, 9);
    assert!(matches!(fit_surrogate(&samples, 2, 1), Err(Error::Monotonicity(_))));
    let tf = fit_surrogate_with(&samples, FitOptions { degree_w: 2, degree_i: 1, allow_non_monotone: true }).unwrap();
    let d = tf.diagnostics().unwrap();
    assert!(!d.monotone && !d.warnings.is_empty());
}

#[test]
fn too_few_samples_is_rank_error() {
    let samples = grid(|w, i| w * i, 2);
    assert!(matches!(fit_surrogate(&samples, 3, 3), Err(Error::Rank { .. })));
}

#[test]
fn csv_and_surrogate_round_trip() {
    let samples = grid(|w, i| 0.9 * w * i + 0.05 * w, 7);
    assert_eq!(parse_samples_csv(&samples_to_csv(&samples)).unwrap(), samples);
    let tf = fit_surrogate(&samples, 2, 2).unwrap();
    assert_eq!(parse_surrogate(&surrogate_to_toml(&tf, false, None)).unwrap(), tf);
}
