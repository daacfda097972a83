//! Single-pixel transfer functions.
//!
//! A pixel multiplies its incident light (normalized photodiode current `i`)
//! by the driving strength of an embedded weight transistor (normalized
//! weight `w`). The circuit does not compute an exact product, so the
//! simulator carries a [`TransferFunction`] that is either the ideal product
//! or a polynomial surrogate fitted to measured or simulated samples.
//!
//! Surrogates are tensor-product polynomials `sum c[m][n] * w^m * i^n` fitted
//! by least squares through an SVD of the design matrix.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of the grid used for the monotonicity check.
pub const MONOTONE_GRID: usize = 64;
/// Allowed decrease per grid step, as a fraction of the output range.
pub const MONOTONE_EPS_REL: f64 = 1e-6;

const SURROGATE_SCHEMA_VERSION: u32 = 1;

/// Closed rectangle `[w_min, w_max] x [i_min, i_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub w_min: f64,
    pub w_max: f64,
    pub i_min: f64,
    pub i_max: f64,
}

impl Domain {
    pub const UNIT: Domain = Domain { w_min: 0.0, w_max: 1.0, i_min: 0.0, i_max: 1.0 };

    pub fn contains(&self, w: f64, i: f64) -> bool {
        w >= self.w_min && w <= self.w_max && i >= self.i_min && i <= self.i_max
    }

    fn bounding(samples: &[FitSample]) -> Domain {
        let mut d = Domain {
            w_min: f64::INFINITY,
            w_max: f64::NEG_INFINITY,
            i_min: f64::INFINITY,
            i_max: f64::NEG_INFINITY,
        };
        for s in samples {
            d.w_min = d.w_min.min(s.w_norm);
            d.w_max = d.w_max.max(s.w_norm);
            d.i_min = d.i_min.min(s.i_norm);
            d.i_max = d.i_max.max(s.i_norm);
        }
        d
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}] x [{}, {}]", self.w_min, self.w_max, self.i_min, self.i_max)
    }
}

/// One measurement of pixel output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSample {
    pub w_norm: f64,
    pub i_norm: f64,
    pub v_out: f64,
}

/// Quality figures recorded when a surrogate is fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDiagnostics {
    pub samples: usize,
    pub residual_rms: f64,
    pub r_squared: f64,
    pub monotone: bool,
    /// Largest `|v(w, 0)|` over the check grid when `i = 0` is in the domain.
    pub zero_light_output: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferKind {
    Ideal,
    PolynomialSurrogate,
}

/// Pixel output as a function of normalized weight and light intensity.
///
/// Immutable once built; share freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    kind: TransferKind,
    /// `coeffs[m][n]` multiplies `w^m * i^n`.
    coeffs: Vec<Vec<f64>>,
    domain: Option<Domain>,
    diagnostics: Option<FitDiagnostics>,
    synthetic: bool,
}

impl TransferFunction {
    pub fn ideal() -> Self {
        TransferFunction {
            kind: TransferKind::Ideal,
            coeffs: Vec::new(),
            domain: None,
            diagnostics: None,
            synthetic: false,
        }
    }

    /// Builds a surrogate directly from a coefficient matrix.
    pub fn polynomial(coeffs: Vec<Vec<f64>>, domain: Domain) -> Result<Self> {
        let tf = TransferFunction {
            kind: TransferKind::PolynomialSurrogate,
            coeffs,
            domain: Some(domain),
            diagnostics: None,
            synthetic: false,
        };
        tf.check_coeffs()?;
        Ok(tf)
    }

    pub fn kind(&self) -> TransferKind {
        self.kind
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    pub fn domain(&self) -> Option<Domain> {
        self.domain
    }

    pub fn diagnostics(&self) -> Option<&FitDiagnostics> {
        self.diagnostics.as_ref()
    }

    pub fn is_synthetic(&self) -> bool {
        self.synthetic
    }

    /// `(degree_w, degree_i)`, or `None` for the ideal product.
    pub fn degrees(&self) -> Option<(usize, usize)> {
        match self.kind {
            TransferKind::Ideal => None,
            TransferKind::PolynomialSurrogate => {
                Some((self.coeffs.len().saturating_sub(1), self.coeffs.first().map_or(0, |r| r.len().saturating_sub(1))))
            }
        }
    }

    fn check_coeffs(&self) -> Result<()> {
        if self.kind == TransferKind::Ideal {
            return Ok(());
        }
        let cols = self.coeffs.first().map_or(0, Vec::len);
        if cols == 0 {
            return Err(Error::Model("surrogate has no coefficients".into()));
        }
        if self.coeffs.iter().any(|r| r.len() != cols) {
            return Err(Error::Model("coefficient matrix is ragged".into()));
        }
        if self.coeffs.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Model("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Modeled pixel output for weight `w` and light `i`.
    pub fn evaluate(&self, w: f64, i: f64) -> Result<f64> {
        match self.kind {
            TransferKind::Ideal => Ok(w * i),
            TransferKind::PolynomialSurrogate => {
                if self.coeffs.first().is_none_or(Vec::is_empty) {
                    return Err(Error::Model("surrogate has no coefficients".into()));
                }
                let domain = self.domain.unwrap_or(Domain::UNIT);
                if !domain.contains(w, i) {
                    return Err(Error::Domain { w, i, domain: domain.to_string() });
                }
                Ok(self.eval_unchecked(w, i))
            }
        }
    }

    fn eval_unchecked(&self, w: f64, i: f64) -> f64 {
        // Horner in w over rows, each row Horner in i.
        self.coeffs.iter().rev().fold(0.0, |acc, row| {
            let r = row.iter().rev().fold(0.0, |a, &c| a * i + c);
            acc * w + r
        })
    }

    /// Largest output over the domain grid; used to calibrate ADC full scale.
    pub fn max_output(&self) -> f64 {
        match self.kind {
            TransferKind::Ideal => 1.0,
            TransferKind::PolynomialSurrogate => {
                let d = self.domain.unwrap_or(Domain::UNIT);
                grid_points(&d, MONOTONE_GRID)
                    .map(|(w, i)| self.eval_unchecked(w, i))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    /// Checks that the surface is non-decreasing along both axes on a
    /// `MONOTONE_GRID x MONOTONE_GRID` grid. Returns the first violation.
    pub fn check_monotone(&self) -> std::result::Result<(), String> {
        if self.kind == TransferKind::Ideal {
            return Ok(());
        }
        let d = self.domain.unwrap_or(Domain::UNIT);
        let n = MONOTONE_GRID;
        let ws = axis(d.w_min, d.w_max, n);
        let is = axis(d.i_min, d.i_max, n);
        let values: Vec<Vec<f64>> = ws.iter().map(|&w| is.iter().map(|&i| self.eval_unchecked(w, i)).collect()).collect();
        let (lo, hi) = values
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let eps = MONOTONE_EPS_REL * (hi - lo).max(f64::MIN_POSITIVE);
        for a in 0..n {
            for b in 0..n {
                let v = values[a][b];
                if a + 1 < n && values[a + 1][b] < v - eps {
                    return Err(format!("decreasing in w at w={:.4}, i={:.4}", ws[a], is[b]));
                }
                if b + 1 < n && values[a][b + 1] < v - eps {
                    return Err(format!("decreasing in i at w={:.4}, i={:.4}", ws[a], is[b]));
                }
            }
        }
        Ok(())
    }

    fn zero_light_output(&self) -> f64 {
        let d = self.domain.unwrap_or(Domain::UNIT);
        if d.i_min > 0.0 {
            return 0.0;
        }
        axis(d.w_min, d.w_max, MONOTONE_GRID)
            .into_iter()
            .map(|w| self.eval_unchecked(w, 0.0).abs())
            .fold(0.0, f64::max)
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 || hi <= lo {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| if k + 1 == n { hi } else { lo + step * k as f64 }).collect()
}

fn grid_points(d: &Domain, n: usize) -> impl Iterator<Item = (f64, f64)> {
    let ws = axis(d.w_min, d.w_max, n);
    let is = axis(d.i_min, d.i_max, n);
    ws.into_iter().flat_map(move |w| is.clone().into_iter().map(move |i| (w, i)))
}

/// Options for [`fit_surrogate_with`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub degree_w: usize,
    pub degree_i: usize,
    /// Accept a non-monotone fit and record a warning instead of failing.
    pub allow_non_monotone: bool,
}

/// Least-squares polynomial surrogate of the given degrees.
pub fn fit_surrogate(samples: &[FitSample], degree_w: usize, degree_i: usize) -> Result<TransferFunction> {
    fit_surrogate_with(samples, FitOptions { degree_w, degree_i, allow_non_monotone: false })
}

pub fn fit_surrogate_with(samples: &[FitSample], opts: FitOptions) -> Result<TransferFunction> {
    let FitOptions { degree_w, degree_i, .. } = opts;
    if degree_w < 1 || degree_i < 1 {
        return Err(Error::Config("surrogate degrees must be at least 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::Rank { rank: 0, needed: (degree_w + 1) * (degree_i + 1) });
    }
    if let Some(s) = samples.iter().find(|s| !(s.w_norm.is_finite() && s.i_norm.is_finite() && s.v_out.is_finite())) {
        return Err(Error::Range(format!("non-finite sample {s:?}")));
    }
    let cols = (degree_w + 1) * (degree_i + 1);
    let rows = samples.len();

    let design = DMatrix::from_fn(rows, cols, |r, c| {
        let (m, n) = (c / (degree_i + 1), c % (degree_i + 1));
        samples[r].w_norm.powi(m as i32) * samples[r].i_norm.powi(n as i32)
    });
    let rhs = DVector::from_iterator(rows, samples.iter().map(|s| s.v_out));

    let svd = design.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let tol = s_max * rows.max(cols) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < cols || s_max == 0.0 {
        return Err(Error::Rank { rank, needed: cols });
    }
    let solution = svd.solve(&rhs, tol).map_err(|e| Error::Model(e.to_string()))?;

    let coeffs: Vec<Vec<f64>> = (0..=degree_w)
        .map(|m| (0..=degree_i).map(|n| solution[m * (degree_i + 1) + n]).collect())
        .collect();

    let residuals = &design * &solution - &rhs;
    let ss_res = residuals.norm_squared();
    let mean = rhs.mean();
    let ss_tot: f64 = rhs.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else if ss_res == 0.0 { 1.0 } else { 0.0 };

    let mut tf = TransferFunction {
        kind: TransferKind::PolynomialSurrogate,
        coeffs,
        domain: Some(Domain::bounding(samples)),
        diagnostics: None,
        synthetic: false,
    };

    let mut warnings = Vec::new();
    let monotone = match tf.check_monotone() {
        Ok(()) => true,
        Err(msg) if opts.allow_non_monotone => {
            warnings.push(format!("non-monotone surface accepted: {msg}"));
            false
        }
        Err(msg) => return Err(Error::Monotonicity(msg)),
    };
    let zero_light = tf.zero_light_output();
    let output_range = tf.max_output().abs().max(f64::MIN_POSITIVE);
    if zero_light > 1e-3 * output_range {
        warnings.push(format!("output at zero light reaches {zero_light:.3e}; dark pixels will not read zero"));
    }
    tf.diagnostics = Some(FitDiagnostics {
        samples: rows,
        residual_rms: (ss_res / rows as f64).sqrt(),
        r_squared,
        monotone,
        zero_light_output: zero_light,
        warnings,
    });
    Ok(tf)
}

/// Smooth saturating response used to build the bundled synthetic surrogate:
/// `(1 - e^{-a w}) (1 - e^{-b i}) / ((1 - e^{-a}) (1 - e^{-b}))` with
/// `a = 1.5`, `b = 0.8`. Zero when either input is zero, one at `(1, 1)`.
pub fn synthetic_response(w: f64, i: f64) -> f64 {
    const A: f64 = 1.5;
    const B: f64 = 0.8;
    (1.0 - (-A * w).exp()) * (1.0 - (-B * i).exp()) / ((1.0 - (-A).exp()) * (1.0 - (-B).exp()))
}

/// 33 x 33 uniform samples of [`synthetic_response`] over the unit square.
pub fn synthetic_samples() -> Vec<FitSample> {
    let n = 33;
    let ax = axis(0.0, 1.0, n);
    ax.iter()
        .flat_map(|&w| ax.iter().map(move |&i| FitSample { w_norm: w, i_norm: i, v_out: synthetic_response(w, i) }))
        .collect()
}

pub const DEFAULT_SURROGATE: &str = include_str!("../fixtures/surrogate_default.toml");

/// The bundled synthetic surrogate (degree 3 x 3 fit of [`synthetic_response`]).
pub fn default_surrogate() -> TransferFunction {
    parse_surrogate(DEFAULT_SURROGATE).expect("bundled surrogate fixture is valid")
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Reads `w_norm,i_norm,v_out` rows. Errors name the 1-based line.
pub fn parse_samples_csv(text: &str) -> Result<Vec<FitSample>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "w_norm,i_norm,v_out" => {}
        Some((_, h)) => return Err(Error::Parse(format!("line 1: expected header `w_norm,i_norm,v_out`, found `{h}`"))),
        None => return Err(Error::Parse("empty sample file".into())),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!("line {lineno}: expected 3 fields, found {}", fields.len())));
        }
        let mut vals = [0.0; 3];
        for (k, f) in fields.iter().enumerate() {
            vals[k] = f
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {lineno}: field {} `{f}` is not a number", k + 1)))?;
            if !vals[k].is_finite() {
                return Err(Error::Parse(format!("line {lineno}: field {} is not finite", k + 1)));
            }
        }
        out.push(FitSample { w_norm: vals[0], i_norm: vals[1], v_out: vals[2] });
    }
    Ok(out)
}

pub fn samples_to_csv(samples: &[FitSample]) -> String {
    let mut s = String::from("w_norm,i_norm,v_out\n");
    for x in samples {
        s.push_str(&format!("{:?},{:?},{:?}\n", x.w_norm, x.i_norm, x.v_out));
    }
    s
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurrogateDoc {
    schema_version: u32,
    kind: TransferKind,
    #[serde(default)]
    synthetic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    #[serde(default)]
    degree_w: usize,
    #[serde(default)]
    degree_i: usize,
    /// Row-major over `m` (powers of w), then `n` (powers of i).
    #[serde(default)]
    coeffs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagnostics: Option<FitDiagnostics>,
}

pub fn parse_surrogate(text: &str) -> Result<TransferFunction> {
    let doc: SurrogateDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if doc.schema_version != SURROGATE_SCHEMA_VERSION {
        return Err(Error::Parse(format!("unsupported surrogate schema_version {}", doc.schema_version)));
    }
    match doc.kind {
        TransferKind::Ideal => Ok(TransferFunction::ideal()),
        TransferKind::PolynomialSurrogate => {
            let (dw, di) = (doc.degree_w, doc.degree_i);
            if doc.coeffs.len() != (dw + 1) * (di + 1) {
                return Err(Error::Parse(format!(
                    "expected {} coefficients for degrees ({dw}, {di}), found {}",
                    (dw + 1) * (di + 1),
                    doc.coeffs.len()
                )));
            }
            let coeffs = doc.coeffs.chunks(di + 1).map(<[f64]>::to_vec).collect();
            let domain = doc.domain.ok_or_else(|| Error::Parse("surrogate is missing its domain".into()))?;
            let mut tf = TransferFunction::polynomial(coeffs, domain)?;
            tf.diagnostics = doc.diagnostics;
            tf.synthetic = doc.synthetic;
            Ok(tf)
        }
    }
}

pub fn surrogate_to_toml(tf: &TransferFunction, synthetic: bool, note: Option<&str>) -> String {
    let (dw, di) = tf.degrees().unwrap_or((0, 0));
    let doc = SurrogateDoc {
        schema_version: SURROGATE_SCHEMA_VERSION,
        kind: tf.kind,
        synthetic,
        note: note.map(str::to_owned),
        degree_w: dw,
        degree_i: di,
        coeffs: tf.coeffs.iter().flatten().copied().collect(),
        domain: tf.domain,
        diagnostics: tf.diagnostics.clone(),
    };
    toml::to_string(&doc).expect("surrogate serializes")
}

pub fn load_surrogate(path: &Path) -> Result<TransferFunction> {
    parse_surrogate(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_samples(f: impl Fn(f64, f64) -> f64, n: usize) -> Vec<FitSample> {
        let ax = axis(0.0, 1.0, n);
        ax.iter()
            .flat_map(|&w| ax.iter().map(|&i| FitSample { w_norm: w, i_norm: i, v_out: 0.0 }).collect::<Vec<_>>())
            .map(|mut s| {
                s.v_out = f(s.w_norm, s.i_norm);
                s
            })
            .collect()
    }

    #[test]
    fn ideal_is_exact_product() {
        let tf = TransferFunction::ideal();
        assert_eq!(tf.evaluate(0.5, 0.4).unwrap(), 0.5 * 0.4);
        assert_eq!(tf.evaluate(0.0, 0.9).unwrap(), 0.0);
        assert_eq!(tf.evaluate(-3.0, 7.0).unwrap(), -21.0);
    }

    #[test]
    fn exact_bilinear_fit() {
        let samples = grid_samples(|w, i| w * i, 7);
        let tf = fit_surrogate(&samples, 1, 1).unwrap();
        let c = tf.coeffs();
        assert!((c[1][1] - 1.0).abs() < 1e-9);
        assert!(c[0][0].abs() < 1e-9 && c[0][1].abs() < 1e-9 && c[1][0].abs() < 1e-9);
        assert!((tf.diagnostics().unwrap().r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_fit_is_rank_error() {
        let samples = grid_samples(|w, i| w * i, 2);
        let three = &samples[..3];
        assert!(matches!(fit_surrogate(three, 2, 2), Err(Error::Rank { needed: 9, .. })));
    }

    #[test]
    fn collinear_samples_are_rank_deficient() {
        // all samples on w = 0.5 cannot resolve the w-dependence
        let samples: Vec<_> =
            (0..20).map(|k| FitSample { w_norm: 0.5, i_norm: k as f64 / 19.0, v_out: k as f64 }).collect();
        assert!(matches!(fit_surrogate(&samples, 1, 1), Err(Error::Rank { .. })));
    }

    #[test]
    fn in_class_function_recovered() {
        let f = |w: f64, i: f64| 0.8 * w * i - 0.1 * (w * i).powi(2);
        let tf = fit_surrogate(&grid_samples(f, 11), 2, 2).unwrap();
        let d = tf.diagnostics().unwrap();
        assert!(d.residual_rms < 1e-9, "rms {}", d.residual_rms);
        assert!((tf.evaluate(1.0, 1.0).unwrap() - 0.7).abs() < 1e-9);
        assert!(d.monotone);
    }

    #[test]
    fn surrogate_rejects_out_of_domain() {
        let tf = fit_surrogate(&grid_samples(|w, i| w * i, 5), 1, 1).unwrap();
        assert!(matches!(tf.evaluate(1.2, 0.5), Err(Error::Domain { .. })));
        assert!(matches!(tf.evaluate(0.5, -0.01), Err(Error::Domain { .. })));
    }

    #[test]
    fn empty_surrogate_is_model_error() {
        let tf = TransferFunction {
            kind: TransferKind::PolynomialSurrogate,
            coeffs: vec![],
            domain: Some(Domain::UNIT),
            diagnostics: None,
            synthetic: false,
        };
        assert!(matches!(tf.evaluate(0.5, 0.5), Err(Error::Model(_))));
        assert!(TransferFunction::polynomial(vec![], Domain::UNIT).is_err());
    }

    #[test]
    fn decreasing_surface_fails_monotonicity() {
        let samples = grid_samples(|w, i| w * i - 0.9 * w * w, 9);
        assert!(matches!(fit_surrogate(&samples, 2, 1), Err(Error::Monotonicity(_))));
        let tf = fit_surrogate_with(&samples, FitOptions { degree_w: 2, degree_i: 1, allow_non_monotone: true }).unwrap();
        let d = tf.diagnostics().unwrap();
        assert!(!d.monotone);
        assert!(!d.warnings.is_empty());
    }

    #[test]
    fn dark_offset_is_flagged() {
        let tf = fit_surrogate(&grid_samples(|w, i| 0.1 + w * i, 5), 1, 1).unwrap();
        assert!(tf.diagnostics().unwrap().warnings.iter().any(|w| w.contains("zero light")));
    }

    #[test]
    fn csv_parse_errors_name_the_line() {
        let err = parse_samples_csv("w_norm,i_norm,v_out\n0,0,0\n0.1,abc,0\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = parse_samples_csv("w_norm,i_norm,v_out\n0,0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_samples_csv("a,b,c\n").is_err());
    }

    #[test]
    fn surrogate_document_round_trips() {
        let tf = fit_surrogate(&grid_samples(|w, i| 0.8 * w * i - 0.1 * (w * i).powi(2), 9), 2, 2).unwrap();
        let text = surrogate_to_toml(&tf, false, None);
        let back = parse_surrogate(&text).unwrap();
        assert_eq!(back, tf);
    }

    #[test]
    fn bundled_surrogate_matches_refit() {
        let shipped = default_surrogate();
        assert!(shipped.is_synthetic());
        let refit = fit_surrogate(&synthetic_samples(), 3, 3).unwrap();
        for (a, b) in shipped.coeffs().iter().flatten().zip(refit.coeffs().iter().flatten()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!(shipped.check_monotone().is_ok());
        // A cubic cannot pin w = 0 exactly; stay within a few fit residuals.
        assert!(shipped.evaluate(0.0, 0.7).unwrap().abs() < 5e-3);
    }

    #[test]
    fn fit_is_deterministic() {
        let s = synthetic_samples();
        assert_eq!(fit_surrogate(&s, 3, 3).unwrap(), fit_surrogate(&s, 3, 3).unwrap());
    }
}
