//! CNN architecture descriptions and operation counting.
//!
//! Counts follow the usual conventions: a full convolution costs
//! `h_o * w_o * k^2 * c_i * c_o` multiply-adds and reads `k^2 * c_i * c_o`
//! parameters; depthwise layers use a channel multiplier of one; fully
//! connected layers flatten their input. Peak memory is the largest sum of
//! one layer's input and output activations, weights excluded. Layers
//! computed inside the pixel array are reported separately and excluded
//! from processor totals.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::array_pipeline::conv_output_dim;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    #[serde(alias = "depthwise-conv", alias = "depthwise_conv")]
    Depthwise,
    #[serde(alias = "pointwise-conv", alias = "pointwise_conv")]
    Pointwise,
    Pool,
    GlobalPool,
    Fc,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerKind::Conv => "conv",
            LayerKind::Depthwise => "depthwise",
            LayerKind::Pointwise => "pointwise",
            LayerKind::Pool => "pool",
            LayerKind::GlobalPool => "global_pool",
            LayerKind::Fc => "fc",
        };
        f.write_str(s)
    }
}

/// Explicit padding, or `"same"` (output is `ceil(input / stride)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Padding {
    Explicit(usize),
    Same(SameTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SameTag {
    Same,
}

impl Default for Padding {
    fn default() -> Self {
        Padding::Explicit(0)
    }
}

impl Padding {
    pub const SAME: Padding = Padding::Same(SameTag::Same);
}

/// A layer as written in an architecture file. Shapes are inferred by
/// chaining; `c_in`, `h_i` and `w_i` are optional cross-checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDecl {
    #[serde(default)]
    pub name: Option<String>,
    pub kind: LayerKind,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub s: Option<usize>,
    #[serde(default)]
    pub p: Padding,
    #[serde(default)]
    pub c_out: Option<usize>,
    #[serde(default)]
    pub c_in: Option<usize>,
    #[serde(default)]
    pub h_i: Option<usize>,
    #[serde(default)]
    pub w_i: Option<usize>,
    #[serde(default)]
    pub in_pixel: bool,
    /// Floor a non-integral output size, as deep-learning frameworks do.
    #[serde(default)]
    pub truncate: bool,
}

impl LayerDecl {
    pub fn new(kind: LayerKind) -> Self {
        LayerDecl {
            name: None,
            kind,
            k: None,
            s: None,
            p: Padding::default(),
            c_out: None,
            c_in: None,
            h_i: None,
            w_i: None,
            in_pixel: false,
            truncate: false,
        }
    }

    pub fn conv(k: usize, s: usize, p: usize, c_out: usize) -> Self {
        LayerDecl { k: Some(k), s: Some(s), p: Padding::Explicit(p), c_out: Some(c_out), ..Self::new(LayerKind::Conv) }
    }
}

/// A layer with all shapes resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub k: usize,
    pub s: usize,
    pub p: Padding,
    pub c_in: usize,
    pub c_out: usize,
    pub h_i: usize,
    pub w_i: usize,
    pub h_o: usize,
    pub w_o: usize,
    pub in_pixel: bool,
    pub truncate: bool,
}

impl Layer {
    pub fn input_elems(&self) -> u64 {
        (self.h_i * self.w_i * self.c_in) as u64
    }

    pub fn output_elems(&self) -> u64 {
        (self.h_o * self.w_o * self.c_out) as u64
    }
}

/// Multiply-adds of one layer.
pub fn count_macs(layer: &Layer) -> u64 {
    let (ho, wo, k) = (layer.h_o as u64, layer.w_o as u64, layer.k as u64);
    match layer.kind {
        LayerKind::Conv | LayerKind::Pointwise => ho * wo * k * k * layer.c_in as u64 * layer.c_out as u64,
        LayerKind::Depthwise => ho * wo * k * k * layer.c_out as u64,
        LayerKind::Fc => layer.input_elems() * layer.c_out as u64,
        LayerKind::Pool | LayerKind::GlobalPool => 0,
    }
}

/// Parameters read for one layer.
pub fn count_reads(layer: &Layer) -> u64 {
    let k = layer.k as u64;
    match layer.kind {
        LayerKind::Conv | LayerKind::Pointwise => k * k * layer.c_in as u64 * layer.c_out as u64,
        LayerKind::Depthwise => k * k * layer.c_out as u64,
        LayerKind::Fc => layer.input_elems() * layer.c_out as u64,
        LayerKind::Pool | LayerKind::GlobalPool => 0,
    }
}

/// Resolved network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArchSpec {
    pub name: String,
    /// `(height, width, channels)` of the sensor image.
    pub input: (usize, usize, usize),
    pub layers: Vec<Layer>,
}

fn dim_out(input: usize, k: usize, s: usize, p: Padding, truncate: bool) -> Result<usize> {
    match p {
        Padding::Explicit(p) if truncate => {
            if s == 0 || input + 2 * p < k {
                return Err(Error::Geometry(format!("kernel {k} does not fit input {input} with padding {p}")));
            }
            Ok((input + 2 * p - k) / s + 1)
        }
        Padding::Explicit(p) => conv_output_dim(input, k, s, p),
        Padding::Same(_) => {
            if s == 0 {
                return Err(Error::Geometry("stride must be positive".into()));
            }
            Ok(input.div_ceil(s))
        }
    }
}

impl ArchSpec {
    /// Chains `decls` from `input`; `lines` (when given) locate errors.
    pub fn build(name: &str, input: (usize, usize, usize), decls: &[LayerDecl]) -> Result<Self> {
        Self::build_located(name, input, decls, None)
    }

    fn build_located(name: &str, input: (usize, usize, usize), decls: &[LayerDecl], lines: Option<&[usize]>) -> Result<Self> {
        let at = |idx: usize, msg: String| -> Error {
            match lines {
                Some(l) => Error::Shape(format!("line {}: layer {}: {msg}", l[idx], idx + 1)),
                None => Error::Shape(format!("layer {}: {msg}", idx + 1)),
            }
        };
        if input.0 == 0 || input.1 == 0 || input.2 == 0 {
            return Err(Error::Shape("input dimensions must be positive".into()));
        }
        let (mut h, mut w, mut c) = input;
        let mut layers = Vec::with_capacity(decls.len());
        for (idx, d) in decls.iter().enumerate() {
            if d.in_pixel && idx != 0 {
                return Err(at(idx, "only the first layer may be computed in-pixel".into()));
            }
            if let Some(ci) = d.c_in {
                if ci != c {
                    return Err(at(idx, format!("declares c_in {ci} but receives {c} channels")));
                }
            }
            if let Some(hi) = d.h_i {
                if hi != h {
                    return Err(at(idx, format!("declares h_i {hi} but receives height {h}")));
                }
            }
            if let Some(wi) = d.w_i {
                if wi != w {
                    return Err(at(idx, format!("declares w_i {wi} but receives width {w}")));
                }
            }
            let need = |field: Option<usize>, what: &str| field.ok_or_else(|| at(idx, format!("{} layer needs `{what}`", d.kind)));
            let (k, s, p, c_out, h_o, w_o) = match d.kind {
                LayerKind::Conv | LayerKind::Depthwise | LayerKind::Pool => {
                    let k = need(d.k, "k")?;
                    let s = d.s.unwrap_or(1);
                    let c_out = match d.kind {
                        LayerKind::Conv => need(d.c_out, "c_out")?,
                        _ => {
                            if let Some(co) = d.c_out.filter(|&co| co != c) {
                                return Err(at(idx, format!("{} layer cannot change channels ({c} -> {co})", d.kind)));
                            }
                            c
                        }
                    };
                    let h_o = dim_out(h, k, s, d.p, d.truncate).map_err(|e| at(idx, e.to_string()))?;
                    let w_o = dim_out(w, k, s, d.p, d.truncate).map_err(|e| at(idx, e.to_string()))?;
                    (k, s, d.p, c_out, h_o, w_o)
                }
                LayerKind::Pointwise => {
                    if d.k.is_some_and(|k| k != 1) {
                        return Err(at(idx, "pointwise layer must have k = 1".into()));
                    }
                    let s = d.s.unwrap_or(1);
                    let h_o = dim_out(h, 1, s, d.p, d.truncate).map_err(|e| at(idx, e.to_string()))?;
                    let w_o = dim_out(w, 1, s, d.p, d.truncate).map_err(|e| at(idx, e.to_string()))?;
                    (1, s, d.p, need(d.c_out, "c_out")?, h_o, w_o)
                }
                LayerKind::GlobalPool => (h.max(w), 1, Padding::default(), c, 1, 1),
                LayerKind::Fc => (1, 1, Padding::default(), need(d.c_out, "c_out")?, 1, 1),
            };
            if c_out == 0 || k == 0 || s == 0 {
                return Err(at(idx, "k, s and c_out must be positive".into()));
            }
            layers.push(Layer {
                name: d.name.clone().unwrap_or_else(|| format!("{}{}", d.kind, idx + 1)),
                kind: d.kind,
                k,
                s,
                p,
                c_in: c,
                c_out,
                h_i: h,
                w_i: w,
                h_o,
                w_o,
                in_pixel: d.in_pixel,
                truncate: d.truncate,
            });
            (h, w, c) = (h_o, w_o, c_out);
        }
        Ok(ArchSpec { name: name.to_owned(), input, layers })
    }

    pub fn in_pixel_layer(&self) -> Option<&Layer> {
        self.layers.first().filter(|l| l.in_pixel)
    }

    /// Layers executed by the downstream processor.
    pub fn processor_layers(&self) -> impl Iterator<Item = &Layer> {
        self.layers.iter().filter(|l| !l.in_pixel)
    }

    /// Elements the sensor sends downstream: the in-pixel layer output, or
    /// the raw image when there is none.
    pub fn sensor_output_elems(&self) -> u64 {
        match self.in_pixel_layer() {
            Some(l) => l.output_elems(),
            None => (self.input.0 * self.input.1 * self.input.2) as u64,
        }
    }

    /// Replaces (or inserts) the in-pixel first layer and re-chains the rest.
    pub fn with_front_end(&self, input: (usize, usize, usize), front: LayerDecl) -> Result<Self> {
        let mut decls: Vec<LayerDecl> = Vec::with_capacity(self.layers.len() + 1);
        decls.push(LayerDecl { in_pixel: true, ..front });
        decls.extend(self.processor_layers().map(Layer::to_decl));
        ArchSpec::build(&self.name, input, &decls)
    }
}

impl Layer {
    /// Declaration that re-derives this layer's shapes from its input.
    pub fn to_decl(&self) -> LayerDecl {
        LayerDecl {
            name: Some(self.name.clone()),
            kind: self.kind,
            k: Some(self.k),
            s: Some(self.s),
            p: self.p,
            c_out: Some(self.c_out),
            c_in: None,
            h_i: None,
            w_i: None,
            in_pixel: self.in_pixel,
            truncate: self.truncate,
        }
        .normalized()
    }
}

impl LayerDecl {
    fn normalized(mut self) -> Self {
        match self.kind {
            LayerKind::Depthwise | LayerKind::Pool | LayerKind::GlobalPool => self.c_out = None,
            _ => {}
        }
        if self.kind == LayerKind::GlobalPool || self.kind == LayerKind::Fc {
            self.k = None;
            self.s = None;
        }
        self
    }
}

/// Largest `input + output` activation footprint of any processor layer.
pub fn peak_memory(arch: &ArchSpec, act_bytes: u64) -> u64 {
    arch.processor_layers().map(|l| (l.input_elems() + l.output_elems()) * act_bytes).max().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCounts {
    pub name: String,
    pub kind: LayerKind,
    pub in_pixel: bool,
    pub h_o: usize,
    pub w_o: usize,
    pub c_out: usize,
    pub macs: u64,
    pub reads: u64,
    pub act_in: u64,
    pub act_out: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountReport {
    pub layers: Vec<LayerCounts>,
    /// Processor multiply-adds (in-pixel layer excluded).
    pub total_macs: u64,
    pub in_pixel_macs: u64,
    /// Processor parameter reads.
    pub total_reads: u64,
    pub peak_memory_bytes: u64,
    /// Sensor output element count.
    pub n_pix: u64,
}

pub fn count(arch: &ArchSpec, act_bytes: u64) -> CountReport {
    let layers: Vec<LayerCounts> = arch
        .layers
        .iter()
        .map(|l| LayerCounts {
            name: l.name.clone(),
            kind: l.kind,
            in_pixel: l.in_pixel,
            h_o: l.h_o,
            w_o: l.w_o,
            c_out: l.c_out,
            macs: count_macs(l),
            reads: count_reads(l),
            act_in: l.input_elems() * act_bytes,
            act_out: l.output_elems() * act_bytes,
        })
        .collect();
    CountReport {
        total_macs: layers.iter().filter(|l| !l.in_pixel).map(|l| l.macs).sum(),
        in_pixel_macs: layers.iter().filter(|l| l.in_pixel).map(|l| l.macs).sum(),
        total_reads: layers.iter().filter(|l| !l.in_pixel).map(|l| l.reads).sum(),
        peak_memory_bytes: peak_memory(arch, act_bytes),
        n_pix: arch.sensor_output_elems(),
        layers,
    }
}

// ---------------------------------------------------------------------------
// Architecture file
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchDoc {
    schema_version: u32,
    name: String,
    input: [usize; 3],
    #[serde(default)]
    layer: Vec<toml::Spanned<LayerDecl>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parses and validates an architecture file. Errors carry the 1-based
/// line of the offending entry.
pub fn parse_arch(text: &str) -> Result<ArchSpec> {
    let doc: ArchDoc = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        match line {
            Some(l) => Error::Parse(format!("line {l}: {}", e.message())),
            None => Error::Parse(e.message().to_owned()),
        }
    })?;
    if doc.schema_version != 1 {
        return Err(Error::Parse(format!("unsupported architecture schema_version {}", doc.schema_version)));
    }
    let lines: Vec<usize> = doc.layer.iter().map(|s| line_of(text, s.span().start)).collect();
    let decls: Vec<LayerDecl> = doc.layer.into_iter().map(toml::Spanned::into_inner).collect();
    let [h, w, c] = doc.input;
    ArchSpec::build_located(&doc.name, (h, w, c), &decls, Some(&lines))
}

pub const P2M_CUSTOM_ARCH: &str = include_str!("../fixtures/p2m_custom.arch.toml");
pub const BASELINE_C_ARCH: &str = include_str!("../fixtures/baseline_c.arch.toml");
pub const BASELINE_NC_ARCH: &str = include_str!("../fixtures/baseline_nc.arch.toml");

/// The bundled P2M, compressed-baseline and uncompressed-baseline networks.
pub fn bundled_archs() -> Vec<ArchSpec> {
    [P2M_CUSTOM_ARCH, BASELINE_C_ARCH, BASELINE_NC_ARCH]
        .iter()
        .map(|t| parse_arch(t).expect("bundled architecture is valid"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(decl: LayerDecl, input: (usize, usize, usize)) -> Layer {
        ArchSpec::build("t", input, &[decl]).unwrap().layers.remove(0)
    }

    #[test]
    fn conv_macs_and_reads() {
        let l = single(LayerDecl::conv(5, 5, 0, 8), (560, 560, 3));
        assert_eq!((l.h_o, l.w_o), (112, 112));
        assert_eq!(count_macs(&l), 7_526_400);
        assert_eq!(count_reads(&l), 600);
        let one = single(LayerDecl::conv(1, 1, 0, 1), (1, 1, 1));
        assert_eq!(count_macs(&one), 1);
        assert_eq!(count_reads(&one), 1);
    }

    #[test]
    fn depthwise_reads() {
        let d = LayerDecl { k: Some(3), p: Padding::Explicit(1), ..LayerDecl::new(LayerKind::Depthwise) };
        let l = single(d, (16, 16, 32));
        assert_eq!(count_reads(&l), 288);
        assert_eq!(count_macs(&l), 16 * 16 * 288);
    }

    #[test]
    fn fc_and_pools() {
        let arch = ArchSpec::build(
            "t",
            (7, 7, 4),
            &[
                LayerDecl::new(LayerKind::GlobalPool),
                LayerDecl { c_out: Some(2), ..LayerDecl::new(LayerKind::Fc) },
            ],
        )
        .unwrap();
        assert_eq!(count_macs(&arch.layers[0]), 0);
        assert_eq!(count_macs(&arch.layers[1]), 8);
        assert_eq!(arch.layers[1].output_elems(), 2);
    }

    #[test]
    fn in_pixel_layer_excluded_from_processor_totals() {
        let mut first = LayerDecl::conv(5, 5, 0, 8);
        first.in_pixel = true;
        let arch = ArchSpec::build("t", (560, 560, 3), &[first, LayerDecl::conv(1, 1, 0, 16)]).unwrap();
        let r = count(&arch, 1);
        assert_eq!(r.in_pixel_macs, 7_526_400);
        assert_eq!(r.total_macs, 112 * 112 * 8 * 16);
        assert_eq!(r.n_pix, 112 * 112 * 8);
    }

    #[test]
    fn in_pixel_only_first() {
        let mut second = LayerDecl::conv(1, 1, 0, 4);
        second.in_pixel = true;
        assert!(ArchSpec::build("t", (8, 8, 3), &[LayerDecl::conv(1, 1, 0, 4), second]).is_err());
    }

    #[test]
    fn peak_memory_identity_and_shrinking() {
        let arch = ArchSpec::build("t", (10, 10, 1), &[LayerDecl::conv(1, 1, 0, 1)]).unwrap();
        assert_eq!(peak_memory(&arch, 1), 200);
        let arch = ArchSpec::build("t", (10, 10, 1), &[LayerDecl::conv(1, 1, 0, 1), LayerDecl::conv(2, 2, 0, 1)]).unwrap();
        assert_eq!(peak_memory(&arch, 1), 200);
        assert_eq!(peak_memory(&arch, 4), 800);
    }

    #[test]
    fn same_padding_rounds_up() {
        let d = LayerDecl { k: Some(3), s: Some(2), p: Padding::SAME, ..LayerDecl::new(LayerKind::Depthwise) };
        let l = single(d, (279, 279, 8));
        assert_eq!(l.h_o, 140);
    }

    #[test]
    fn non_integral_geometry_is_an_error() {
        assert!(ArchSpec::build("t", (560, 560, 3), &[LayerDecl::conv(3, 2, 0, 32)]).is_err());
    }

    #[test]
    fn parse_errors_carry_lines() {
        let text = "schema_version = 1\nname = \"x\"\ninput = [8, 8, 3]\nlayer = [\n  { kind = \"conv\", k = 1, c_out = 4 },\n  { kind = \"conv\", k = 1, c_out = 4, c_in = 3 },\n]\n";
        let err = parse_arch(text).unwrap_err().to_string();
        assert!(err.contains("line 6"), "{err}");
        let text = "schema_version = 1\nname = \"x\"\ninput = [8, 8, 3]\nlayer = [\n  { kind = \"conv\", k = 1, c_out = 4, bogus = 1 },\n]\n";
        let err = parse_arch(text).unwrap_err().to_string();
        assert!(err.contains("line 5"), "{err}");
        let text = "schema_version = 1\nname = \"x\"\ninput = [8, 8, 3]\n\n[[layer]]\nkind = \"conv\"\nk = 3\ns = 2\nc_out = 2\n";
        let err = parse_arch(text).unwrap_err().to_string();
        assert!(err.contains("line 5") || err.contains("line 6"), "{err}");
    }

    #[test]
    fn doubling_channels_doubles_counts() {
        let a = single(LayerDecl::conv(3, 1, 1, 8), (12, 12, 4));
        let b = single(LayerDecl::conv(3, 1, 1, 16), (12, 12, 4));
        assert_eq!(count_macs(&b), 2 * count_macs(&a));
        assert_eq!(count_reads(&b), 2 * count_reads(&a));
    }

    #[test]
    fn front_end_swap_rechains() {
        let arch = &bundled_archs()[0];
        let swapped = arch.with_front_end((560, 560, 3), LayerDecl::conv(5, 5, 0, 16)).unwrap();
        assert_eq!(swapped.layers.len(), arch.layers.len());
        assert_eq!(swapped.layers[1].c_in, 16);
        let same = arch.with_front_end((560, 560, 3), LayerDecl::conv(5, 5, 0, 8)).unwrap();
        let (a, b) = (count(&same, 1), count(arch, 1));
        assert_eq!((a.total_macs, a.total_reads, a.n_pix, a.peak_memory_bytes), (b.total_macs, b.total_reads, b.n_pix, b.peak_memory_bytes));
    }
}
