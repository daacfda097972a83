//! Dense tensors and the on-disk formats used for images, weights and
//! activation maps.
//!
//! Raw tensor layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "P2MT"
//! 4       1     version (1)
//! 5       1     dtype: 1 = u8, 2 = u16, 3 = f32, 4 = f64
//! 6       1     bit depth of integer samples (<= dtype width); 32/64 for floats
//! 7       1     flags: bit 0 = a sign-tag plane follows the samples
//! 8       4     ndim (u32)
//! 12      4*n   dims (u32 each), outermost first
//! ..      ..    samples, row-major
//! ..      N     optional sign plane: one byte per sample, 0 = positive, 1 = negative
//! ```

use std::path::Path;

use crate::error::{Error, Result};

/// Row-major `[height][width][channels]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Tensor3 { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{}x{}x{} tensor needs {} values, got {}",
                height,
                width,
                channels,
                height * width * channels,
                data.len()
            )));
        }
        Ok(Tensor3 { height, width, channels, data })
    }

    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Tensor3 { height, width, channels, data }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    U8,
    U16,
    F32,
    F64,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::U8 => 1,
            DType::U16 => 2,
            DType::F32 => 3,
            DType::F64 => 4,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            1 => DType::U8,
            2 => DType::U16,
            3 => DType::F32,
            4 => DType::F64,
            _ => return Err(Error::Parse(format!("unknown dtype code {c}"))),
        })
    }

    fn width(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::U16 => 2,
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn is_integer(self) -> bool {
        matches!(self, DType::U8 | DType::U16)
    }
}

/// Contents of a raw tensor file. `data` holds sample values as stored
/// (integer codes are not normalized).
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub dtype: DType,
    pub bit_depth: u8,
    pub data: Vec<f64>,
    /// `true` marks a negative-tagged element.
    pub signs: Option<Vec<bool>>,
}

const MAGIC: &[u8; 4] = b"P2MT";

impl RawTensor {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = self.len();
        if self.data.len() != n {
            return Err(Error::Shape(format!("dims hold {n} samples, data has {}", self.data.len())));
        }
        let mut out = Vec::with_capacity(12 + 4 * self.dims.len() + n * self.dtype.width());
        out.extend_from_slice(MAGIC);
        out.push(1);
        out.push(self.dtype.code());
        out.push(self.bit_depth);
        out.push(u8::from(self.signs.is_some()));
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            match self.dtype {
                DType::U8 => out.push(int_sample(v, u8::MAX as f64)? as u8),
                DType::U16 => out.extend_from_slice(&(int_sample(v, u16::MAX as f64)? as u16).to_le_bytes()),
                DType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                DType::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
        if let Some(signs) = &self.signs {
            if signs.len() != n {
                return Err(Error::Shape("sign plane length differs from sample count".into()));
            }
            out.extend(signs.iter().map(|&neg| u8::from(neg)));
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Parse("not a raw tensor file (bad magic)".into()));
        }
        let version = r.u8()?;
        if version != 1 {
            return Err(Error::Parse(format!("unsupported raw tensor version {version}")));
        }
        let dtype = DType::from_code(r.u8()?)?;
        let bit_depth = r.u8()?;
        if dtype.is_integer() && (bit_depth == 0 || bit_depth as usize > dtype.width() * 8) {
            return Err(Error::Parse(format!("bit depth {bit_depth} does not fit dtype {dtype:?}")));
        }
        let flags = r.u8()?;
        let ndim = r.u32()? as usize;
        if ndim == 0 || ndim > 8 {
            return Err(Error::Parse(format!("unsupported rank {ndim}")));
        }
        let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(match dtype {
                DType::U8 => r.u8()? as f64,
                DType::U16 => u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as f64,
                DType::F32 => f32::from_le_bytes(r.take(4)?.try_into().unwrap()) as f64,
                DType::F64 => f64::from_le_bytes(r.take(8)?.try_into().unwrap()),
            });
        }
        let signs = if flags & 1 == 1 {
            Some(r.take(n)?.iter().map(|&b| b != 0).collect())
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(Error::Parse(format!("{} trailing bytes after tensor", bytes.len() - r.pos)));
        }
        Ok(RawTensor { dims, dtype, bit_depth, data, signs })
    }

    /// Interprets a rank-3 tensor as an image normalized to `[0, 1]`.
    pub fn to_image(&self) -> Result<Tensor3> {
        if self.dims.len() != 3 {
            return Err(Error::Shape(format!("image tensor must be rank 3 (h, w, c), got rank {}", self.dims.len())));
        }
        let scale = if self.dtype.is_integer() { ((1u32 << self.bit_depth) - 1) as f64 } else { 1.0 };
        Tensor3::from_vec(self.dims[0], self.dims[1], self.dims[2], self.data.iter().map(|v| v / scale).collect())
    }
}

fn int_sample(v: f64, max: f64) -> Result<f64> {
    if !(0.0..=max).contains(&v) || v.fract() != 0.0 {
        return Err(Error::Range(format!("sample {v} is not an integer in [0, {max}]")));
    }
    Ok(v)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Parse(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses a binary PGM (`P5`) or PPM (`P6`) image with any maxval up to
/// 65535, so 8-, 12- and 16-bit captures all load. Values are divided by
/// maxval.
pub fn parse_pnm(bytes: &[u8]) -> Result<Tensor3> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::Parse("not a binary PGM/PPM image".into())),
    };
    let mut pos = 2;
    let mut header = [0usize; 3];
    for slot in header.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let digits = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *slot = digits.parse().map_err(|_| Error::Parse(format!("bad PNM header field at byte {start}")))?;
    }
    // exactly one whitespace byte before the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Parse("PNM header not terminated by whitespace".into()));
    }
    pos += 1;
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("PNM maxval {maxval} out of range")));
    }
    let bpp = if maxval > 255 { 2 } else { 1 };
    let n = width * height * channels;
    let raster = &bytes[pos..];
    if raster.len() != n * bpp {
        return Err(Error::Parse(format!("PNM raster has {} bytes, expected {}", raster.len(), n * bpp)));
    }
    let scale = maxval as f64;
    let data = if bpp == 1 {
        raster.iter().map(|&b| b as f64 / scale).collect()
    } else {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale).collect()
    };
    Tensor3::from_vec(height, width, channels, data)
}

/// Encodes an image as binary PGM/PPM with the given maxval.
pub fn encode_pnm(img: &Tensor3, maxval: u16) -> Result<Vec<u8>> {
    let magic = match img.channels() {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::Shape(format!("PNM supports 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", img.width(), img.height()).into_bytes();
    for &v in img.data() {
        let code = (v.clamp(0.0, 1.0) * maxval as f64).round() as u16;
        if maxval > 255 {
            out.extend_from_slice(&code.to_be_bytes());
        } else {
            out.push(code as u8);
        }
    }
    Ok(out)
}

/// Loads an image from a PGM/PPM or raw tensor file, normalized to `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Tensor3> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        RawTensor::from_bytes(&bytes)?.to_image()
    } else {
        parse_pnm(&bytes)
    }
}
