//! Locating and loading input files, with bundled fallbacks.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use p2m_core::adc_cds::AdcConfig;
use p2m_core::metrics::{ConstantsFile, DEFAULT_CONSTANTS};
use p2m_core::netmodel::{parse_arch, ArchSpec, BASELINE_C_ARCH, BASELINE_NC_ARCH, P2M_CUSTOM_ARCH};
use p2m_core::pixel_model::{default_surrogate, parse_surrogate, TransferFunction};
use serde::Deserialize;

use crate::manifest::Manifest;

pub const CONFIG_DIR_ENV: &str = "P2M_CONFIG_DIR";

/// Resolves optional inputs: explicit flag, then the config directory,
/// then the bundled default.
pub struct Inputs {
    pub config_dir: Option<PathBuf>,
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).with_context(|| format!("{} is not UTF-8", path.display()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AdcDoc {
    schema_version: u32,
    adc: AdcConfig,
}

pub fn parse_adc(text: &str) -> p2m_core::Result<AdcConfig> {
    let doc: AdcDoc = toml::from_str(text).map_err(|e| p2m_core::Error::Parse(e.to_string()))?;
    if doc.schema_version != 1 {
        return Err(p2m_core::Error::Parse(format!("unsupported ADC schema_version {}", doc.schema_version)));
    }
    doc.adc.validate()?;
    Ok(doc.adc)
}

impl Inputs {
    fn locate(&self, flag: Option<&Path>, name: &str) -> Option<PathBuf> {
        flag.map(Path::to_path_buf).or_else(|| {
            let p = self.config_dir.as_ref()?.join(name);
            p.is_file().then_some(p)
        })
    }

    pub fn constants(&self, flag: Option<&Path>, m: &mut Manifest) -> Result<ConstantsFile> {
        match self.locate(flag, "constants.toml") {
            Some(path) => {
                let text = read_text(&path)?;
                m.input(path.display().to_string(), text.as_bytes());
                Ok(ConstantsFile::parse(&text).with_context(|| format!("in {}", path.display()))?)
            }
            None => {
                m.input("bundled:constants.toml", DEFAULT_CONSTANTS.as_bytes());
                Ok(ConstantsFile::bundled())
            }
        }
    }

    /// `None` from every source means the ideal multiplier.
    pub fn transfer(&self, flag: Option<&Path>, m: &mut Manifest) -> Result<TransferFunction> {
        if flag == Some(Path::new("bundled")) {
            m.input("bundled:surrogate_default.toml", p2m_core::pixel_model::DEFAULT_SURROGATE.as_bytes());
            return Ok(default_surrogate());
        }
        match self.locate(flag, "surrogate.toml") {
            Some(path) => {
                let text = read_text(&path)?;
                m.input(path.display().to_string(), text.as_bytes());
                Ok(parse_surrogate(&text).with_context(|| format!("in {}", path.display()))?)
            }
            None => Ok(TransferFunction::ideal()),
        }
    }

    pub fn adc(&self, flag: Option<&Path>, m: &mut Manifest) -> Result<Option<AdcConfig>> {
        match self.locate(flag, "adc.toml") {
            Some(path) => {
                let text = read_text(&path)?;
                m.input(path.display().to_string(), text.as_bytes());
                Ok(Some(parse_adc(&text).with_context(|| format!("in {}", path.display()))?))
            }
            None => Ok(None),
        }
    }

    /// Explicit architecture files, or the three bundled models.
    pub fn archs(&self, flags: &[PathBuf], m: &mut Manifest) -> Result<Vec<ArchSpec>> {
        if flags.is_empty() {
            let mut out = Vec::new();
            for (name, text) in [
                ("p2m_custom.arch.toml", P2M_CUSTOM_ARCH),
                ("baseline_c.arch.toml", BASELINE_C_ARCH),
                ("baseline_nc.arch.toml", BASELINE_NC_ARCH),
            ] {
                m.input(format!("bundled:{name}"), text.as_bytes());
                out.push(parse_arch(text)?);
            }
            return Ok(out);
        }
        flags.iter().map(|p| self.arch(p, m)).collect()
    }

    pub fn arch(&self, path: &Path, m: &mut Manifest) -> Result<ArchSpec> {
        let text = read_text(path)?;
        m.input(path.display().to_string(), text.as_bytes());
        parse_arch(&text).with_context(|| format!("in {}", path.display()))
    }
}
