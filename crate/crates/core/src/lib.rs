//! Processing-in-pixel sensor modelling: analog front-end, single-slope ADC
//! with correlated double sampling, hardware-aware layer compilation and
//! system-level bandwidth, energy and delay estimates.

pub mod adc_cds;
pub mod analysis;
pub mod array_pipeline;
pub mod codesign;
pub mod error;
pub mod metrics;
pub mod netmodel;
pub mod pixel_model;
pub mod reference_oracle;
pub mod sweep;
pub mod tensor;
pub mod verification;

pub use error::{Error, Result};
