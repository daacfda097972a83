//! Regenerates the bundled surrogate and its sample grid.
//!
//! cargo run -p p2m-core --example regen_surrogate

use p2m_core::pixel_model::{fit_surrogate, samples_to_csv, surrogate_to_toml, synthetic_samples};

fn main() {
    let samples = synthetic_samples();
    let tf = fit_surrogate(&samples, 3, 3).expect("synthetic grid is well posed");
    let note = "Fitted to a synthetic saturating response, not to circuit simulation. \
                Replace with a fit to measured or simulated pixel data before drawing hardware conclusions.";
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    std::fs::write(format!("{dir}/surrogate_default.toml"), surrogate_to_toml(&tf, true, Some(note))).unwrap();
    std::fs::write(format!("{dir}/synthetic_samples.csv"), samples_to_csv(&samples)).unwrap();
}
