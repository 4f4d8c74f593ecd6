//! Banded error report between two maps, as text and CSV.
//!
//! cargo run --example evaluate_report -- [original.mrc reconstructed.mrc]

use cryoinr::metrics::{banded_report, DEFAULT_BAND_EDGES};
use cryoinr::mrc::read_mrc;
use cryoinr::synth::{synthesize, SynthOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (original, reconstructed) = match &args[..] {
        [a, b] => (read_mrc(&std::fs::read(a)?)?, read_mrc(&std::fs::read(b)?)?),
        _ => {
            // a clean map against a noisy copy of itself
            let clean = synthesize(&SynthOptions { shape: [32; 3], ..SynthOptions::default() })?;
            let noisy = synthesize(&SynthOptions { shape: [32; 3], noise: Some(0.01), ..SynthOptions::default() })?;
            (clean, noisy)
        }
    };
    let report = banded_report(&original, &reconstructed, 0.0, &DEFAULT_BAND_EDGES)?;
    print!("{}", report.to_text("original"));
    println!();
    report.write_csv("original", std::io::stdout())?;
    Ok(())
}
