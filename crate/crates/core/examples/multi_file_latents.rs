//! Compress two maps with the same support into one archive and decode each with both latents.

use cryoinr::codec::{compress, Archive, CompressOptions};
use cryoinr::metrics::{evaluation_set, psnr};
use cryoinr::mrc::write_mrc;
use cryoinr::synth::{synthesize, SynthOptions};
use cryoinr::trainer::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 32;
    let base = synthesize(&SynthOptions { shape: [n; 3], blobs: 5, seed: 11, noise: None })?;
    let mut up = base.clone();
    let mut down = base;
    for (i, (u, d)) in up.data.iter_mut().zip(down.data.iter_mut()).enumerate() {
        let t = (i % n) as f32 / (n - 1) as f32;
        *u *= 0.2 + 0.8 * t;
        *d *= 1.0 - 0.8 * t;
    }
    let inputs = [("up.mrc", write_mrc(&up)), ("down.mrc", write_mrc(&down))];
    let train = TrainConfig {
        epochs: 300,
        batch_size: 128,
        early_stop_patience: 300,
        arch: "127-64-Re1-32-1".parse()?,
        seed: 5,
        ..TrainConfig::default()
    };
    let out = compress(&inputs, &CompressOptions { threshold: 0.0, train })?;
    let bytes = out.archive.to_bytes();
    let archive = Archive::parse(&bytes)?;
    println!("archive {} bytes, {} latents", bytes.len(), archive.model.latents.len());

    for (name, grid) in [("up.mrc", &up), ("down.mrc", &down)] {
        let set = evaluation_set(grid, 0.0);
        for latent_of in ["up.mrc", "down.mrc"] {
            let rec = archive.decompress_with_latent(name, latent_of)?;
            println!("{name} decoded with {latent_of:<9} latent: PSNR {:.2} dB", psnr(grid, &rec, &set)?);
        }
    }
    Ok(())
}
