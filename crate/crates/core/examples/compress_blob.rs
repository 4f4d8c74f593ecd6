//! Compress a synthetic 64^3 blob map with the desk profile and report quality.
//!
//! cargo run --release --example compress_blob -- [epochs] [lr] [patience] [lr_decay] [arch]

use std::time::Instant;

use cryoinr::codec::{compress, Archive, CompressOptions};
use cryoinr::inr::Arch;
use cryoinr::metrics::{banded_report, DEFAULT_BAND_EDGES};
use cryoinr::mrc::write_mrc;
use cryoinr::synth::{synthesize, SynthOptions};
use cryoinr::trainer::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(Ok(300), |s| s.parse())?;
    let lr = args.next().map_or(Ok(TrainConfig::DEFAULT_LEARNING_RATE), |s| s.parse())?;
    // patience defaults to the epoch budget: the 1% validation split is small and noisy at 64^3
    let patience = args.next().map_or(Ok(epochs), |s| s.parse())?;
    let lr_decay = args.next().map(|s| s.parse()).transpose()?.filter(|&d: &f64| d != 1.0);
    let arch = Arch::from_profile(&args.next().unwrap_or_else(|| "desk".into()))?;

    let original = synthesize(&SynthOptions { shape: [64; 3], blobs: 8, seed: 42, noise: None })?;
    let mrc = write_mrc(&original);

    let train = TrainConfig {
        epochs,
        learning_rate: lr,
        early_stop_patience: patience,
        lr_decay,
        arch,
        seed: 42,
        ..TrainConfig::default()
    };
    let started = Instant::now();
    let out = compress(&[("blobs.mrc", &mrc)], &CompressOptions { threshold: 0.0, train })?;
    let seconds = started.elapsed().as_secs_f64();

    for e in out.log.epochs.iter().filter(|e| e.epoch % 10 == 0 || e.epoch + 1 == out.log.epochs.len()) {
        println!("epoch {:>4}  train {:.3e}  val {:.3e}  {:.2}s", e.epoch, e.train_loss, e.val_loss, e.seconds);
    }

    let bytes = out.archive.to_bytes();
    let archive = Archive::parse(&bytes)?;
    let rebuilt = archive.decompress("blobs.mrc")?;
    let report = banded_report(&original, &rebuilt, 0.0, &DEFAULT_BAND_EDGES)?;
    print!("{}", report.to_text("blobs.mrc"));
    println!(
        "points {}  archive {} bytes  original {} bytes  size ratio {:.3}  train time {seconds:.1} s",
        archive.files[0].popcount,
        bytes.len(),
        mrc.len(),
        bytes.len() as f64 / mrc.len() as f64
    );
    Ok(())
}
