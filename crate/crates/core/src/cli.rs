//! `cryoinr` command line.
//!
//! Exit codes: 0 success, 1 usage or pipeline error, 2 network error,
//! 3 remote file not found, 4 corrupt download.

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::codec::{compress, Archive, CodecError, CompressOptions};
use crate::fetch::{fetch_map, FetchError, EMDB_BASE};
use crate::inr::{Arch, InrError};
use crate::io_util::write_atomic;
use crate::metrics::{banded_report, MetricsError, DEFAULT_BAND_EDGES};
use crate::mrc::{read_mrc, write_mrc, MrcError};
use crate::synth::{synthesize, SynthError, SynthOptions};
use crate::trainer::{TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Mrc { path: PathBuf, source: MrcError },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error(transparent)]
    Arch(#[from] InrError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Fetch(FetchError::Network { .. }) => 2,
            CliError::Fetch(FetchError::NotFound { .. }) => 3,
            CliError::Fetch(FetchError::Corrupt { .. }) => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cryoinr", version, about = "Lossy compression of Cryo-EM density maps with a neural field")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network on the inputs and write an archive
    Compress(CompressArgs),
    /// Reconstruct MRC files from an archive
    Decompress(DecompressArgs),
    /// Compare a reconstruction against its original
    Evaluate(EvaluateArgs),
    /// Write a synthetic Gaussian-blob map
    Synth(SynthArgs),
    /// Download a map from EMDB
    Fetch(FetchArgs),
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    /// Input MRC files
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output archive
    #[arg(short, long)]
    pub output: PathBuf,
    /// Keep voxels with density strictly above this value
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub threshold: f32,
    #[arg(long, default_value_t = TrainConfig::DEFAULT_EPOCHS)]
    pub epochs: usize,
    /// Learning rate
    #[arg(long, default_value_t = TrainConfig::DEFAULT_LEARNING_RATE)]
    pub lr: f64,
    /// Multiply the learning rate by this factor after every epoch
    #[arg(long)]
    pub lr_decay: Option<f64>,
    /// Points per batch
    #[arg(long, default_value_t = TrainConfig::DEFAULT_BATCH_SIZE)]
    pub batch: usize,
    /// Points per on-disk chunk
    #[arg(long, default_value_t = TrainConfig::DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
    /// Epochs without validation improvement before stopping
    #[arg(long, default_value_t = TrainConfig::DEFAULT_PATIENCE)]
    pub patience: usize,
    #[arg(long, default_value_t = TrainConfig::DEFAULT_VALIDATION_FRACTION)]
    pub validation_fraction: f64,
    #[arg(long, env = "CRYOINR_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Network profile: full, desk, or a layer chain such as 127-64-Re-32-1
    #[arg(long, default_value = "full")]
    pub arch: String,
    /// Keep latent vectors at their initial values
    #[arg(long)]
    pub freeze_latents: bool,
    /// Per-epoch training log; defaults to <output>.train.csv
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecompressArgs {
    pub archive: PathBuf,
    /// Output directory
    #[arg(short, long)]
    pub output: PathBuf,
    /// Only reconstruct these files (repeatable)
    #[arg(long = "file")]
    pub files: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub original: PathBuf,
    pub reconstructed: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub threshold: f32,
    /// Comma-separated band edges in map units
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BAND_EDGES)]
    pub bands: Vec<f64>,
    /// Also write the report as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Archive the reconstruction came from, to report the compression ratio
    #[arg(long)]
    pub archive: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Edge length, or nx,ny,nz
    #[arg(long, default_value = "64", value_parser = parse_shape)]
    pub shape: [usize; 3],
    #[arg(long, default_value_t = 8)]
    pub blobs: usize,
    #[arg(long, env = "CRYOINR_SEED", default_value_t = 42)]
    pub seed: u64,
    /// Standard deviation of additive Gaussian noise
    #[arg(long)]
    pub noise: Option<f32>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// Accession such as EMD-1234
    pub accession: String,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Base URL of the EMDB structures tree
    #[arg(long, default_value = EMDB_BASE)]
    pub mirror: String,
}

fn parse_shape(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> =
        s.split(',').map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}"))).collect::<Result<_, _>>()?;
    match parts[..] {
        [n] => Ok([n; 3]),
        [x, y, z] => Ok([x, y, z]),
        _ => Err("expected N or NX,NY,NZ".into()),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn check_parent(path: &Path) -> Result<(), CliError> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(CliError::Usage(format!("output directory {} does not exist", parent.display())));
    }
    Ok(())
}

fn display_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn positive(name: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        return Err(CliError::Usage(format!("--{name} must be positive")));
    }
    Ok(())
}

pub fn cmd_compress(a: &CompressArgs) -> Result<(), CliError> {
    positive("epochs", a.epochs)?;
    positive("batch", a.batch)?;
    positive("chunk-size", a.chunk_size)?;
    if !(a.lr > 0.0 && a.lr.is_finite()) {
        return Err(CliError::Usage("--lr must be positive".into()));
    }
    check_parent(&a.output)?;
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut s = a.output.clone().into_os_string();
        s.push(".train.csv");
        PathBuf::from(s)
    });
    check_parent(&log_path)?;

    let mut inputs = Vec::with_capacity(a.inputs.len());
    for p in &a.inputs {
        inputs.push((display_name(p), read_file(p)?));
    }
    let opts = CompressOptions {
        threshold: a.threshold,
        train: TrainConfig {
            epochs: a.epochs,
            learning_rate: a.lr,
            lr_decay: a.lr_decay,
            batch_size: a.batch,
            chunk_size: a.chunk_size,
            early_stop_patience: a.patience,
            validation_fraction: a.validation_fraction,
            seed: a.seed,
            arch: Arch::from_profile(&a.arch)?,
            train_latents: !a.freeze_latents,
            ..TrainConfig::default()
        },
    };

    let started = Instant::now();
    let out = compress(&inputs, &opts)?;
    let bytes = out.archive.to_bytes();
    out.log.write_csv(&log_path)?;
    write_file(&a.output, &bytes)?;

    let ratios = out.archive.compression_ratio(bytes.len() as u64);
    println!(
        "wrote {} ({} bytes, {} files, {:.1} s)",
        a.output.display(),
        bytes.len(),
        out.archive.files.len(),
        started.elapsed().as_secs_f64()
    );
    println!("aggregate ratio {:.2}:1 ({} -> {} bytes)", ratios.aggregate, ratios.original_bytes, ratios.archive_bytes);
    for f in &ratios.per_file {
        println!("  {}: amortized ratio {:.2}:1", f.name, f.ratio);
    }
    if let Some(last) = out.log.epochs.last() {
        println!(
            "epochs run {}, final train loss {:.6e}, best {} loss {:.6e} at epoch {}",
            out.log.epochs.len(),
            last.train_loss,
            if out.log.monitored_train_loss { "train" } else { "validation" },
            out.log.best_val_loss().unwrap_or(f64::NAN),
            out.log.best_epoch.unwrap_or(0)
        );
    }
    Ok(())
}

pub fn cmd_decompress(a: &DecompressArgs) -> Result<(), CliError> {
    let archive = Archive::parse(&read_file(&a.archive)?)?;
    let names: Vec<String> = if a.files.is_empty() {
        archive.names().map(str::to_string).collect()
    } else {
        for n in &a.files {
            archive.file(n)?;
        }
        a.files.clone()
    };
    fs::create_dir_all(&a.output).map_err(|source| CliError::Io { path: a.output.clone(), source })?;
    for name in &names {
        let grid = archive.decompress(name)?;
        // stored names are file names; drop any directory part defensively
        let path = a.output.join(display_name(Path::new(name)));
        write_file(&path, &write_mrc(&grid))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn read_grid(path: &Path) -> Result<crate::mrc::VoxelGrid, CliError> {
    read_mrc(&read_file(path)?).map_err(|source| CliError::Mrc { path: path.to_path_buf(), source })
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let original = read_grid(&a.original)?;
    let reconstructed = read_grid(&a.reconstructed)?;
    if let Some(p) = &a.csv {
        check_parent(p)?;
    }
    let mut report = banded_report(&original, &reconstructed, a.threshold, &a.bands)?;
    let name = display_name(&a.original);
    if let Some(p) = &a.archive {
        let bytes = read_file(p)?;
        let archive = Archive::parse(&bytes)?;
        let ratios = archive.compression_ratio(bytes.len() as u64);
        let recon = display_name(&a.reconstructed);
        let own = ratios.per_file.iter().find(|f| f.name == name || f.name == recon);
        report.ratio = Some(own.map_or(ratios.aggregate, |f| f.ratio));
    }
    print!("{}", report.to_text(&name));
    if let Some(p) = &a.csv {
        let mut buf = Vec::new();
        report.write_csv(&name, &mut buf)?;
        write_file(p, &buf)?;
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    check_parent(&a.output)?;
    let grid = synthesize(&SynthOptions { shape: a.shape, blobs: a.blobs, seed: a.seed, noise: a.noise })?;
    write_file(&a.output, &write_mrc(&grid))?;
    println!("wrote {} ({}x{}x{})", a.output.display(), a.shape[0], a.shape[1], a.shape[2]);
    Ok(())
}

pub fn cmd_fetch(a: &FetchArgs) -> Result<(), CliError> {
    crate::fetch::parse_accession(&a.accession)?;
    check_parent(&a.output)?;
    let fetched = fetch_map(&a.accession, &a.mirror)?;
    write_file(&a.output, &fetched.bytes)?;
    let [nx, ny, nz] = fetched.grid.dims();
    println!("wrote {} ({nx}x{ny}x{nz}) from {}", a.output.display(), fetched.url);
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Compress(a) => cmd_compress(a),
        Command::Decompress(a) => cmd_decompress(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Fetch(a) => cmd_fetch(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn shape_forms() {
        assert_eq!(parse_shape("64").unwrap(), [64; 3]);
        assert_eq!(parse_shape("8,9,10").unwrap(), [8, 9, 10]);
        assert!(parse_shape("8,9").is_err());
        assert!(parse_shape("x").is_err());
    }

    #[test]
    fn help_lists_train_defaults() {
        let help = Cli::command().find_subcommand_mut("compress").unwrap().render_long_help().to_string();
        for d in [
            "[default: 100]",
            "[default: 0.001]",
            "[default: 1024]",
            "[default: 1000000]",
            "[default: 10]",
            "[default: 0.01]",
            "CRYOINR_SEED",
        ] {
            assert!(help.contains(d), "{d} missing from\n{help}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Fetch(FetchError::NotFound { url: "u".into() }).exit_code(), 3);
        assert_eq!(CliError::Fetch(FetchError::Network { url: "u".into(), message: "m".into() }).exit_code(), 2);
        assert_eq!(CliError::Fetch(FetchError::Corrupt { url: "u".into(), message: "m".into() }).exit_code(), 4);
        assert_eq!(CliError::Fetch(FetchError::InvalidAccession("x".into())).exit_code(), 1);
        assert_eq!(run(["cryoinr", "bogus"]), 1);
        assert_eq!(run(["cryoinr", "fetch", "nope", "-o", "/tmp/x.mrc"]), 1);
    }
}
