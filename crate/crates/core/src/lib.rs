//! Lossy compression of Cryo-EM density maps.
//!
//! Voxels above a density threshold are fitted by a coordinate network with a
//! learned latent vector per file. An archive holds the network weights, the
//! latents, and a DEFLATE-compressed occupancy bitmap for each file. Voxels at
//! or below the threshold reconstruct as zero.
//!
//! The pipeline pieces are usable on their own: [`mrc`] reads and writes
//! MRC2014 files, [`preprocess`] builds occupancy maps and chunked point stores,
//! [`inr`] holds the network, [`optim`] the weighted loss and Adam, [`trainer`]
//! the training loop, [`codec`] the archive, and [`metrics`] the evaluation.

pub mod cli;
pub mod codec;
pub mod fetch;
pub mod inr;
mod io_util;
pub mod metrics;
pub mod mrc;
pub mod optim;
pub mod preprocess;
pub mod synth;
pub mod trainer;
