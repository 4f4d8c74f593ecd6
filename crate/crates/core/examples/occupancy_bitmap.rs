//! Threshold a synthetic map into an occupancy bitmap and show how small it packs.

use cryoinr::preprocess::{compress_occupancy, decompress_occupancy, threshold_and_map, OccupancyMap};
use cryoinr::synth::{synthesize, SynthOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = synthesize(&SynthOptions { shape: [64; 3], ..SynthOptions::default() })?;
    for threshold in [0.0f32, 0.05, 0.2] {
        let (occ, meta) = threshold_and_map(&grid, threshold)?;
        let blob = compress_occupancy(&occ);
        assert_eq!(decompress_occupancy(&blob)?, occ);
        println!(
            "threshold {threshold:<4}  occupied {:>6} of {}  blob {:>6} bytes  scale {:?}",
            occ.popcount(),
            occ.len(),
            blob.len(),
            meta.density_scale
        );
    }
    let empty = compress_occupancy(&OccupancyMap::empty([64; 3]));
    println!("empty 64^3 bitmap: {} bytes", empty.len());
    Ok(())
}
