//! Read an MRC file (or build a small one), print its header and write it back.
//!
//! cargo run --example mrc_roundtrip -- [in.mrc] [out.mrc]

use cryoinr::mrc::{read_mrc, write_mrc, VoxelGrid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let grid = match args.next() {
        Some(path) => read_mrc(&std::fs::read(path)?)?,
        None => {
            let data = (0..4 * 3 * 2).map(|i| i as f32 * 0.25).collect();
            let mut g = VoxelGrid::new([4, 3, 2], data)?;
            g.header.cell = [4.0, 3.0, 2.0];
            g
        }
    };
    let h = &grid.header;
    println!("dims   {:?}", grid.dims());
    println!("cell   {:?} angles {:?}", h.cell, h.cell_angles);
    println!("origin {:?} start {:?}", h.origin, h.start);
    println!("min {} max {} mean {}", h.dmin, h.dmax, h.dmean);

    let bytes = write_mrc(&grid);
    let back = read_mrc(&bytes)?;
    assert_eq!(back.data.len(), grid.data.len());
    println!("round trip ok, {} bytes", bytes.len());
    if let Some(out) = args.next() {
        std::fs::write(&out, &bytes)?;
        println!("wrote {out}");
    }
    Ok(())
}
