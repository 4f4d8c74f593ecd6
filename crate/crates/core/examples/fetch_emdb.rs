//! Download one EMDB map and print its grid. Needs network access.
//!
//! cargo run --example fetch_emdb -- EMD-1234 [out.mrc]

use cryoinr::fetch::{fetch_map, EMDB_BASE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let accession = args.next().ok_or("usage: fetch_emdb EMD-NNNN [out.mrc]")?;
    let fetched = fetch_map(&accession, EMDB_BASE)?;
    println!("{} -> {:?} voxels, {} bytes", fetched.url, fetched.grid.dims(), fetched.bytes.len());
    if let Some(out) = args.next() {
        std::fs::write(&out, &fetched.bytes)?;
        println!("wrote {out}");
    }
    Ok(())
}
