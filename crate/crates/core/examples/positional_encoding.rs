//! Print the positional encoding of a coordinate and the layout of one network input row.
//!
//! cargo run --example positional_encoding -- [p]

use cryoinr::inr::{encode_point, positional_encode, INPUT_DIM, LATENT_DIM};

fn main() {
    let p: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    for (k, pair) in positional_encode(p).chunks(2).enumerate() {
        println!("2^{k} pi p: sin {:+.6}  cos {:+.6}", pair[0], pair[1]);
    }
    let row = encode_point([p, 0.5, 1.0], &[0.0; LATENT_DIM]).expect("latent has the right length");
    assert_eq!(row.len(), INPUT_DIM);
    println!("input row: 3 coords + 60 encoded + {LATENT_DIM} latent = {INPUT_DIM} values");
}
