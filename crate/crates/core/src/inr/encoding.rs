//! Sinusoidal positional encoding of normalized coordinates.

use ndarray::Array2;

use super::{InrError, Real};

pub const FREQUENCIES: usize = 10;
/// Encoded width of one coordinate axis.
pub const AXIS_DIM: usize = 2 * FREQUENCIES;
/// Raw xyz plus three encoded axes.
pub const COORD_DIM: usize = 3 + 3 * AXIS_DIM;
pub const LATENT_DIM: usize = 64;
pub const INPUT_DIM: usize = COORD_DIM + LATENT_DIM;

/// `(sin(pi t), cos(pi t))` with exact argument reduction, so integer and
/// half-integer `t` give exact zeros and ones.
pub fn sin_cos_pi<T: Real>(t: T) -> (T, T) {
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let mut t = t % two;
    if t < T::zero() {
        t += two;
    }
    let q = (t / half).floor();
    let r = t - q * half;
    let (s, c) = if r <= T::lit(0.25) {
        let a = T::PI() * r;
        (a.sin(), a.cos())
    } else {
        let a = T::PI() * (half - r);
        (a.cos(), a.sin())
    };
    match q.to_u8().unwrap_or(0) & 3 {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

/// `(sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^9 pi p), cos(2^9 pi p))`
pub fn positional_encode<T: Real>(p: T) -> [T; AXIS_DIM] {
    let mut out = [T::zero(); AXIS_DIM];
    let mut scaled = p;
    for k in 0..FREQUENCIES {
        let (s, c) = sin_cos_pi(scaled);
        out[2 * k] = s;
        out[2 * k + 1] = c;
        scaled = scaled + scaled;
    }
    out
}

/// Writes the coordinate part (`[x, y, z, g(x), g(y), g(z)]`) into `row`.
pub fn encode_coords_into<T: Real>(xyz: [T; 3], row: &mut [T]) {
    row[..3].copy_from_slice(&xyz);
    for (a, &p) in xyz.iter().enumerate() {
        let start = 3 + a * AXIS_DIM;
        row[start..start + AXIS_DIM].copy_from_slice(&positional_encode(p));
    }
}

/// `[x, y, z, g(x), g(y), g(z), latent]`, 127 values.
pub fn encode_point<T: Real>(xyz: [T; 3], latent: &[T]) -> Result<Vec<T>, InrError> {
    if latent.len() != LATENT_DIM {
        return Err(InrError::DimensionMismatch { expected: LATENT_DIM, found: latent.len() });
    }
    let mut row = vec![T::zero(); INPUT_DIM];
    encode_coords_into(xyz, &mut row[..COORD_DIM]);
    row[COORD_DIM..].copy_from_slice(latent);
    Ok(row)
}

/// Encodes a batch of points that share one latent vector.
pub fn encode_batch<T: Real>(points: &[[T; 3]], latent: &[T]) -> Result<Array2<T>, InrError> {
    if latent.len() != LATENT_DIM {
        return Err(InrError::DimensionMismatch { expected: LATENT_DIM, found: latent.len() });
    }
    let mut out = Array2::zeros((points.len(), INPUT_DIM));
    for (mut row, &p) in out.rows_mut().into_iter().zip(points) {
        let row = row.as_slice_mut().expect("standard layout");
        encode_coords_into(p, &mut row[..COORD_DIM]);
        row[COORD_DIM..].copy_from_slice(latent);
    }
    Ok(out)
}
