use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use super::PreprocessError;

/// One bit per voxel, x-fastest raster order, LSB-first within each byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyMap {
    dims: [usize; 3],
    bits: Vec<u8>,
    popcount: usize,
}

impl OccupancyMap {
    pub fn empty(dims: [usize; 3]) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        Self { dims, bits: vec![0; n.div_ceil(8)], popcount: 0 }
    }

    /// Wraps packed bits. Padding bits past the last voxel must be zero.
    pub fn from_bits(dims: [usize; 3], bits: Vec<u8>) -> Result<Self, PreprocessError> {
        let n = dims[0] * dims[1] * dims[2];
        if bits.len() != n.div_ceil(8) {
            return Err(PreprocessError::CorruptStream(format!(
                "expected {} bitmap bytes for {} voxels, found {}",
                n.div_ceil(8),
                n,
                bits.len()
            )));
        }
        if !n.is_multiple_of(8) {
            let tail = bits[bits.len() - 1] >> (n % 8);
            if tail != 0 {
                return Err(PreprocessError::CorruptStream("nonzero padding bits".into()));
            }
        }
        let popcount = bits.iter().map(|b| b.count_ones() as usize).sum();
        Ok(Self { dims, bits, popcount })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize) -> bool) -> Self {
        let mut occ = Self::empty(dims);
        for i in 0..occ.len() {
            if f(i) {
                occ.set(i);
            }
        }
        occ
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Number of voxels (not set bits).
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn popcount(&self) -> usize {
        self.popcount
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i / 8] >> (i % 8) & 1 == 1
    }

    pub fn set(&mut self, i: usize) {
        let mask = 1u8 << (i % 8);
        if self.bits[i / 8] & mask == 0 {
            self.bits[i / 8] |= mask;
            self.popcount += 1;
        }
    }

    /// Linear indices of set bits in raster order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().flat_map(|(byte_idx, &byte)| {
            let mut rest = byte;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(byte_idx * 8 + bit)
            })
        })
    }
}

/// `nx, ny, nz` as u32 LE followed by a raw DEFLATE stream of the packed bits.
pub fn compress_occupancy(occ: &OccupancyMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + occ.bits.len() / 8);
    for d in occ.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let mut enc = DeflateEncoder::new(out, Compression::default());
    enc.write_all(&occ.bits).expect("in-memory deflate");
    enc.finish().expect("in-memory deflate")
}

pub fn decompress_occupancy(bytes: &[u8]) -> Result<OccupancyMap, PreprocessError> {
    if bytes.len() < 12 {
        return Err(PreprocessError::CorruptStream("occupancy blob shorter than its header".into()));
    }
    let dim = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap()) as usize;
    let dims = [dim(0), dim(1), dim(2)];
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| PreprocessError::CorruptStream("occupancy dims overflow".into()))?;
    let expected = n.div_ceil(8);
    let mut bits = Vec::with_capacity(expected);
    // read one byte past the expected size so trailing garbage is detected
    DeflateDecoder::new(&bytes[12..])
        .take(expected as u64 + 1)
        .read_to_end(&mut bits)
        .map_err(|e| PreprocessError::CorruptStream(e.to_string()))?;
    OccupancyMap::from_bits(dims, bits)
}
