//! Reading and writing MRC2014 volumes.
//!
//! Only the parts of the format that matter for density maps are modelled:
//! the 1024-byte main header and a dense 3-D array of values. Extended
//! headers are skipped on read and never written. Integer modes 0 and 1 are
//! promoted to `f32` on read; everything written is mode 2, little-endian.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

pub const HEADER_SIZE: usize = 1024;

const MAP_MAGIC: [u8; 4] = *b"MAP ";
const MAGIC_OFFSET: usize = 208;
const STAMP_LITTLE: [u8; 4] = [0x44, 0x44, 0x00, 0x00];
const LABELS_SIZE: usize = 800;
const EXTRA_SIZE: usize = 92;

#[derive(Debug, Error)]
pub enum MrcError {
    #[error("truncated MRC data: need {expected} bytes, have {found}")]
    TruncatedFile { expected: u64, found: u64 },
    #[error("unsupported MRC mode {0} (only 0, 1 and 2 are readable)")]
    UnsupportedMode(i32),
    #[error("missing \"MAP \" signature at byte 208")]
    BadMagic,
    #[error("invalid grid dimensions {0} x {1} x {2}")]
    InvalidDims(i64, i64, i64),
    #[error("data length {found} does not match {nx} x {ny} x {nz}")]
    DataLength { nx: usize, ny: usize, nz: usize, found: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ByteOrder {
    Little,
    Big,
}

/// Decoded MRC2014 main header.
#[derive(Debug, Clone, PartialEq)]
pub struct MrcHeader {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Data mode as found on disk; grids produced by this crate always carry 2.
    pub mode: i32,
    pub start: [i32; 3],
    /// MX, MY, MZ sampling intervals.
    pub sampling: [i32; 3],
    /// Cell edge lengths in angstroms.
    pub cell: [f32; 3],
    /// Cell angles in degrees.
    pub cell_angles: [f32; 3],
    /// MAPC, MAPR, MAPS.
    pub axis_map: [i32; 3],
    pub dmin: f32,
    pub dmax: f32,
    pub dmean: f32,
    pub ispg: i32,
    pub nsymbt: u32,
    pub exttyp: [u8; 4],
    pub nversion: i32,
    /// Words 25-26 and 29-49, kept verbatim.
    pub extra: Vec<u8>,
    /// Origin in angstroms.
    pub origin: [f32; 3],
    pub map: [u8; 4],
    pub machine_stamp: [u8; 4],
    pub rms: f32,
    pub nlabl: i32,
    pub labels: Vec<u8>,
}

impl MrcHeader {
    /// A fresh mode-2 header for a grid of the given size with a 1 Å voxel.
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self {
            nx,
            ny,
            nz,
            mode: 2,
            start: [0; 3],
            sampling: [nx as i32, ny as i32, nz as i32],
            cell: [nx as f32, ny as f32, nz as f32],
            cell_angles: [90.0; 3],
            axis_map: [1, 2, 3],
            dmin: 0.0,
            dmax: 0.0,
            dmean: 0.0,
            ispg: 1,
            nsymbt: 0,
            exttyp: [0; 4],
            nversion: 20140,
            extra: vec![0; EXTRA_SIZE],
            origin: [0.0; 3],
            map: MAP_MAGIC,
            machine_stamp: STAMP_LITTLE,
            rms: 0.0,
            nlabl: 0,
            labels: vec![0; LABELS_SIZE],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn voxel_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Statistics are meaningful only when dmax >= dmin.
    pub fn stats_valid(&self) -> bool {
        self.dmax >= self.dmin
    }
}

/// Dense scalar field, x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub header: MrcHeader,
    pub data: Vec<f32>,
}

impl VoxelGrid {
    /// Builds a grid with a default header and statistics computed from `data`.
    pub fn new(dims: [usize; 3], data: Vec<f32>) -> Result<Self, MrcError> {
        Self::with_header(MrcHeader::new(dims[0], dims[1], dims[2]), data)
    }

    pub fn with_header(mut header: MrcHeader, data: Vec<f32>) -> Result<Self, MrcError> {
        let [nx, ny, nz] = header.dims();
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(MrcError::InvalidDims(nx as i64, ny as i64, nz as i64));
        }
        if data.len() != nx * ny * nz {
            return Err(MrcError::DataLength { nx, ny, nz, found: data.len() });
        }
        header.mode = 2;
        let mut grid = Self { header, data };
        grid.update_stats();
        Ok(grid)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.header.dims()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.header.nx * (y + self.header.ny * z)
    }

    /// Inverse of [`VoxelGrid::index`].
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let (nx, ny) = (self.header.nx, self.header.ny);
        (i % nx, (i / nx) % ny, i / (nx * ny))
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    /// Recomputes dmin, dmax, dmean and rms from the data.
    pub fn update_stats(&mut self) {
        let (dmin, dmax, dmean, rms) = statistics(&self.data);
        self.header.dmin = dmin;
        self.header.dmax = dmax;
        self.header.dmean = dmean;
        self.header.rms = rms;
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, MrcError> {
        read_mrc(&fs::read(path)?)
    }

    pub fn to_path(&self, path: impl AsRef<Path>) -> Result<(), MrcError> {
        crate::io_util::write_atomic(path.as_ref(), &write_mrc(self))?;
        Ok(())
    }
}

fn statistics(data: &[f32]) -> (f32, f32, f32, f32) {
    if data.is_empty() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    let mut sum = 0.0f64;
    for &v in data {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v as f64;
    }
    let mean = sum / data.len() as f64;
    let var = data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / data.len() as f64;
    (lo, hi, mean as f32, var.sqrt() as f32)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Accept files whose "MAP " signature is missing (pre-2000 CCP4 files).
    pub allow_missing_magic: bool,
}

pub fn read_mrc(bytes: &[u8]) -> Result<VoxelGrid, MrcError> {
    read_mrc_with(bytes, ReadOptions::default())
}

pub fn read_mrc_with(bytes: &[u8], opts: ReadOptions) -> Result<VoxelGrid, MrcError> {
    if bytes.len() < HEADER_SIZE {
        return Err(MrcError::TruncatedFile { expected: HEADER_SIZE as u64, found: bytes.len() as u64 });
    }
    let mut machine_stamp = [0u8; 4];
    machine_stamp.copy_from_slice(&bytes[212..216]);
    let order = detect_order(bytes, machine_stamp);
    let word = |w: usize| -> [u8; 4] {
        let mut b = [0u8; 4];
        b.copy_from_slice(&bytes[4 * w..4 * w + 4]);
        b
    };
    let int = |w: usize| match order {
        ByteOrder::Little => i32::from_le_bytes(word(w)),
        ByteOrder::Big => i32::from_be_bytes(word(w)),
    };
    let float = |w: usize| match order {
        ByteOrder::Little => f32::from_le_bytes(word(w)),
        ByteOrder::Big => f32::from_be_bytes(word(w)),
    };

    let (nx, ny, nz) = (int(0), int(1), int(2));
    if nx < 1 || ny < 1 || nz < 1 {
        return Err(MrcError::InvalidDims(nx as i64, ny as i64, nz as i64));
    }
    let mode = int(3);
    let value_size = match mode {
        0 => 1,
        1 => 2,
        2 => 4,
        other => return Err(MrcError::UnsupportedMode(other)),
    };

    let mut map = [0u8; 4];
    map.copy_from_slice(&bytes[MAGIC_OFFSET..MAGIC_OFFSET + 4]);
    if map != MAP_MAGIC && !opts.allow_missing_magic {
        return Err(MrcError::BadMagic);
    }

    let nsymbt = int(23).max(0) as u32;
    let (nx, ny, nz) = (nx as usize, ny as usize, nz as usize);
    let count = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .ok_or(MrcError::InvalidDims(nx as i64, ny as i64, nz as i64))?;
    let offset = HEADER_SIZE + nsymbt as usize;
    let expected = count as u64 * value_size as u64 + offset as u64;
    if (bytes.len() as u64) < expected {
        return Err(MrcError::TruncatedFile { expected, found: bytes.len() as u64 });
    }

    let payload = &bytes[offset..offset + count * value_size];
    let data: Vec<f32> = match mode {
        0 => payload.iter().map(|&b| b as i8 as f32).collect(),
        1 => payload
            .chunks_exact(2)
            .map(|c| {
                let b = [c[0], c[1]];
                let v = match order {
                    ByteOrder::Little => i16::from_le_bytes(b),
                    ByteOrder::Big => i16::from_be_bytes(b),
                };
                v as f32
            })
            .collect(),
        _ => payload
            .chunks_exact(4)
            .map(|c| {
                let b = [c[0], c[1], c[2], c[3]];
                match order {
                    ByteOrder::Little => f32::from_le_bytes(b),
                    ByteOrder::Big => f32::from_be_bytes(b),
                }
            })
            .collect(),
    };

    let mut extra = Vec::with_capacity(EXTRA_SIZE);
    extra.extend_from_slice(&bytes[24 * 4..26 * 4]);
    extra.extend_from_slice(&bytes[28 * 4..49 * 4]);

    let header = MrcHeader {
        nx,
        ny,
        nz,
        // integer modes are promoted, so the in-memory grid is always mode 2
        mode: 2,
        start: [int(4), int(5), int(6)],
        sampling: [int(7), int(8), int(9)],
        cell: [float(10), float(11), float(12)],
        cell_angles: [float(13), float(14), float(15)],
        axis_map: [int(16), int(17), int(18)],
        dmin: float(19),
        dmax: float(20),
        dmean: float(21),
        ispg: int(22),
        nsymbt,
        exttyp: word(26),
        nversion: int(27),
        extra,
        origin: [float(49), float(50), float(51)],
        map,
        machine_stamp,
        rms: float(54),
        nlabl: int(55),
        labels: bytes[224..HEADER_SIZE].to_vec(),
    };
    Ok(VoxelGrid { header, data })
}

fn detect_order(bytes: &[u8], stamp: [u8; 4]) -> ByteOrder {
    match stamp[0] {
        0x44 | 0x41 => ByteOrder::Little,
        0x11 => ByteOrder::Big,
        _ => {
            // No usable stamp: pick whichever byte order gives a sane mode word.
            let mut b = [0u8; 4];
            b.copy_from_slice(&bytes[12..16]);
            let le = i32::from_le_bytes(b);
            if (0..=16).contains(&le) {
                ByteOrder::Little
            } else if (0..=16).contains(&i32::from_be_bytes(b)) {
                ByteOrder::Big
            } else {
                ByteOrder::Little
            }
        }
    }
}

/// Serializes a grid as a little-endian mode-2 file with fresh statistics.
pub fn write_mrc(grid: &VoxelGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_SIZE + 4 * grid.data.len());
    write_mrc_to(grid, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn write_mrc_to<W: Write>(grid: &VoxelGrid, mut w: W) -> io::Result<()> {
    let h = &grid.header;
    let (dmin, dmax, dmean, rms) = statistics(&grid.data);
    let mut hdr = [0u8; HEADER_SIZE];
    {
        let mut put = |word: usize, bytes: [u8; 4]| {
            hdr[4 * word..4 * word + 4].copy_from_slice(&bytes);
        };
        put(0, (h.nx as i32).to_le_bytes());
        put(1, (h.ny as i32).to_le_bytes());
        put(2, (h.nz as i32).to_le_bytes());
        put(3, 2i32.to_le_bytes());
        for i in 0..3 {
            put(4 + i, h.start[i].to_le_bytes());
            put(7 + i, h.sampling[i].to_le_bytes());
            put(10 + i, h.cell[i].to_le_bytes());
            put(13 + i, h.cell_angles[i].to_le_bytes());
            put(16 + i, h.axis_map[i].to_le_bytes());
            put(49 + i, h.origin[i].to_le_bytes());
        }
        put(19, dmin.to_le_bytes());
        put(20, dmax.to_le_bytes());
        put(21, dmean.to_le_bytes());
        put(22, h.ispg.to_le_bytes());
        put(23, 0i32.to_le_bytes());
        put(26, h.exttyp);
        put(27, h.nversion.to_le_bytes());
        put(52, MAP_MAGIC);
        put(53, STAMP_LITTLE);
        put(54, rms.to_le_bytes());
        put(55, h.nlabl.to_le_bytes());
    }
    if h.extra.len() == EXTRA_SIZE {
        hdr[24 * 4..26 * 4].copy_from_slice(&h.extra[..8]);
        hdr[28 * 4..49 * 4].copy_from_slice(&h.extra[8..]);
    }
    let n = h.labels.len().min(LABELS_SIZE);
    hdr[224..224 + n].copy_from_slice(&h.labels[..n]);
    w.write_all(&hdr)?;

    let mut buf = Vec::with_capacity(4 * grid.data.len());
    for v in &grid.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}
