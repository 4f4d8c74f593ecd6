//! Whole-pipeline compression and reconstruction.
//!
//! [`compress`] reads each MRC input, keeps the voxels above the threshold,
//! trains one shared network with a latent per file and packs the result into
//! an [`Archive`]. [`Archive::decompress`] evaluates the network at every
//! occupied voxel and writes zero everywhere else.

mod archive;

use std::io;

use thiserror::Error;

use crate::mrc::{read_mrc, MrcError, MrcHeader, VoxelGrid};
use crate::preprocess::{
    build_chunk_store, compress_occupancy, decompress_occupancy, threshold_and_map, voxel_coordinates, PreprocessError,
};
use crate::trainer::{train, TrainConfig, TrainError, TrainLog};

pub use archive::{Archive, FileRecord, GridInfo, MAGIC, VERSION};

/// Value written to voxels that were at or below the threshold.
pub const FILL: f32 = 0.0;

/// Points pushed through the network per decoding step.
pub const DECODE_CHUNK: usize = 1 << 16;
const DECODE_BATCH: usize = 4096;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("no input files")]
    NoInputs,
    #[error("duplicate input name {0}")]
    DuplicateName(String),
    #[error("{name}: {source}")]
    InFile {
        name: String,
        #[source]
        source: Box<CodecError>,
    },
    #[error("no file named {name} in archive (available: {})", available.join(", "))]
    UnknownFile { name: String, available: Vec<String> },
    #[error("corrupt archive: {0}")]
    CorruptArchive(String),
    #[error("unsupported archive version {0}")]
    UnsupportedVersion(u32),
    #[error("volume has {0} voxels, more than the archive can describe")]
    TooLarge(usize),
    #[error(transparent)]
    Mrc(#[from] MrcError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CodecError {
    fn in_file(self, name: &str) -> Self {
        Self::InFile { name: name.to_string(), source: Box::new(self) }
    }
}

#[derive(Debug, Clone)]
pub struct CompressOptions {
    pub threshold: f32,
    pub train: TrainConfig,
}

impl Default for CompressOptions {
    fn default() -> Self {
        Self { threshold: 0.0, train: TrainConfig::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Compressed {
    pub archive: Archive,
    pub log: TrainLog,
}

/// Compresses named MRC byte streams into one archive. File ids follow input order.
pub fn compress<N, B>(inputs: &[(N, B)], opts: &CompressOptions) -> Result<Compressed, CodecError>
where
    N: AsRef<str>,
    B: AsRef<[u8]>,
{
    if inputs.is_empty() {
        return Err(CodecError::NoInputs);
    }
    let mut seen: Vec<&str> = inputs.iter().map(|(n, _)| n.as_ref()).collect();
    seen.sort_unstable();
    if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
        return Err(CodecError::DuplicateName(w[0].to_string()));
    }
    opts.train.validate()?;

    let work = tempfile::tempdir()?;
    let mut stores = Vec::with_capacity(inputs.len());
    let mut files = Vec::with_capacity(inputs.len());
    for (i, (name, bytes)) in inputs.iter().enumerate() {
        let name = name.as_ref();
        let bytes = bytes.as_ref();
        let file_id = i as u32;
        let prepared = (|| -> Result<_, CodecError> {
            let grid = read_mrc(bytes)?;
            let (occ, meta) = threshold_and_map(&grid, opts.threshold)?;
            let path = work.path().join(format!("{i}.chnk"));
            let store = build_chunk_store(&grid, &occ, &meta, opts.train.chunk_size, file_id, path)?;
            let record = FileRecord {
                name: name.to_string(),
                file_id,
                grid: grid_info(&grid.header)?,
                meta,
                original_size: bytes.len() as u64,
                popcount: occ.popcount() as u64,
                occupancy: compress_occupancy(&occ),
            };
            Ok((store, record))
        })();
        let (store, record) = prepared.map_err(|e| e.in_file(name))?;
        stores.push(store);
        files.push(record);
    }

    let (model, log) = train(&stores, &opts.train)?;
    let archive = Archive { model, files };
    archive.validate()?;
    Ok(Compressed { archive, log })
}

fn grid_info(h: &MrcHeader) -> Result<GridInfo, CodecError> {
    let dim = |n: usize| u32::try_from(n).map_err(|_| CodecError::TooLarge(h.voxel_count()));
    Ok(GridInfo {
        dims: [dim(h.nx)?, dim(h.ny)?, dim(h.nz)?],
        start: h.start,
        sampling: h.sampling,
        cell: h.cell,
        cell_angles: h.cell_angles,
        axis_map: h.axis_map,
        origin: h.origin,
    })
}

/// Keeps a reconstructed occupied voxel strictly above the threshold and off the fill value,
/// so thresholding the output recovers the stored occupancy exactly.
pub fn occupied_value(v: f32, threshold: f32) -> f32 {
    let v = if v.is_nan() || v <= threshold { threshold.next_up() } else { v };
    if v == FILL {
        FILL.next_up()
    } else {
        v
    }
}

impl Archive {
    pub fn parse(bytes: &[u8]) -> Result<Self, CodecError> {
        Self::from_bytes(bytes)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|f| f.name.as_str())
    }

    pub fn file(&self, name: &str) -> Result<&FileRecord, CodecError> {
        self.files.iter().find(|f| f.name == name).ok_or_else(|| CodecError::UnknownFile {
            name: name.to_string(),
            available: self.names().map(str::to_string).collect(),
        })
    }

    /// Reconstructs one file as a mode-2 grid.
    pub fn decompress(&self, name: &str) -> Result<VoxelGrid, CodecError> {
        let rec = self.file(name)?;
        self.decompress_record(rec, rec.file_id)
    }

    /// Reconstructs `name`'s occupied voxels using another file's latent.
    pub fn decompress_with_latent(&self, name: &str, latent_of: &str) -> Result<VoxelGrid, CodecError> {
        let rec = self.file(name)?;
        let other = self.file(latent_of)?;
        self.decompress_record(rec, other.file_id)
    }

    fn decompress_record(&self, rec: &FileRecord, latent_id: u32) -> Result<VoxelGrid, CodecError> {
        let corrupt = |m: String| CodecError::CorruptArchive(format!("{}: {m}", rec.name));
        let occ = decompress_occupancy(&rec.occupancy).map_err(|e| corrupt(e.to_string()))?;
        let g = &rec.grid;
        let dims = g.dims.map(|d| d as usize);
        if occ.dims() != dims {
            return Err(corrupt(format!("occupancy dims {:?} differ from grid dims {dims:?}", occ.dims())));
        }
        if occ.popcount() as u64 != rec.popcount {
            return Err(corrupt(format!("occupancy has {} voxels, record says {}", occ.popcount(), rec.popcount)));
        }

        let mut data = vec![FILL; occ.len()];
        if occ.popcount() > 0 {
            let scale = rec.meta.scale().map_err(|e| corrupt(e.to_string()))?;
            let threshold = rec.meta.threshold;
            let mut ones = occ.iter_ones().peekable();
            let mut idx = Vec::with_capacity(DECODE_CHUNK);
            let mut points = Vec::with_capacity(DECODE_CHUNK);
            while ones.peek().is_some() {
                idx.clear();
                idx.extend(ones.by_ref().take(DECODE_CHUNK));
                points.clear();
                points.extend(idx.iter().map(|&i| voxel_coordinates(i, dims)));
                let pred = self.model.predict(latent_id, &points, DECODE_BATCH)?;
                for (&i, p) in idx.iter().zip(pred) {
                    data[i] = occupied_value(p * scale, threshold);
                }
            }
        }

        let mut header = MrcHeader::new(dims[0], dims[1], dims[2]);
        header.start = g.start;
        header.sampling = g.sampling;
        header.cell = g.cell;
        header.cell_angles = g.cell_angles;
        header.axis_map = g.axis_map;
        header.origin = g.origin;
        Ok(VoxelGrid::with_header(header, data)?)
    }

    /// Ratios against an archive of `archive_bytes` bytes (normally `to_bytes().len()`).
    pub fn compression_ratio(&self, archive_bytes: u64) -> RatioReport {
        let original_bytes: u64 = self.files.iter().map(|f| f.original_size).sum();
        let blobs: u64 = self.files.iter().map(|f| f.occupancy.len() as u64).sum();
        let shared = archive_bytes.saturating_sub(blobs) as f64 / self.files.len().max(1) as f64;
        let per_file = self
            .files
            .iter()
            .map(|f| FileRatio {
                name: f.name.clone(),
                original_bytes: f.original_size,
                amortized_bytes: shared + f.occupancy.len() as f64,
                ratio: f.original_size as f64 / (shared + f.occupancy.len() as f64),
            })
            .collect();
        RatioReport { original_bytes, archive_bytes, aggregate: ratio(original_bytes, archive_bytes), per_file }
    }
}

/// Original bytes over compressed bytes.
pub fn ratio(original_bytes: u64, compressed_bytes: u64) -> f64 {
    original_bytes as f64 / compressed_bytes as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileRatio {
    pub name: String,
    pub original_bytes: u64,
    /// Own occupancy blob plus an equal share of everything else in the archive.
    pub amortized_bytes: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub original_bytes: u64,
    pub archive_bytes: u64,
    pub aggregate: f64,
    pub per_file: Vec<FileRatio>,
}
