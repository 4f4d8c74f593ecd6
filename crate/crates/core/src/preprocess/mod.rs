//! Thresholding, occupancy maps and chunked point storage.
//!
//! A volume is reduced to the voxels whose density is strictly above a
//! threshold. Their positions are recorded in a bit-packed [`OccupancyMap`];
//! their densities, divided by the largest kept magnitude, become training
//! targets written to a [`PointChunkStore`].

mod chunk_store;
mod occupancy;

use std::io;
use std::path::Path;

use thiserror::Error;

use crate::mrc::VoxelGrid;

pub use chunk_store::{PointChunkStore, PointRecord};
pub use occupancy::{compress_occupancy, decompress_occupancy, OccupancyMap};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("threshold must be finite, got {0}")]
    InvalidThreshold(f32),
    #[error("no voxel exceeds the density threshold")]
    EmptySelection,
    #[error("corrupt occupancy stream: {0}")]
    CorruptStream(String),
    #[error("occupancy dims {occ:?} do not match grid dims {grid:?}")]
    DimsMismatch { occ: [usize; 3], grid: [usize; 3] },
    #[error("chunk size must be positive")]
    InvalidChunkSize,
    #[error("bad chunk store: {0}")]
    BadChunkStore(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// How voxel indices map to normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CoordConvention {
    /// `a = i / (n - 1)`, 0 on degenerate axes: corner voxels sit at 0 and 1.
    UnitCorners = 1,
}

impl CoordConvention {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Self::UnitCorners),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationMeta {
    pub threshold: f32,
    /// Largest kept |density|; `None` when nothing passed the threshold.
    pub density_scale: Option<f32>,
    pub coords: CoordConvention,
}

impl NormalizationMeta {
    pub fn scale(&self) -> Result<f32, PreprocessError> {
        self.density_scale.ok_or(PreprocessError::EmptySelection)
    }
}

/// Marks voxels with density strictly above `threshold`.
pub fn threshold_and_map(
    grid: &VoxelGrid,
    threshold: f32,
) -> Result<(OccupancyMap, NormalizationMeta), PreprocessError> {
    if !threshold.is_finite() {
        return Err(PreprocessError::InvalidThreshold(threshold));
    }
    let occ = OccupancyMap::from_fn(grid.dims(), |i| grid.data[i] > threshold);
    let max_abs = occ.iter_ones().map(|i| grid.data[i].abs()).fold(0.0f32, f32::max);
    let density_scale = match occ.popcount() {
        0 => None,
        // only reachable with a negative threshold and exact zeros kept
        _ if max_abs == 0.0 => Some(1.0),
        _ => Some(max_abs),
    };
    Ok((occ, NormalizationMeta { threshold, density_scale, coords: CoordConvention::UnitCorners }))
}

pub fn normalize_coordinates(index: [usize; 3], dims: [usize; 3]) -> [f32; 3] {
    let mut out = [0.0f32; 3];
    for a in 0..3 {
        if dims[a] > 1 {
            out[a] = (index[a] as f64 / (dims[a] - 1) as f64) as f32;
        }
    }
    out
}

/// Normalized coordinates of linear voxel index `i`.
pub fn voxel_coordinates(i: usize, dims: [usize; 3]) -> [f32; 3] {
    let idx = [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])];
    normalize_coordinates(idx, dims)
}

/// Training points for the occupied voxels of `grid`, in raster order.
pub fn occupied_points<'a>(
    grid: &'a VoxelGrid,
    occ: &'a OccupancyMap,
    scale: f32,
) -> impl Iterator<Item = PointRecord> + 'a {
    let dims = grid.dims();
    occ.iter_ones().map(move |i| PointRecord { xyz: voxel_coordinates(i, dims), density: grid.data[i] / scale })
}

pub fn build_chunk_store(
    grid: &VoxelGrid,
    occ: &OccupancyMap,
    meta: &NormalizationMeta,
    chunk_size: usize,
    file_id: u32,
    path: impl AsRef<Path>,
) -> Result<PointChunkStore, PreprocessError> {
    if occ.dims() != grid.dims() {
        return Err(PreprocessError::DimsMismatch { occ: occ.dims(), grid: grid.dims() });
    }
    match meta.density_scale {
        Some(scale) => PointChunkStore::create(path, file_id, chunk_size, occupied_points(grid, occ, scale)),
        None => PointChunkStore::create(path, file_id, chunk_size, std::iter::empty()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_pass_and_all_filtered() {
        let g = VoxelGrid::new([2, 2, 2], vec![0.5; 8]).unwrap();
        let (occ, meta) = threshold_and_map(&g, 0.0).unwrap();
        assert_eq!(occ.bits(), &[0xFF]);
        assert_eq!(occ.popcount(), 8);
        assert_eq!(meta.density_scale, Some(0.5));

        let (occ, meta) = threshold_and_map(&g, 1.0).unwrap();
        assert_eq!(occ.popcount(), 0);
        assert!(matches!(meta.scale(), Err(PreprocessError::EmptySelection)));
    }

    #[test]
    fn strict_threshold_and_packing() {
        let g = VoxelGrid::new([2, 1, 1], vec![-0.3, 0.2]).unwrap();
        let (occ, meta) = threshold_and_map(&g, 0.0).unwrap();
        assert_eq!(occ.bits(), &[0b10]);
        assert_eq!(meta.density_scale, Some(0.2));
        // ties are dropped
        let (occ, _) = threshold_and_map(&g, 0.2).unwrap();
        assert_eq!(occ.popcount(), 0);
    }

    #[test]
    fn rejects_non_finite_threshold() {
        let g = VoxelGrid::new([1, 1, 1], vec![1.0]).unwrap();
        assert!(threshold_and_map(&g, f32::NAN).is_err());
        assert!(threshold_and_map(&g, f32::INFINITY).is_err());
    }

    #[test]
    fn coordinate_normalization() {
        assert_eq!(normalize_coordinates([0, 0, 0], [7, 3, 9]), [0.0, 0.0, 0.0]);
        assert_eq!(normalize_coordinates([6, 2, 8], [7, 3, 9]), [1.0, 1.0, 1.0]);
        assert_eq!(normalize_coordinates([2, 0, 1], [5, 1, 3]), [0.5, 0.0, 0.5]);
    }

    #[test]
    fn single_point_store() {
        let dir = tempfile::tempdir().unwrap();
        let g = VoxelGrid::new([2, 1, 1], vec![-0.3, 0.2]).unwrap();
        let (occ, meta) = threshold_and_map(&g, 0.0).unwrap();
        let store = build_chunk_store(&g, &occ, &meta, 1_000_000, 0, dir.path().join("a")).unwrap();
        assert_eq!(store.chunk_count(), 1);
        assert_eq!(store.read_chunk(0).unwrap(), vec![PointRecord { xyz: [1.0, 0.0, 0.0], density: 1.0 }]);
    }

    #[test]
    fn empty_selection_store() {
        let dir = tempfile::tempdir().unwrap();
        let g = VoxelGrid::new([2, 2, 1], vec![-1.0; 4]).unwrap();
        let (occ, meta) = threshold_and_map(&g, 0.0).unwrap();
        let store = build_chunk_store(&g, &occ, &meta, 10, 0, dir.path().join("e")).unwrap();
        assert_eq!(store.chunk_count(), 0);
    }

    #[test]
    fn ceiling_division_of_chunks() {
        // 2.5M points at 1M per chunk, scaled down 1000x to keep the file small
        let dir = tempfile::tempdir().unwrap();
        let g = VoxelGrid::new([50, 50, 1], vec![1.0; 2500]).unwrap();
        let (occ, meta) = threshold_and_map(&g, 0.0).unwrap();
        let store = build_chunk_store(&g, &occ, &meta, 1000, 0, dir.path().join("c")).unwrap();
        let sizes: Vec<_> = (0..store.chunk_count()).map(|k| store.chunk_len(k)).collect();
        assert_eq!(sizes, vec![1000, 1000, 500]);
    }

    #[test]
    fn negative_threshold_scales_by_magnitude() {
        let g = VoxelGrid::new([3, 1, 1], vec![-0.4, -0.1, 0.2]).unwrap();
        let (occ, meta) = threshold_and_map(&g, -0.5).unwrap();
        assert_eq!(occ.popcount(), 3);
        assert_eq!(meta.density_scale, Some(0.4));
    }
}
