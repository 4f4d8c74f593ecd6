use crate::preprocess::{PointChunkStore, PointRecord, PreprocessError};

use super::TrainError;

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-point hash used for the validation split.
pub fn point_hash(seed: u64, file_id: u32, index: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ file_id as u64) ^ index as u64)
}

/// One side of a train/validation partition of a chunk store.
#[derive(Debug, Clone, Copy)]
pub struct DataView<'a> {
    store: &'a PointChunkStore,
    seed: u64,
    cutoff: u64,
    validation: bool,
}

impl<'a> DataView<'a> {
    pub fn store(&self) -> &'a PointChunkStore {
        self.store
    }

    pub fn is_validation(&self) -> bool {
        self.validation
    }

    pub fn contains(&self, index: usize) -> bool {
        (point_hash(self.seed, self.store.file_id(), index) % 10_000 < self.cutoff) == self.validation
    }

    pub fn len(&self) -> usize {
        (0..self.store.total_records()).filter(|&i| self.contains(i)).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records of chunk `k` that belong to this view.
    pub fn filter_chunk(&self, k: usize, records: Vec<PointRecord>) -> Vec<PointRecord> {
        let start = self.store.chunk_start(k);
        records.into_iter().enumerate().filter(|(j, _)| self.contains(start + j)).map(|(_, r)| r).collect()
    }

    pub fn read_chunk(&self, k: usize) -> Result<Vec<PointRecord>, PreprocessError> {
        Ok(self.filter_chunk(k, self.store.read_chunk(k)?))
    }

    pub fn read_all(&self) -> Result<Vec<PointRecord>, PreprocessError> {
        let mut out = Vec::new();
        for k in 0..self.store.chunk_count() {
            out.extend(self.read_chunk(k)?);
        }
        Ok(out)
    }
}

/// Point `i` goes to validation iff `hash(seed, file_id, i) mod 10000 < fraction * 10000`.
pub fn split_validation(
    store: &PointChunkStore,
    fraction: f64,
    seed: u64,
) -> Result<(DataView<'_>, DataView<'_>), TrainError> {
    if store.is_empty() {
        return Err(TrainError::EmptyStore);
    }
    if !(fraction > 0.0 && fraction < 0.5) {
        return Err(TrainError::InvalidConfig(format!("validation fraction {fraction} outside (0, 0.5)")));
    }
    let cutoff = (fraction * 10_000.0).round() as u64;
    let view = |validation| DataView { store, seed, cutoff, validation };
    Ok((view(false), view(true)))
}
