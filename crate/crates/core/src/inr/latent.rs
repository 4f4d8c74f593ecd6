use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use super::encoding::LATENT_DIM;
use super::{InrError, Real};

/// Per-file identifier vectors, in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTable<T> {
    entries: Vec<(u32, Vec<T>)>,
    pub trainable: bool,
}

impl<T: Real> LatentTable<T> {
    /// Draws every component i.i.d. from U[-1, 1].
    pub fn init(file_ids: &[u32], seed: u64) -> Result<Self, InrError> {
        if file_ids.is_empty() {
            return Err(InrError::EmptyFileList);
        }
        let mut seen = HashSet::new();
        if let Some(&dup) = file_ids.iter().find(|&&id| !seen.insert(id)) {
            return Err(InrError::DuplicateFileId(dup));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-1.0f64, 1.0).unwrap();
        let entries =
            file_ids.iter().map(|&id| (id, (0..LATENT_DIM).map(|_| T::lit(dist.sample(&mut rng))).collect())).collect();
        Ok(Self { entries, trainable: true })
    }

    pub fn from_entries(entries: Vec<(u32, Vec<T>)>) -> Result<Self, InrError> {
        let mut seen = HashSet::new();
        for (id, v) in &entries {
            if !seen.insert(*id) {
                return Err(InrError::DuplicateFileId(*id));
            }
            if v.len() != LATENT_DIM {
                return Err(InrError::DimensionMismatch { expected: LATENT_DIM, found: v.len() });
            }
        }
        Ok(Self { entries, trainable: true })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn entries(&self) -> &[(u32, Vec<T>)] {
        &self.entries
    }

    pub fn get(&self, file_id: u32) -> Option<&[T]> {
        self.entries.iter().find(|e| e.0 == file_id).map(|e| e.1.as_slice())
    }

    pub fn get_mut(&mut self, file_id: u32) -> Option<&mut [T]> {
        self.entries.iter_mut().find(|e| e.0 == file_id).map(|e| e.1.as_mut_slice())
    }
}
