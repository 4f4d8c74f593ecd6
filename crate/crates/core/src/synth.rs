//! Seeded synthetic density maps made of anisotropic Gaussian blobs.
//!
//! Each blob is cut off at three standard deviations (Mahalanobis radius 3),
//! so without noise the background is exactly zero and a zero threshold keeps
//! only the blobs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

use crate::mrc::VoxelGrid;

pub const MIN_SHAPE: usize = 8;
/// Squared Mahalanobis radius beyond which a blob contributes nothing.
pub const CUTOFF_R2: f64 = 9.0;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("every axis needs at least {MIN_SHAPE} voxels, got {0:?}")]
    ShapeTooSmall([usize; 3]),
    #[error("noise sigma must be finite and non-negative, got {0}")]
    BadNoise(f32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub shape: [usize; 3],
    pub blobs: usize,
    pub seed: u64,
    /// Standard deviation of additive Gaussian noise on every voxel.
    pub noise: Option<f32>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { shape: [64; 3], blobs: 8, seed: 42, noise: None }
    }
}

/// Axis-aligned Gaussian in voxel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub center: [f64; 3],
    pub sigma: [f64; 3],
    pub amplitude: f64,
}

impl Blob {
    pub fn value_at(&self, p: [f64; 3]) -> f64 {
        let r2: f64 = (0..3).map(|a| ((p[a] - self.center[a]) / self.sigma[a]).powi(2)).sum();
        if r2 > CUTOFF_R2 {
            0.0
        } else {
            self.amplitude * (-0.5 * r2).exp()
        }
    }
}

/// Blob parameters drawn from `opts.seed`.
pub fn blobs(opts: &SynthOptions) -> Vec<Blob> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let unit = Uniform::new(0.0f64, 1.0).unwrap();
    let amp = Uniform::new_inclusive(0.25f64, 1.0).unwrap();
    (0..opts.blobs)
        .map(|_| {
            let mut center = [0.0; 3];
            let mut sigma = [0.0; 3];
            for a in 0..3 {
                let n = opts.shape[a] as f64;
                center[a] = (0.2 + 0.6 * unit.sample(&mut rng)) * (n - 1.0);
                sigma[a] = (0.04 + 0.04 * unit.sample(&mut rng)) * n;
            }
            Blob { center, sigma, amplitude: amp.sample(&mut rng) }
        })
        .collect()
}

/// Noise-free field value at voxel position `p`.
pub fn field_at(blobs: &[Blob], p: [f64; 3]) -> f64 {
    blobs.iter().map(|b| b.value_at(p)).sum()
}

pub fn synthesize(opts: &SynthOptions) -> Result<VoxelGrid, SynthError> {
    if opts.shape.iter().any(|&n| n < MIN_SHAPE) {
        return Err(SynthError::ShapeTooSmall(opts.shape));
    }
    let [nx, ny, nz] = opts.shape;
    let bs = blobs(opts);
    let mut data = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                data.push(field_at(&bs, [x as f64, y as f64, z as f64]) as f32);
            }
        }
    }
    if let Some(sigma) = opts.noise {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(SynthError::BadNoise(sigma));
        }
        let normal = Normal::new(0.0f32, sigma).map_err(|_| SynthError::BadNoise(sigma))?;
        // separate stream so the blobs do not depend on the noise flag
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6e6f_6973_6500);
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }
    let mut grid = VoxelGrid::new(opts.shape, data).expect("data length matches shape");
    grid.header.cell = opts.shape.map(|n| n as f32);
    Ok(grid)
}
