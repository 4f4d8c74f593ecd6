//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use cryoinr::inr::{encode_batch, Arch, HiddenStage, MlpParams, COORD_DIM, INPUT_DIM, LATENT_DIM};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Random small net with 127 inputs, one to three hidden stages and up to two residual blocks each.
pub fn random_arch(rng: &mut ChaCha8Rng) -> Arch {
    let stages = rng.random_range(1..=3);
    let hidden = (0..stages)
        .map(|_| HiddenStage { width: rng.random_range(3..=16), residual_blocks: rng.random_range(0..=2) })
        .collect();
    Arch { input: INPUT_DIM, hidden, output: 1 }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

pub struct GradCheck {
    pub arch: String,
    pub checked: usize,
    pub max_rel: f64,
}

/// Compares backprop against central differences of `sum(c * f(x))` for all parameters,
/// every input column and a shared latent vector.
pub fn check_gradients(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = random_arch(&mut rng);
    let mut params = MlpParams::<f64>::init(&arch, seed);
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let n = rng.random_range(1..=4);
    let points: Vec<[f64; 3]> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let latent: Vec<f64> = (0..LATENT_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let upstream = Array2::from_shape_vec((n, 1), c.clone()).unwrap();

    let objective = |p: &MlpParams<f64>, x: &Array2<f64>| -> f64 {
        let y = p.forward(x.view()).unwrap();
        y.column(0).iter().zip(&c).map(|(a, b)| a * b).sum()
    };

    let x = encode_batch(&points, &latent).unwrap();
    let (_, cache) = params.forward_cached(x.view()).unwrap();
    let grads = params.backward(&cache, upstream.view()).unwrap();

    let mut max_rel = 0.0f64;
    let mut checked = 0;
    // central differences at h = 1e-5 carry ~1e-10 absolute noise; below this magnitude compare absolutely
    let floor = 1e-4;

    let analytic: Vec<Vec<f64>> = grads.params.tensors().iter().map(|t| t.to_vec()).collect();
    for (ti, a_t) in analytic.iter().enumerate() {
        for (j, &a) in a_t.iter().enumerate() {
            let mut p = params.clone();
            p.tensors_mut()[ti][j] += FD_STEP;
            let up = objective(&p, &x);
            p.tensors_mut()[ti][j] -= 2.0 * FD_STEP;
            let down = objective(&p, &x);
            let num = (up - down) / (2.0 * FD_STEP);
            max_rel = max_rel.max(rel_err(a, num, floor));
            checked += 1;
        }
    }

    for r in 0..n {
        for col in 0..INPUT_DIM {
            let mut xp = x.clone();
            xp[[r, col]] += FD_STEP;
            let up = objective(&params, &xp);
            xp[[r, col]] -= 2.0 * FD_STEP;
            let down = objective(&params, &xp);
            let num = (up - down) / (2.0 * FD_STEP);
            max_rel = max_rel.max(rel_err(grads.input[[r, col]], num, floor));
            checked += 1;
        }
    }

    // the latent is shared by every row, so its gradient is the column sum
    for k in 0..LATENT_DIM {
        let analytic: f64 = grads.input.column(COORD_DIM + k).sum();
        let mut l = latent.clone();
        l[k] += FD_STEP;
        let up = objective(&params, &encode_batch(&points, &l).unwrap());
        l[k] -= 2.0 * FD_STEP;
        let down = objective(&params, &encode_batch(&points, &l).unwrap());
        let num = (up - down) / (2.0 * FD_STEP);
        max_rel = max_rel.max(rel_err(analytic, num, floor));
        checked += 1;
    }

    GradCheck { arch: arch.to_string(), checked, max_rel }
}

/// Weighted loss written straight from its definition, with an O(N^2) nearest-rank quantile.
pub fn loss_oracle(y: &[f64], yhat: &[f64]) -> f64 {
    let n = y.len();
    let eps = 1e-4;
    let mse: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).collect();
    let mean_abs = y.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let w_value: Vec<f64> = y.iter().map(|v| ((v.abs() + eps) / (mean_abs + eps)).powi(2)).collect();

    // smallest value with at least ceil(0.9 n) values at or below it
    let rank = (9 * n).div_ceil(10);
    let q =
        mse.iter().copied().filter(|&v| mse.iter().filter(|&&u| u <= v).count() >= rank).fold(f64::INFINITY, f64::min);
    let w_error: Vec<f64> = mse.iter().map(|&m| if m > q { 3.0 } else { 1.0 }).collect();

    let raw: Vec<f64> = w_value.iter().zip(&w_error).map(|(a, b)| a * b).collect();
    let mean_raw = raw.iter().sum::<f64>() / n as f64;
    mse.iter().zip(&raw).map(|(m, r)| m * r / mean_raw).sum::<f64>() / n as f64
}

/// Random batch; `kind` 1 makes all |y| equal, `kind` 2 makes all squared errors equal.
pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, kind: u8) -> (Vec<f64>, Vec<f64>) {
    match kind {
        1 => {
            let a = rng.random_range(0.01..1.0);
            let y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { a } else { -a }).collect();
            let yhat = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            (y, yhat)
        }
        2 => {
            // dyadic values keep every squared error bit-identical
            let d = rng.random_range(0..512) as f64 / 1024.0;
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1024..1024) as f64 / 1024.0).collect();
            let yhat = y.iter().map(|v| if rng.random_bool(0.5) { v + d } else { v - d }).collect();
            (y, yhat)
        }
        _ => {
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let yhat = (0..n).map(|_| rng.random_range(-1.2..1.2)).collect();
            (y, yhat)
        }
    }
}

/// Six evaluated points (two per default band) plus two sub-threshold voxels, all dyadic so every
/// relative error is exact: low 0 % and 25 %, medium 12.5 % and 25 %, high 20 % and 50 %.
pub fn six_point_pair() -> (cryoinr::mrc::VoxelGrid, cryoinr::mrc::VoxelGrid) {
    let original = [0.03125f32, 0.0625, 0.125, 0.09375, 0.15625, 1.0, 0.0, -0.5];
    let recon = [0.03125f32, 0.078125, 0.140625, 0.0703125, 0.1875, 0.5, 0.3, 0.0];
    let g = |v: &[f32]| cryoinr::mrc::VoxelGrid::new([2, 2, 2], v.to_vec()).unwrap();
    (g(&original), g(&recon))
}

/// Hand-computed report for [`six_point_pair`]: (count, mean %, median %, within-20 share) per band.
pub const SIX_POINT_BANDS: [(usize, f64, f64, f64); 3] =
    [(2, 12.5, 0.0, 0.5), (2, 18.75, 12.5, 0.5), (2, 35.0, 20.0, 0.5)];

/// Squared errors 0, 1/4096, 1/4096, 9/16384, 1/1024, 1/4 averaged over six points.
pub const SIX_POINT_MSE: f64 = (33.0 / 16384.0 + 0.25) / 6.0;

/// Original spans -0.5 to 1.0.
pub const SIX_POINT_RANGE: f64 = 1.5;

/// Enough for both files to clear 25 dB on the separation scenario.
pub const SEPARATION_EPOCHS: usize = 300;

pub struct Separation {
    /// PSNR of each file decoded with its own latent.
    pub own: [f64; 2],
    /// PSNR of each file decoded with the other file's latent.
    pub swapped: [f64; 2],
}

/// Two maps with identical occupancy whose densities differ only by opposite ramps along x,
/// compressed into one archive. Only the latents can tell them apart.
pub fn latent_separation(epochs: usize) -> Separation {
    use cryoinr::codec::{compress, Archive, CompressOptions};
    use cryoinr::metrics::{evaluation_set, psnr};
    use cryoinr::mrc::{write_mrc, VoxelGrid};
    use cryoinr::synth::{synthesize, SynthOptions};
    use cryoinr::trainer::TrainConfig;

    let n = 32;
    let base = synthesize(&SynthOptions { shape: [n; 3], blobs: 5, seed: 11, noise: None }).unwrap();
    let ramp = |up: bool| {
        let mut g = base.clone();
        for (i, v) in g.data.iter_mut().enumerate() {
            let t = (i % n) as f32 / (n - 1) as f32;
            *v *= 0.2 + 0.8 * if up { t } else { 1.0 - t };
        }
        g
    };
    let grids: [VoxelGrid; 2] = [ramp(true), ramp(false)];
    let inputs = [("up.mrc", write_mrc(&grids[0])), ("down.mrc", write_mrc(&grids[1]))];
    let train = TrainConfig {
        epochs,
        batch_size: 128,
        early_stop_patience: epochs,
        arch: "127-64-Re1-32-1".parse().unwrap(),
        seed: 5,
        ..TrainConfig::default()
    };
    let out = compress(&inputs, &CompressOptions { threshold: 0.0, train }).unwrap();
    let archive = Archive::parse(&out.archive.to_bytes()).unwrap();
    let names = ["up.mrc", "down.mrc"];
    let score = |i: usize, latent_of: &str| {
        let rec = archive.decompress_with_latent(names[i], latent_of).unwrap();
        psnr(&grids[i], &rec, &evaluation_set(&grids[i], 0.0)).unwrap()
    };
    Separation { own: [score(0, names[0]), score(1, names[1])], swapped: [score(0, names[1]), score(1, names[0])] }
}
