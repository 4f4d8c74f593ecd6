//! Multi-file chunked training loop.
//!
//! Chunks are visited round-robin across files. Within a chunk the training
//! points are shuffled with a seed derived from `(seed, epoch, file, chunk)`
//! and cut into batches that never cross the chunk boundary. Every batch
//! updates the shared network and the latent vector of the file it came from.
//! After each epoch the held-out validation points are scored and the best
//! state so far is kept.

mod split;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::inr::{encode_batch, Arch, Checkpoint, InrError, LatentTable, MlpParams, COORD_DIM, LATENT_DIM};
use crate::optim::{weighted_mse_with, AdamState, LossBatchReport, LossError};
use crate::preprocess::{PointChunkStore, PointRecord, PreprocessError};

pub use split::{point_hash, split_validation, DataView};

/// Minimum decrease of the validation loss that resets the patience counter.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("store has no points")]
    EmptyStore,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, file {file_id}, chunk {chunk}, batch {batch}")]
    NonFiniteLoss { epoch: usize, file_id: u32, chunk: usize, batch: usize },
    #[error(transparent)]
    Inr(#[from] InrError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Store(#[from] PreprocessError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Where the mean |y| of the value weight is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueMean {
    #[default]
    Batch,
    Chunk,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub chunk_size: usize,
    pub early_stop_patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: Option<f64>,
    pub arch: Arch,
    pub value_mean: ValueMean,
    pub train_latents: bool,
    /// Best checkpoint so far, rewritten atomically on every improvement.
    pub checkpoint_path: Option<PathBuf>,
    /// Per-batch loss log (step, loss, quantile, mean_abs_y).
    pub batch_log: Option<PathBuf>,
}

impl TrainConfig {
    pub const DEFAULT_EPOCHS: usize = 100;
    pub const DEFAULT_LEARNING_RATE: f64 = 0.001;
    pub const DEFAULT_BATCH_SIZE: usize = 1024;
    pub const DEFAULT_CHUNK_SIZE: usize = 1_000_000;
    pub const DEFAULT_PATIENCE: usize = 10;
    pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.01;

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.chunk_size == 0 || self.early_stop_patience == 0 {
            return bad("epochs, batch size, chunk size and patience must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return bad("validation fraction must lie in (0, 0.5)");
        }
        if let Some(d) = self.lr_decay {
            if !(d > 0.0 && d <= 1.0) {
                return bad("lr decay must lie in (0, 1]");
            }
        }
        if self.arch.input != COORD_DIM + LATENT_DIM || self.arch.output != 1 {
            return bad("architecture must map 127 inputs to 1 output");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.lr_decay {
            Some(d) => self.learning_rate * d.powi(epoch as i32),
            None => self.learning_rate,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: Self::DEFAULT_EPOCHS,
            learning_rate: Self::DEFAULT_LEARNING_RATE,
            batch_size: Self::DEFAULT_BATCH_SIZE,
            chunk_size: Self::DEFAULT_CHUNK_SIZE,
            early_stop_patience: Self::DEFAULT_PATIENCE,
            validation_fraction: Self::DEFAULT_VALIDATION_FRACTION,
            seed: 0,
            lr_decay: None,
            arch: Arch::full(),
            value_mean: ValueMean::Batch,
            train_latents: true,
            checkpoint_path: None,
            batch_log: None,
        }
    }
}

/// Network weights plus per-file latents.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub params: MlpParams<f32>,
    pub latents: LatentTable<f32>,
}

impl ModelState {
    pub fn init(arch: &Arch, file_ids: &[u32], seed: u64) -> Result<Self, TrainError> {
        Ok(Self {
            params: MlpParams::init(arch, split::splitmix64(seed ^ 0x5041_5241)),
            latents: LatentTable::init(file_ids, split::splitmix64(seed ^ 0x4c41_5445))?,
        })
    }

    /// Predicted normalized densities for points of one file, `batch` rows at a time.
    pub fn predict(&self, file_id: u32, points: &[[f32; 3]], batch: usize) -> Result<Vec<f32>, TrainError> {
        let latent = self
            .latents
            .get(file_id)
            .ok_or_else(|| TrainError::InvalidConfig(format!("no latent for file {file_id}")))?;
        let mut out = Vec::with_capacity(points.len());
        for part in points.chunks(batch.max(1)) {
            let x = encode_batch(part, latent)?;
            out.extend(self.params.forward(x.view())?.column(0).iter().copied());
        }
        Ok(out)
    }

    pub fn into_checkpoint(self) -> Checkpoint {
        Checkpoint { params: self.params, latents: self.latents }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Self {
        Self { params: c.params, latents: c.latents }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    /// True when no point was held out and the training loss was monitored instead.
    pub monitored_train_loss: bool,
}

impl TrainLog {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.epochs[e].val_loss)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "train_loss", "val_loss", "lr", "seconds"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
                e.lr.to_string(),
                format!("{:.3}", e.seconds),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| TrainError::Io(e.into_error()))?;
        crate::io_util::write_atomic(path, &bytes)?;
        Ok(())
    }
}

fn coords(records: &[PointRecord]) -> Vec<[f32; 3]> {
    records.iter().map(|r| r.xyz).collect()
}

/// Weighted loss of the current state over every point of `views`, no updates.
pub fn evaluate_views(state: &ModelState, views: &[DataView<'_>], batch: usize) -> Result<f64, TrainError> {
    let mut y = Vec::new();
    let mut y_hat = Vec::new();
    for view in views {
        let file_id = view.store().file_id();
        for k in 0..view.store().chunk_count() {
            let recs = view.read_chunk(k)?;
            y.extend(recs.iter().map(|r| r.density));
            y_hat.extend(state.predict(file_id, &coords(&recs), batch)?);
        }
    }
    if y.is_empty() {
        return Err(TrainError::EmptyStore);
    }
    let (loss, _) = weighted_mse_with(&y, &y_hat, None)?;
    Ok(loss as f64)
}

pub fn evaluate_validation(state: &ModelState, view: &DataView<'_>) -> Result<f64, TrainError> {
    evaluate_views(state, std::slice::from_ref(view), 4096)
}

/// Chunk visiting order: chunk 0 of every file, then chunk 1, ...
fn round_robin(stores: &[PointChunkStore]) -> Vec<(usize, usize)> {
    let max = stores.iter().map(|s| s.chunk_count()).max().unwrap_or(0);
    (0..max)
        .flat_map(|k| stores.iter().enumerate().filter(move |(_, s)| k < s.chunk_count()).map(move |(f, _)| (f, k)))
        .collect()
}

struct Optimizers {
    mlp: AdamState<f32>,
    latents: Vec<AdamState<f32>>,
}

struct StepContext<'a> {
    state: &'a mut ModelState,
    opt: &'a mut Optimizers,
    lr: f64,
}

impl StepContext<'_> {
    /// Forward, loss, backward and Adam update on one batch of one file.
    fn step(
        &mut self,
        file_idx: usize,
        file_id: u32,
        batch: &[PointRecord],
        mean_abs: Option<f32>,
        train_latents: bool,
    ) -> Result<(f32, LossBatchReport<f32>), TrainError> {
        let latent = self.state.latents.get(file_id).expect("latent registered");
        let x = encode_batch(&coords(batch), latent)?;
        let y: Vec<f32> = batch.iter().map(|r| r.density).collect();
        let (out, cache) = self.state.params.forward_cached(x.view())?;
        let y_hat: Vec<f32> = out.column(0).to_vec();
        let (loss, report) = weighted_mse_with(&y, &y_hat, mean_abs)?;
        let upstream = Array2::from_shape_vec((y.len(), 1), report.gradient(&y, &y_hat)).expect("column");
        let grads = self.state.params.backward(&cache, upstream.view())?;
        {
            let g = grads.params.tensors();
            self.opt.mlp.step(&mut self.state.params.tensors_mut(), &g, self.lr)?;
        }
        if train_latents {
            let dl = latent_gradient(grads.input.view());
            let latent = self.state.latents.get_mut(file_id).expect("latent registered");
            self.opt.latents[file_idx].step(&mut [latent], &[&dl], self.lr)?;
        }
        Ok((loss, report))
    }
}

/// Sum over the batch of the input gradient's latent columns.
fn latent_gradient(input_grad: ArrayView2<f32>) -> Vec<f32> {
    input_grad.slice(s![.., COORD_DIM..]).sum_axis(ndarray::Axis(0)).to_vec()
}

/// Trains one shared network and one latent per store.
pub fn train(stores: &[PointChunkStore], config: &TrainConfig) -> Result<(ModelState, TrainLog), TrainError> {
    config.validate()?;
    if stores.is_empty() {
        return Err(TrainError::InvalidConfig("no input stores".into()));
    }
    let ids: Vec<u32> = stores.iter().map(|s| s.file_id()).collect();
    let mut state = ModelState::init(&config.arch, &ids, config.seed)?;
    state.latents.trainable = config.train_latents;
    let mut log = TrainLog::default();

    let mut train_views = Vec::new();
    let mut val_views = Vec::new();
    for (f, store) in stores.iter().enumerate() {
        if store.is_empty() {
            continue;
        }
        let (t, v) = split_validation(store, config.validation_fraction, config.seed)?;
        train_views.push((f, t));
        val_views.push(v);
    }
    if train_views.is_empty() {
        return Ok((state, log));
    }
    let val_count: usize = val_views.iter().map(|v| v.len()).sum();
    log.monitored_train_loss = val_count == 0;

    let mut opt = Optimizers {
        mlp: AdamState::for_tensors(&state.params.tensors()),
        latents: stores.iter().map(|_| AdamState::new([LATENT_DIM])).collect(),
    };
    let schedule = round_robin(stores);
    let view_of = |f: usize| train_views.iter().find(|(g, _)| *g == f).map(|(_, v)| *v).expect("nonempty store");

    let mut batch_log = match &config.batch_log {
        Some(p) => {
            let mut w = csv::Writer::from_writer(BufWriter::new(File::create(p)?));
            w.write_record(LossBatchReport::<f32>::CSV_HEADER)?;
            Some(w)
        }
        None => None,
    };

    let mut best: Option<(f64, ModelState)> = None;
    let mut stale = 0usize;
    let mut global_step = 0u64;
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = config.learning_rate_at(epoch);
        let mut loss_sum = 0.0f64;
        let mut loss_count = 0usize;
        std::thread::scope(|scope| -> Result<(), TrainError> {
            // one chunk in flight while the previous one trains
            let (tx, rx) = mpsc::sync_channel::<Result<(usize, usize, Vec<PointRecord>), PreprocessError>>(0);
            let schedule = &schedule;
            scope.spawn(move || {
                for &(f, k) in schedule {
                    let item = stores[f].read_chunk(k).map(|r| (f, k, r));
                    let failed = item.is_err();
                    if tx.send(item).is_err() || failed {
                        break;
                    }
                }
            });
            let mut ctx = StepContext { state: &mut state, opt: &mut opt, lr };
            for item in rx {
                let (f, k, records) = item?;
                let store = &stores[f];
                let mut points = view_of(f).filter_chunk(k, records);
                if points.is_empty() {
                    continue;
                }
                let seed = split::splitmix64(
                    config.seed ^ split::splitmix64(((epoch as u64) << 40) ^ ((f as u64) << 20) ^ k as u64),
                );
                points.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                let mean_abs = match config.value_mean {
                    ValueMean::Batch => None,
                    ValueMean::Chunk => Some(points.iter().map(|p| p.density.abs()).sum::<f32>() / points.len() as f32),
                };
                for (b, batch) in points.chunks(config.batch_size).enumerate() {
                    let (loss, report) = ctx.step(f, store.file_id(), batch, mean_abs, config.train_latents)?;
                    if !loss.is_finite() {
                        return Err(TrainError::NonFiniteLoss { epoch, file_id: store.file_id(), chunk: k, batch: b });
                    }
                    if let Some(w) = batch_log.as_mut() {
                        w.write_record(report.csv_record(global_step))?;
                    }
                    global_step += 1;
                    loss_sum += loss as f64 * batch.len() as f64;
                    loss_count += batch.len();
                }
            }
            Ok(())
        })?;

        let train_loss = loss_sum / loss_count.max(1) as f64;
        let val_loss = if log.monitored_train_loss {
            train_loss
        } else {
            evaluate_views(&state, &val_views, config.batch_size.max(4096))?
        };
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, file_id: u32::MAX, chunk: 0, batch: 0 });
        }
        log.epochs.push(EpochLog { epoch, train_loss, val_loss, lr, seconds: started.elapsed().as_secs_f64() });

        let best_loss = best.as_ref().map(|b| b.0);
        if best_loss.is_none_or(|b| val_loss < b) {
            if best_loss.is_none_or(|b| b - val_loss >= MIN_IMPROVEMENT) {
                stale = 0;
            } else {
                stale += 1;
            }
            best = Some((val_loss, state.clone()));
            log.best_epoch = Some(epoch);
            if let Some(path) = &config.checkpoint_path {
                let bytes = state.clone().into_checkpoint().to_bytes();
                crate::io_util::write_atomic(path, &bytes)?;
            }
        } else {
            stale += 1;
        }
        if stale >= config.early_stop_patience {
            log.stopped_early = epoch + 1 < config.epochs;
            break;
        }
    }
    if let Some(mut w) = batch_log {
        w.flush()?;
    }
    let state = best.map(|b| b.1).unwrap_or(state);
    Ok((state, log))
}
