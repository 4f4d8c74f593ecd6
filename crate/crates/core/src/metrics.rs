//! Reconstruction quality: banded relative error, MSE and PSNR.
//!
//! Points are the voxels whose original density is above the threshold. They
//! are binned by original density into half-open bands, the last one
//! unbounded, and each band reports the mean and lower-middle median of the
//! relative error along with the share of points within 20 %.

use std::fmt::{self, Write as _};
use std::io;

use thiserror::Error;

use crate::mrc::VoxelGrid;

pub const DEFAULT_BAND_EDGES: [f64; 2] = [0.07, 0.15];
pub const WITHIN_PCT: f64 = 20.0;

pub const CSV_HEADER: [&str; 7] = ["file", "band", "mean_pct", "median_pct", "within20_pct", "count", "value"];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("relative error undefined for a zero reference value")]
    DivisionByZero,
    #[error("grid dims {0:?} and {1:?} differ")]
    DimsMismatch([usize; 3], [usize; 3]),
    #[error("no voxel exceeds the threshold")]
    EmptyEvaluationSet,
    #[error("original grid is constant")]
    ZeroRange,
    #[error("reconstruction is exact on the evaluation set; PSNR is infinite")]
    InfiniteResult,
    #[error("band edges must be finite and strictly increasing")]
    BadBandEdges,
}

/// `100 |y - y_hat| / |y|`.
pub fn relative_error(y: f64, y_hat: f64) -> Result<f64, MetricsError> {
    if y == 0.0 {
        return Err(MetricsError::DivisionByZero);
    }
    Ok(100.0 * (y - y_hat).abs() / y.abs())
}

/// Indices of voxels with density strictly above `threshold`.
pub fn evaluation_set(original: &VoxelGrid, threshold: f32) -> Vec<usize> {
    original.data.iter().enumerate().filter(|(_, &v)| v > threshold).map(|(i, _)| i).collect()
}

fn check_dims(a: &VoxelGrid, b: &VoxelGrid) -> Result<(), MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::DimsMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

/// Mean squared error over `set`.
pub fn mse(original: &VoxelGrid, reconstructed: &VoxelGrid, set: &[usize]) -> Result<f64, MetricsError> {
    check_dims(original, reconstructed)?;
    if set.is_empty() {
        return Err(MetricsError::EmptyEvaluationSet);
    }
    let sum: f64 = set
        .iter()
        .map(|&i| {
            let d = original.data[i] as f64 - reconstructed.data[i] as f64;
            d * d
        })
        .sum();
    Ok(sum / set.len() as f64)
}

/// Range (max - min) of the whole original grid.
pub fn value_range(original: &VoxelGrid) -> f64 {
    let (lo, hi) = original
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)));
    hi - lo
}

/// `10 log10(R^2 / MSE)` from a range and an MSE.
pub fn psnr_from(range: f64, mse: f64) -> Result<f64, MetricsError> {
    // also rejects NaN
    if range.is_nan() || range <= 0.0 {
        return Err(MetricsError::ZeroRange);
    }
    if mse == 0.0 {
        return Err(MetricsError::InfiniteResult);
    }
    Ok(10.0 * (range * range / mse).log10())
}

/// PSNR over `set`, with the peak range taken from the full original grid.
pub fn psnr(original: &VoxelGrid, reconstructed: &VoxelGrid, set: &[usize]) -> Result<f64, MetricsError> {
    let m = mse(original, reconstructed, set)?;
    psnr_from(value_range(original), m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.2}"),
            Psnr::Infinite => f.write_str("∞"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandStats {
    pub name: String,
    /// Inclusive lower edge; `None` for the first band.
    pub lower: Option<f64>,
    /// Exclusive upper edge; `None` for the last band.
    pub upper: Option<f64>,
    pub count: usize,
    /// `None` when the band is empty.
    pub mean_pct: Option<f64>,
    pub median_pct: Option<f64>,
    /// Share of points with relative error at most 20 %, in [0, 1].
    pub within20: Option<f64>,
}

impl BandStats {
    pub fn label(&self) -> String {
        match (self.lower, self.upper) {
            (None, Some(u)) => format!("{} (<{u})", self.name),
            (Some(l), Some(u)) => format!("{} ({l}-{u})", self.name),
            (Some(l), None) => format!("{} (>={l})", self.name),
            (None, None) => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub threshold: f32,
    pub bands: Vec<BandStats>,
    pub count: usize,
    pub mse: f64,
    pub psnr: Psnr,
    /// Filled in by callers that know the archive size.
    pub ratio: Option<f64>,
}

fn band_names(n: usize) -> Vec<String> {
    match n {
        1 => vec!["all".into()],
        2 => vec!["low".into(), "high".into()],
        3 => vec!["low".into(), "medium".into(), "high".into()],
        _ => (0..n).map(|k| format!("band{k}")).collect(),
    }
}

/// Lower-middle element of a sorted copy.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

pub fn banded_report(
    original: &VoxelGrid,
    reconstructed: &VoxelGrid,
    threshold: f32,
    edges: &[f64],
) -> Result<ErrorReport, MetricsError> {
    check_dims(original, reconstructed)?;
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::BadBandEdges);
    }
    let set = evaluation_set(original, threshold);
    if set.is_empty() {
        return Err(MetricsError::EmptyEvaluationSet);
    }

    let mut errors: Vec<Vec<f64>> = vec![Vec::new(); edges.len() + 1];
    for &i in &set {
        let y = original.data[i] as f64;
        let band = edges.partition_point(|&e| e <= y);
        errors[band].push(relative_error(y, reconstructed.data[i] as f64)?);
    }

    let names = band_names(edges.len() + 1);
    let bands = errors
        .iter()
        .enumerate()
        .map(|(k, errs)| {
            let n = errs.len();
            let mean = (n > 0).then(|| errs.iter().sum::<f64>() / n as f64);
            let within = (n > 0).then(|| errs.iter().filter(|&&e| e <= WITHIN_PCT).count() as f64 / n as f64);
            BandStats {
                name: names[k].clone(),
                lower: k.checked_sub(1).map(|j| edges[j]),
                upper: edges.get(k).copied(),
                count: n,
                mean_pct: mean,
                median_pct: lower_median(errs),
                within20: within,
            }
        })
        .collect();

    let m = mse(original, reconstructed, &set)?;
    let psnr = match psnr_from(value_range(original), m) {
        Ok(v) => Psnr::Finite(v),
        Err(MetricsError::InfiniteResult) => Psnr::Infinite,
        Err(e) => return Err(e),
    };
    Ok(ErrorReport { threshold, bands, count: set.len(), mse: m, psnr, ratio: None })
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

impl ErrorReport {
    /// Aligned plain-text table.
    pub fn to_text(&self, file: &str) -> String {
        let mut s = String::new();
        let labels: Vec<String> = self.bands.iter().map(BandStats::label).collect();
        let w = labels.iter().map(|l| l.chars().count()).max().unwrap_or(4).max(4);
        writeln!(s, "{file}: {} points with density > {}", self.count, self.threshold).unwrap();
        writeln!(s, "{:<w$}  {:>10}  {:>10}  {:>12}  {:>10}", "band", "mean %", "median %", "within 20 %", "count")
            .unwrap();
        for (b, l) in self.bands.iter().zip(&labels) {
            writeln!(
                s,
                "{l:<w$}  {:>10}  {:>10}  {:>12}  {:>10}",
                opt(b.mean_pct, 2),
                opt(b.median_pct, 2),
                opt(b.within20.map(|f| 100.0 * f), 2),
                b.count
            )
            .unwrap();
        }
        writeln!(s, "MSE  {:.6e}", self.mse).unwrap();
        writeln!(s, "PSNR {} dB", self.psnr).unwrap();
        if let Some(r) = self.ratio {
            writeln!(s, "ratio {r:.2}:1").unwrap();
        }
        s
    }

    /// CSV rows under [`CSV_HEADER`]: one per band, then global MSE, PSNR and ratio rows.
    pub fn csv_rows(&self, file: &str) -> Vec<[String; 7]> {
        let mut rows: Vec<[String; 7]> = self
            .bands
            .iter()
            .map(|b| {
                [
                    file.to_string(),
                    b.label(),
                    b.mean_pct.map_or(String::new(), |v| v.to_string()),
                    b.median_pct.map_or(String::new(), |v| v.to_string()),
                    b.within20.map_or(String::new(), |v| (100.0 * v).to_string()),
                    b.count.to_string(),
                    String::new(),
                ]
            })
            .collect();
        let global = |name: &str, value: String| {
            [
                file.to_string(),
                name.to_string(),
                String::new(),
                String::new(),
                String::new(),
                self.count.to_string(),
                value,
            ]
        };
        rows.push(global("MSE", self.mse.to_string()));
        rows.push(global(
            "PSNR_dB",
            match self.psnr {
                Psnr::Finite(v) => v.to_string(),
                Psnr::Infinite => "inf".into(),
            },
        ));
        if let Some(r) = self.ratio {
            rows.push(global("ratio", r.to_string()));
        }
        rows
    }

    pub fn write_csv<W: io::Write>(&self, file: &str, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for row in self.csv_rows(file) {
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}
