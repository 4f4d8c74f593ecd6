use crate::inr::Real;

use super::LossError;

/// Keeps the value weight finite for zero targets.
pub const VALUE_EPS: f64 = 1e-4;
pub const ERROR_QUANTILE: f64 = 0.9;
/// Weight applied to points whose squared error exceeds the quantile.
pub const ERROR_BOOST: f64 = 3.0;

pub fn mse_point<T: Real>(y: T, y_hat: T) -> T {
    let d = y - y_hat;
    d * d
}

/// Everything computed while evaluating one batch of the weighted loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatchReport<T> {
    pub mse_point: Vec<T>,
    pub w_value: Vec<T>,
    pub w_error: Vec<T>,
    /// Normalized combined weights; their mean is 1.
    pub weights: Vec<T>,
    pub loss: T,
    pub quantile: T,
    pub mean_abs: T,
}

impl<T: Real> LossBatchReport<T> {
    pub const CSV_HEADER: [&'static str; 4] = ["step", "loss", "quantile", "mean_abs_y"];

    pub fn csv_record(&self, step: u64) -> [String; 4] {
        [step.to_string(), self.loss.to_string(), self.quantile.to_string(), self.mean_abs.to_string()]
    }

    /// `dL/dy_hat` with the weights held constant.
    pub fn gradient(&self, y: &[T], y_hat: &[T]) -> Vec<T> {
        let scale = T::lit(-2.0) / T::lit(y.len() as f64);
        y.iter().zip(y_hat).zip(&self.weights).map(|((&a, &b), &w)| scale * w * (a - b)).collect()
    }
}

fn check_batch<T: Real>(y: &[T], y_hat: &[T]) -> Result<(), LossError> {
    if y.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    if y.len() != y_hat.len() {
        return Err(LossError::LengthMismatch(y.len(), y_hat.len()));
    }
    for (i, (a, b)) in y.iter().zip(y_hat).enumerate() {
        if !a.is_finite() || !b.is_finite() {
            return Err(LossError::NonFiniteInput(i));
        }
    }
    Ok(())
}

fn mean_abs<T: Real>(y: &[T]) -> T {
    y.iter().map(|v| v.abs()).sum::<T>() / T::lit(y.len() as f64)
}

/// `((|y| + eps) / (mean|y| + eps))^2` with the mean taken over the batch.
pub fn value_weights<T: Real>(y: &[T]) -> Result<Vec<T>, LossError> {
    if y.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    Ok(value_weights_with_mean(y, mean_abs(y)))
}

pub fn value_weights_with_mean<T: Real>(y: &[T], mean_abs: T) -> Vec<T> {
    let eps = T::lit(VALUE_EPS);
    let denom = mean_abs + eps;
    y.iter()
        .map(|v| {
            let r = (v.abs() + eps) / denom;
            r * r
        })
        .collect()
}

/// Nearest-rank quantile: the element at 1-based rank `ceil(q * n)` of the sorted values.
pub fn nearest_rank_quantile<T: Real>(values: &[T], q: f64) -> T {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let rank = rank_for(values.len(), q);
    sorted[rank - 1]
}

fn rank_for(n: usize, q: f64) -> usize {
    if q == ERROR_QUANTILE {
        // ceil(0.9 n) in integers; 0.9 is not exact in binary
        (9 * n).div_ceil(10).max(1)
    } else {
        ((q * n as f64).ceil() as usize).clamp(1, n)
    }
}

/// 3 where the squared error strictly exceeds the 90th percentile, else 1.
pub fn error_weights<T: Real>(mse: &[T]) -> Result<(Vec<T>, T), LossError> {
    if mse.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let q = nearest_rank_quantile(mse, ERROR_QUANTILE);
    let boost = T::lit(ERROR_BOOST);
    Ok((mse.iter().map(|&m| if m > q { boost } else { T::one() }).collect(), q))
}

pub fn weighted_mse<T: Real>(y: &[T], y_hat: &[T]) -> Result<(T, LossBatchReport<T>), LossError> {
    weighted_mse_with(y, y_hat, None)
}

/// Weighted loss; `mean_abs` overrides the batch mean of |y| (e.g. a chunk-level mean).
pub fn weighted_mse_with<T: Real>(
    y: &[T],
    y_hat: &[T],
    mean_abs_override: Option<T>,
) -> Result<(T, LossBatchReport<T>), LossError> {
    check_batch(y, y_hat)?;
    let n = T::lit(y.len() as f64);
    let mse: Vec<T> = y.iter().zip(y_hat).map(|(&a, &b)| mse_point(a, b)).collect();
    let mean_abs = mean_abs_override.unwrap_or_else(|| mean_abs(y));
    let w_value = value_weights_with_mean(y, mean_abs);
    let (w_error, quantile) = error_weights(&mse)?;
    let combined: Vec<T> = w_value.iter().zip(&w_error).map(|(&a, &b)| a * b).collect();
    let norm = combined.iter().copied().sum::<T>() / n;
    let weights: Vec<T> = combined.iter().map(|&w| w / norm).collect();
    let loss = mse.iter().zip(&weights).map(|(&m, &w)| m * w).sum::<T>() / n;
    Ok((loss, LossBatchReport { mse_point: mse, w_value, w_error, weights, loss, quantile, mean_abs }))
}

/// `dL/dy_hat_i = -2 w_i (y_i - y_hat_i) / N`, weights treated as constants.
pub fn weighted_mse_backward<T: Real>(y: &[T], y_hat: &[T]) -> Result<Vec<T>, LossError> {
    let (_, report) = weighted_mse(y, y_hat)?;
    Ok(report.gradient(y, y_hat))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mse() {
        assert_eq!(mse_point(0.5, 0.5), 0.0);
        assert_eq!(mse_point(1.0, 0.0), 1.0);
        assert!((mse_point(0.2f64, -0.1) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn value_weights_examples() {
        assert_eq!(value_weights(&[0.3f64; 5]).unwrap(), vec![1.0; 5]);
        let w = value_weights(&[0.0f64, 0.2]).unwrap();
        let d = 0.1f64 + 1e-4;
        assert!((w[0] - (1e-4 / d).powi(2)).abs() < 1e-18);
        assert!((w[1] - (0.2001 / d).powi(2)).abs() < 1e-12);
        assert!((w[0] - 9.98e-7).abs() < 1e-9);
        assert!((w[1] - 3.996).abs() < 1e-3);
        assert!(matches!(value_weights::<f64>(&[]), Err(LossError::EmptyBatch)));
    }

    #[test]
    fn value_weights_nearly_scale_invariant() {
        let y = [0.1f64, 0.5, 0.9, 0.3];
        let y10: Vec<f64> = y.iter().map(|v| v * 10.0).collect();
        let a = value_weights(&y).unwrap();
        let b = value_weights(&y10).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() / q < 2e-3);
        }
    }

    #[test]
    fn error_weight_counts() {
        assert_eq!(error_weights(&[0.2f64; 7]).unwrap().0, vec![1.0; 7]);
        for (n, boosted) in [(10usize, 1usize), (20, 2), (100, 10), (1024, 102), (1, 0), (3, 0)] {
            let mse: Vec<f64> = (0..n).map(|i| ((i * 37) % n) as f64 + 0.5).collect();
            let (w, _) = error_weights(&mse).unwrap();
            assert_eq!(w.iter().filter(|&&v| v == 3.0).count(), boosted, "n={n}");
        }
    }

    #[test]
    fn quantile_is_nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(nearest_rank_quantile(&v, 0.9), 18.0);
        assert_eq!(nearest_rank_quantile(&v[..10], 0.9), 9.0);
        assert_eq!(nearest_rank_quantile(&[4.0f64], 0.9), 4.0);
    }

    #[test]
    fn exact_prediction_has_zero_loss_and_gradient() {
        let y = [0.1f64, 0.7, 0.0, 1.0];
        let (loss, report) = weighted_mse(&y, &y).unwrap();
        assert_eq!(loss, 0.0);
        assert!((report.weights.iter().sum::<f64>() / 4.0 - 1.0).abs() < 1e-12);
        assert_eq!(weighted_mse_backward(&y, &y).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn uniform_weights_reduce_to_plain_mse() {
        let y = [0.5f64; 4];
        let y_hat = [0.4f64, 0.6, 0.4, 0.6];
        let (loss, report) = weighted_mse(&y, &y_hat).unwrap();
        assert!(report.weights.iter().all(|&w| (w - 1.0).abs() < 1e-15));
        assert!((loss - 0.01).abs() < 1e-15);
    }

    #[test]
    fn single_point_gradient() {
        let g = weighted_mse_backward(&[0.8f64], &[0.5]).unwrap();
        assert!((g[0] - (-2.0 * 0.3)).abs() < 1e-15);
    }

    #[test]
    fn input_validation() {
        assert!(matches!(weighted_mse::<f64>(&[], &[]), Err(LossError::EmptyBatch)));
        assert!(matches!(weighted_mse(&[1.0f64], &[1.0, 2.0]), Err(LossError::LengthMismatch(1, 2))));
        assert!(matches!(weighted_mse(&[1.0f64, 2.0], &[1.0, f64::NAN]), Err(LossError::NonFiniteInput(1))));
    }

    #[test]
    fn chunk_level_mean_override() {
        let y = [0.2f64, 0.4];
        let (_, r) = weighted_mse_with(&y, &[0.0, 0.0], Some(0.6)).unwrap();
        assert_eq!(r.mean_abs, 0.6);
        assert!((r.w_value[0] - (0.2001f64 / 0.6001).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn csv_record_columns() {
        let (_, r) = weighted_mse(&[0.5f64, 0.25], &[0.5, 0.5]).unwrap();
        let rec = r.csv_record(7);
        assert_eq!(rec[0], "7");
        assert_eq!(LossBatchReport::<f64>::CSV_HEADER.len(), rec.len());
    }
}
