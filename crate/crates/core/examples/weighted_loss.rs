//! Break down the weighted loss on a toy batch: value weights, error boost and the final weights.

use cryoinr::optim::{weighted_mse, weighted_mse_backward};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let y = [0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0, 0.3, 0.07];
    let y_hat = [0.03, 0.05, 0.12, 0.18, 0.45, 0.6, 0.5, 0.98, 0.31, 0.2];
    let (loss, report) = weighted_mse(&y, &y_hat)?;
    let grad = weighted_mse_backward(&y, &y_hat)?;
    println!("{:>6} {:>6} {:>9} {:>8} {:>8} {:>10}", "y", "y_hat", "w_value", "w_error", "w", "dL/dy_hat");
    for i in 0..y.len() {
        println!(
            "{:>6.2} {:>6.2} {:>9.4} {:>8} {:>8.4} {:>10.5}",
            y[i], y_hat[i], report.w_value[i], report.w_error[i], report.weights[i], grad[i]
        );
    }
    let mean_w = report.weights.iter().sum::<f64>() / y.len() as f64;
    println!("loss {loss:.6e}  90th percentile error {:.3e}  mean weight {mean_w:.12}", report.quantile);
    Ok(())
}
