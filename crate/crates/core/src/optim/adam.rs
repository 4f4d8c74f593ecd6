use crate::inr::Real;

use super::LossError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adam moments for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(shapes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = shapes.into_iter().map(|n| (vec![T::zero(); n], vec![T::zero(); n])).unzip();
        Self { m, v, step: 0, beta1: BETA1, beta2: BETA2, eps: EPS }
    }

    pub fn for_tensors(tensors: &[&[T]]) -> Self {
        Self::new(tensors.iter().map(|t| t.len()))
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]], lr: f64) -> Result<(), LossError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(LossError::ShapeMismatch);
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(LossError::ShapeMismatch);
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let corr1 = T::lit(1.0 - self.beta1.powi(t));
        let corr2 = T::lit(1.0 - self.beta2.powi(t));
        let lr = T::lit(lr);
        let eps = T::lit(self.eps);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + c1 * gi;
                v[i] = b2 * v[i] + c2 * gi * gi;
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
