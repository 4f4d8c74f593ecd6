//! Residual MLP with hand-derived backpropagation.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use super::arch::{AffineRole, Arch};
use super::{InrError, Real};

pub const LEAKY_SLOPE: f64 = 0.01;

#[inline]
fn lrelu<T: Real>(v: T) -> T {
    if v >= T::zero() {
        v
    } else {
        v * T::lit(LEAKY_SLOPE)
    }
}

/// Derivative of Leaky ReLU; 1 at exactly zero.
#[inline]
fn lrelu_grad<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one()
    } else {
        T::lit(LEAKY_SLOPE)
    }
}

/// `y = x W^T + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Affine<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weight: Array2::zeros((fan_out, fan_in)), bias: Array1::zeros(fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }

    fn apply(&self, x: &ArrayView2<T>) -> Array2<T> {
        let mut z = self.bias.broadcast((x.nrows(), self.fan_out())).unwrap().to_owned();
        general_mat_mul(T::one(), x, &self.weight.t(), T::one(), &mut z);
        z
    }

    /// Accumulates weight and bias gradients for upstream `dz`, returns `dx`.
    fn backprop(&self, x: &ArrayView2<T>, dz: &Array2<T>, grad: &mut Affine<T>) -> Array2<T> {
        general_mat_mul(T::one(), &dz.t(), x, T::zero(), &mut grad.weight);
        grad.bias = dz.sum_axis(Axis(0));
        dz.dot(&self.weight)
    }
}

/// All trainable weights of the density network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    arch: Arch,
    layers: Vec<Affine<T>>,
}

enum Step<T> {
    Dense { input: Array2<T>, pre: Array2<T> },
    Residual { input: Array2<T>, pre1: Array2<T>, hidden: Array2<T>, sum: Array2<T> },
    Output { input: Array2<T> },
}

/// Intermediate values kept by [`MlpParams::forward_cached`] for the backward pass.
pub struct ForwardCache<T> {
    steps: Vec<Step<T>>,
}

/// Gradients of a scalar loss with respect to every parameter and every input value.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub params: MlpParams<T>,
    pub input: Array2<T>,
}

impl<T: Real> MlpParams<T> {
    pub fn zeros(arch: &Arch) -> Self {
        let layers = arch.affine_shapes().iter().map(|&(i, o, _)| Affine::zeros(i, o)).collect();
        Self { arch: arch.clone(), layers }
    }

    /// Kaiming-uniform weights, bound `sqrt(6 / fan_in)`, zero biases.
    pub fn init(arch: &Arch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(arch);
        for layer in &mut params.layers {
            let bound = (6.0 / layer.fan_in() as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            layer.weight.mapv_inplace(|_| T::lit(dist.sample(&mut rng)));
        }
        params
    }

    /// Wraps existing layers after checking they realize `arch`.
    pub fn from_layers(arch: Arch, layers: Vec<Affine<T>>) -> Result<Self, InrError> {
        let shapes = arch.affine_shapes();
        if shapes.len() != layers.len() {
            return Err(InrError::DimensionMismatch { expected: shapes.len(), found: layers.len() });
        }
        for (&(i, o, _), l) in shapes.iter().zip(&layers) {
            if l.weight.dim() != (o, i) || l.bias.len() != o {
                return Err(InrError::DimensionMismatch { expected: i * o + o, found: l.weight.len() + l.bias.len() });
            }
        }
        Ok(Self { arch, layers })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn layers(&self) -> &[Affine<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Affine<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Weight then bias of every layer, in parameter order.
    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| [l.weight.as_slice().unwrap(), l.bias.as_slice().unwrap()]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let Affine { weight, bias } = l;
                [weight.as_slice_mut().unwrap(), bias.as_slice_mut().unwrap()]
            })
            .collect()
    }

    pub fn cast<U: Real>(&self) -> MlpParams<U> {
        MlpParams {
            arch: self.arch.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Affine {
                    weight: l.weight.mapv(|v| U::lit(v.as_f64())),
                    bias: l.bias.mapv(|v| U::lit(v.as_f64())),
                })
                .collect(),
        }
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<(), InrError> {
        if x.ncols() != self.arch.input {
            return Err(InrError::DimensionMismatch { expected: self.arch.input, found: x.ncols() });
        }
        Ok(())
    }

    /// Outputs for each input row, `n x output`.
    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>, InrError> {
        self.check_input(&x)?;
        let roles = self.arch.affine_shapes();
        let mut act = x.to_owned();
        let mut i = 0;
        while i < self.layers.len() {
            match roles[i].2 {
                AffineRole::Dense => {
                    act = self.layers[i].apply(&act.view());
                    act.mapv_inplace(lrelu);
                    i += 1;
                }
                AffineRole::ResidualInner => {
                    let mut h = self.layers[i].apply(&act.view());
                    h.mapv_inplace(lrelu);
                    let z2 = self.layers[i + 1].apply(&h.view());
                    Zip::from(&mut act).and(&z2).for_each(|a, &z| *a = lrelu(*a + z));
                    i += 2;
                }
                AffineRole::Output => {
                    act = self.layers[i].apply(&act.view());
                    i += 1;
                }
                AffineRole::ResidualOuter => unreachable!("consumed with its inner layer"),
            }
        }
        Ok(act)
    }

    pub fn forward_cached(&self, x: ArrayView2<T>) -> Result<(Array2<T>, ForwardCache<T>), InrError> {
        self.check_input(&x)?;
        let roles = self.arch.affine_shapes();
        let mut steps = Vec::with_capacity(self.layers.len());
        let mut act = x.to_owned();
        let mut i = 0;
        while i < self.layers.len() {
            match roles[i].2 {
                AffineRole::Dense => {
                    let pre = self.layers[i].apply(&act.view());
                    let out = pre.mapv(lrelu);
                    steps.push(Step::Dense { input: act, pre });
                    act = out;
                    i += 1;
                }
                AffineRole::ResidualInner => {
                    let pre1 = self.layers[i].apply(&act.view());
                    let hidden = pre1.mapv(lrelu);
                    let mut sum = self.layers[i + 1].apply(&hidden.view());
                    sum += &act;
                    let out = sum.mapv(lrelu);
                    steps.push(Step::Residual { input: act, pre1, hidden, sum });
                    act = out;
                    i += 2;
                }
                AffineRole::Output => {
                    let out = self.layers[i].apply(&act.view());
                    steps.push(Step::Output { input: act });
                    act = out;
                    i += 1;
                }
                AffineRole::ResidualOuter => unreachable!("consumed with its inner layer"),
            }
        }
        Ok((act, ForwardCache { steps }))
    }

    /// Backpropagates `upstream = dL/d(output)` (`n x output`) through the cached pass.
    pub fn backward(&self, cache: &ForwardCache<T>, upstream: ArrayView2<T>) -> Result<Gradients<T>, InrError> {
        if upstream.ncols() != self.arch.output {
            return Err(InrError::DimensionMismatch { expected: self.arch.output, found: upstream.ncols() });
        }
        let n = match cache.steps.first() {
            Some(Step::Dense { input, .. } | Step::Residual { input, .. } | Step::Output { input }) => input.nrows(),
            None => 0,
        };
        if upstream.nrows() != n {
            return Err(InrError::DimensionMismatch { expected: n, found: upstream.nrows() });
        }
        let mut grads = Self::zeros(&self.arch);
        let mut grad = upstream.to_owned();
        let mut i = self.layers.len();
        for step in cache.steps.iter().rev() {
            match step {
                Step::Output { input } => {
                    i -= 1;
                    grad = self.layers[i].backprop(&input.view(), &grad, &mut grads.layers[i]);
                }
                Step::Dense { input, pre } => {
                    i -= 1;
                    Zip::from(&mut grad).and(pre).for_each(|g, &p| *g *= lrelu_grad(p));
                    grad = self.layers[i].backprop(&input.view(), &grad, &mut grads.layers[i]);
                }
                Step::Residual { input, pre1, hidden, sum } => {
                    i -= 2;
                    Zip::from(&mut grad).and(sum).for_each(|g, &s| *g *= lrelu_grad(s));
                    let (inner, outer) = grads.layers.split_at_mut(i + 1);
                    let mut dh = self.layers[i + 1].backprop(&hidden.view(), &grad, &mut outer[0]);
                    Zip::from(&mut dh).and(pre1).for_each(|g, &p| *g *= lrelu_grad(p));
                    let dx = self.layers[i].backprop(&input.view(), &dh, &mut inner[i]);
                    grad += &dx;
                }
            }
        }
        Ok(Gradients { params: grads, input: grad })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_params_give_zero_output() {
        let arch: Arch = "5-4-Re-3-1".parse().unwrap();
        let p = MlpParams::<f64>::zeros(&arch);
        let x = Array2::from_shape_fn((3, 5), |(i, j)| (i * 5 + j) as f64 - 4.0);
        assert_eq!(p.forward(x.view()).unwrap(), Array2::zeros((3, 1)));
    }

    #[test]
    fn hand_computed_small_net() {
        let arch: Arch = "4-2-1".parse().unwrap();
        let layers = vec![
            Affine { weight: array![[1.0, 0.0, -1.0, 2.0], [0.5, 0.5, 0.5, 0.5]], bias: array![0.1, -3.0] },
            Affine { weight: array![[2.0, -1.0]], bias: array![0.25] },
        ];
        let p = MlpParams::from_layers(arch, layers).unwrap();
        let x = array![[1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 0.0, 0.0]];
        // row 0: h = (1 - 3 + 8 + 0.1, 5 - 3) = (6.1, 2); y = 12.2 - 2 + 0.25
        // row 1: h = (0.1, lrelu(-3) = -0.03); y = 0.2 + 0.03 + 0.25
        let y = p.forward(x.view()).unwrap();
        assert!((y[[0, 0]] - 10.45f64).abs() < 1e-12);
        assert!((y[[1, 0]] - 0.48f64).abs() < 1e-12);
    }

    #[test]
    fn batch_rows_are_independent() {
        let arch: Arch = "6-8-Re-4-1".parse().unwrap();
        let p = MlpParams::<f64>::init(&arch, 3);
        let x = Array2::from_shape_fn((5, 6), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let all = p.forward(x.view()).unwrap();
        for r in 0..5 {
            let one = p.forward(x.slice(ndarray::s![r..r + 1, ..])).unwrap();
            assert!((one[[0, 0]] - all[[r, 0]]).abs() < 1e-12);
        }
        let (cached, _) = p.forward_cached(x.view()).unwrap();
        assert_eq!(cached, all);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch: Arch = "127-32-Re-16-1".parse().unwrap();
        let a = MlpParams::<f32>::init(&arch, 9);
        assert_eq!(a, MlpParams::<f32>::init(&arch, 9));
        assert_ne!(a, MlpParams::<f32>::init(&arch, 10));
        for l in a.layers() {
            let bound = (6.0 / l.fan_in() as f64).sqrt() as f32;
            assert!(l.weight.iter().all(|w| w.abs() <= bound));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let arch: Arch = "7-5-Re-3-1".parse().unwrap();
        let p = MlpParams::<f64>::init(&arch, 1);
        let x = Array2::from_elem((4, 7), 0.3);
        let (_, cache) = p.forward_cached(x.view()).unwrap();
        let g = p.backward(&cache, Array2::zeros((4, 1)).view()).unwrap();
        assert!(g.params.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_block_with_zero_weights_is_identity_path() {
        // 2-2-Re-1: dense layer is the identity, residual affines are zero,
        // output sums the two channels
        let arch: Arch = "2-2-Re-1".parse().unwrap();
        let layers = vec![
            Affine { weight: array![[1.0, 0.0], [0.0, 1.0]], bias: array![0.0, 0.0] },
            Affine::zeros(2, 2),
            Affine::zeros(2, 2),
            Affine { weight: array![[1.0, 1.0]], bias: array![0.0] },
        ];
        let p = MlpParams::from_layers(arch, layers).unwrap();
        let x = array![[0.5, -2.0]];
        let (y, cache) = p.forward_cached(x.view()).unwrap();
        // lrelu(lrelu(x)) on each channel
        assert!((y[[0, 0]] - (0.5f64 - 2.0 * 0.01 * 0.01)).abs() < 1e-15);
        let g = p.backward(&cache, array![[1.0]].view()).unwrap();
        // d/dx of lrelu(lrelu(x)): 1 on the positive channel, 0.01^2 on the negative one
        assert!((g.input[[0, 0]] - 1.0f64).abs() < 1e-15);
        assert!((g.input[[0, 1]] - 1e-4f64).abs() < 1e-15);
    }

    #[test]
    fn rejects_wrong_widths() {
        let arch: Arch = "4-2-1".parse().unwrap();
        let p = MlpParams::<f32>::zeros(&arch);
        assert!(p.forward(Array2::zeros((1, 5)).view()).is_err());
        let (_, cache) = p.forward_cached(Array2::zeros((2, 4)).view()).unwrap();
        assert!(p.backward(&cache, Array2::zeros((3, 1)).view()).is_err());
        assert!(MlpParams::<f32>::from_layers(arch, vec![Affine::zeros(4, 2)]).is_err());
    }
}
