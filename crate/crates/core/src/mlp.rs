//! Multi-layer perceptron towers with exact backpropagation.
//!
//! A tower is a stack of affine layers. The configured activation applies to
//! every hidden layer; the output layer is always identity so embeddings live
//! in an unconstrained d-dimensional space.
//!
//! `finite_difference_grad` is the numerical oracle the analytic gradients
//! are checked against; it never shares code with `mlp_backward`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};

/// Element-wise nonlinearity for hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    ReLU,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::ReLU => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z`, given the post-activation `a`.
    /// The ReLU subgradient at exactly 0 is 0.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer: `z = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: DenseMatrix,
    pub bias: DenseVector,
}

/// Parameters of one tower. Hidden layers use `activation`; the final layer
/// is identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Layer>,
    activation: Activation,
}

impl MlpParams {
    /// Assembles a tower, validating that consecutive layer dims chain.
    pub fn new(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig {
                key: "layers",
                reason: "must have at least one layer".into(),
            });
        }
        for layer in &layers {
            if layer.bias.dim() != layer.weight.rows() {
                return Err(Error::DimMismatch {
                    context: "layer bias vs weight rows",
                    left: layer.bias.dim(),
                    right: layer.weight.rows(),
                });
            }
        }
        for w in layers.windows(2) {
            if w[0].weight.rows() != w[1].weight.cols() {
                return Err(Error::DimMismatch {
                    context: "consecutive layer dims",
                    left: w[0].weight.rows(),
                    right: w[1].weight.cols(),
                });
            }
        }
        Ok(Self { layers, activation })
    }

    /// Glorot-initialized tower mapping `input_dim` through `hidden_dims` to
    /// `output_dim`. Weights are uniform in ±sqrt(6/(fan_in+fan_out)), biases
    /// zero.
    pub fn glorot<R: Rng>(
        input_dim: usize,
        hidden_dims: &[usize],
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut dims = Vec::with_capacity(hidden_dims.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden_dims);
        dims.push(output_dim);
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig {
                key: "layer_dims",
                reason: "all layer dims must be >= 1".into(),
            });
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut weight = DenseMatrix::zeros(fan_out, fan_in);
            for w in weight.as_mut_slice() {
                *w = rng.gen_range(-limit..limit);
            }
            layers.push(Layer {
                weight,
                bias: DenseVector::zeros(fan_out),
            });
        }
        Self::new(layers, activation)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.rows()
    }

    /// Activation of layer `l`: hidden layers use the configured one, the
    /// final layer is identity.
    fn layer_activation(&self, l: usize) -> Activation {
        if l + 1 == self.layers.len() {
            Activation::Identity
        } else {
            self.activation
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.dim())
            .sum()
    }
}

/// Input as retained by the forward cache. One-hot inputs keep only the hot
/// index so the first-layer backward touches a single weight column.
#[derive(Debug, Clone)]
enum CachedInput {
    Dense(DenseVector),
    OneHot { dim: usize, index: usize },
}

/// Per-layer pre/post activations retained for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: CachedInput,
    pre: Vec<DenseVector>,
    post: Vec<DenseVector>,
}

impl ForwardCache {
    pub fn depth(&self) -> usize {
        self.pre.len()
    }
}

/// Gradients with the same shape as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| Layer {
                weight: DenseMatrix::zeros(l.weight.rows(), l.weight.cols()),
                bias: DenseVector::zeros(l.bias.dim()),
            })
            .collect();
        Self { layers }
    }

    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    /// Scales every gradient entry, e.g. for batch averaging.
    pub fn scale(&mut self, alpha: f64) {
        for l in &mut self.layers {
            l.weight.scale(alpha);
            for b in l.bias.as_mut_slice() {
                *b *= alpha;
            }
        }
    }
}

/// `y = W x + b`.
pub fn affine_forward(w: &DenseMatrix, b: &DenseVector, x: &DenseVector) -> Result<DenseVector> {
    if w.cols() != x.dim() {
        return Err(Error::DimMismatch {
            context: "affine weight cols vs input",
            left: w.cols(),
            right: x.dim(),
        });
    }
    if b.dim() != w.rows() {
        return Err(Error::DimMismatch {
            context: "affine bias vs weight rows",
            left: b.dim(),
            right: w.rows(),
        });
    }
    let mut y = DenseVector::zeros(w.rows());
    for i in 0..w.rows() {
        let mut acc = b[i];
        for (wij, xj) in w.row(i).iter().zip(x.iter()) {
            acc += wij * xj;
        }
        y[i] = acc;
    }
    Ok(y)
}

/// Element-wise activation.
pub fn activation_forward(kind: Activation, z: &DenseVector) -> DenseVector {
    let mut out = DenseVector::zeros(z.dim());
    for i in 0..z.dim() {
        out[i] = kind.apply(z[i]);
    }
    out
}

fn forward_from(params: &MlpParams, input: CachedInput) -> Result<(DenseVector, ForwardCache)> {
    let n_layers = params.layers.len();
    let mut pre = Vec::with_capacity(n_layers);
    let mut post = Vec::with_capacity(n_layers);

    // First layer: exploit the one-hot case, which reduces the affine map to
    // a single weight column plus bias. Adding the zero terms of a dense
    // one-hot input would produce the identical result.
    let first = &params.layers[0];
    let z0 = match &input {
        CachedInput::Dense(x) => affine_forward(&first.weight, &first.bias, x)?,
        CachedInput::OneHot { dim, index } => {
            if first.weight.cols() != *dim {
                return Err(Error::DimMismatch {
                    context: "affine weight cols vs input",
                    left: first.weight.cols(),
                    right: *dim,
                });
            }
            let mut z = DenseVector::zeros(first.weight.rows());
            for i in 0..first.weight.rows() {
                z[i] = first.bias[i] + first.weight.get(i, *index);
            }
            z
        }
    };
    let a0 = activation_forward(params.layer_activation(0), &z0);
    pre.push(z0);
    post.push(a0);

    for l in 1..n_layers {
        let layer = &params.layers[l];
        let z = affine_forward(&layer.weight, &layer.bias, &post[l - 1])?;
        let a = activation_forward(params.layer_activation(l), &z);
        pre.push(z);
        post.push(a);
    }

    let h = post[n_layers - 1].clone();
    Ok((h, ForwardCache { input, pre, post }))
}

/// Runs the tower on `x`, returning the embedding and a cache sufficient for
/// exact gradients. Pure: identical inputs yield bit-identical outputs.
pub fn mlp_forward(params: &MlpParams, x: &DenseVector) -> Result<(DenseVector, ForwardCache)> {
    forward_from(params, CachedInput::Dense(x.clone()))
}

/// Same as [`mlp_forward`] on a one-hot input, skipping the zero columns.
/// Bit-identical to the dense path.
pub fn mlp_forward_one_hot(
    params: &MlpParams,
    dim: usize,
    index: usize,
) -> Result<(DenseVector, ForwardCache)> {
    if index >= dim {
        return Err(Error::IdOutOfRange {
            what: "one-hot",
            id: index,
            bound: dim,
        });
    }
    forward_from(params, CachedInput::OneHot { dim, index })
}

/// Exact gradients of `<grad_h, mlp_forward(params, x)>` w.r.t. every weight,
/// bias, and the input.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_h: &DenseVector,
) -> Result<(MlpGrads, DenseVector)> {
    let mut grads = MlpGrads::zeros_like(params);
    let grad_x = backward_into(params, cache, grad_h, &mut grads, true)?;
    Ok((grads, grad_x.expect("input gradient requested")))
}

/// Accumulating backward used by the training hot loop; skips the input
/// gradient, which one-hot features never need.
pub fn mlp_backward_accumulate(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_h: &DenseVector,
    grads: &mut MlpGrads,
) -> Result<()> {
    backward_into(params, cache, grad_h, grads, false)?;
    Ok(())
}

fn backward_into(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_h: &DenseVector,
    grads: &mut MlpGrads,
    want_input_grad: bool,
) -> Result<Option<DenseVector>> {
    let n_layers = params.layers.len();
    if cache.depth() != n_layers {
        return Err(Error::DimMismatch {
            context: "cache depth vs layer count",
            left: cache.depth(),
            right: n_layers,
        });
    }
    if grads.layers.len() != n_layers {
        return Err(Error::DimMismatch {
            context: "grad accumulator vs layer count",
            left: grads.layers.len(),
            right: n_layers,
        });
    }
    if grad_h.dim() != params.output_dim() {
        return Err(Error::DimMismatch {
            context: "grad_h vs output dim",
            left: grad_h.dim(),
            right: params.output_dim(),
        });
    }

    let mut d_post = grad_h.clone();
    for l in (0..n_layers).rev() {
        let layer = &params.layers[l];
        let act = params.layer_activation(l);
        let pre = &cache.pre[l];
        let post = &cache.post[l];
        if pre.dim() != layer.weight.rows() {
            return Err(Error::DimMismatch {
                context: "cache layer dim vs weight rows",
                left: pre.dim(),
                right: layer.weight.rows(),
            });
        }

        // dz = d_post ⊙ act'(pre)
        let mut dz = DenseVector::zeros(pre.dim());
        for i in 0..pre.dim() {
            dz[i] = d_post[i] * act.derivative(pre[i], post[i]);
        }

        let g = &mut grads.layers[l];
        for i in 0..layer.weight.rows() {
            g.bias[i] += dz[i];
        }

        if l == 0 {
            match &cache.input {
                CachedInput::Dense(x) => {
                    accumulate_outer(&mut g.weight, &dz, x.as_slice());
                }
                CachedInput::OneHot { index, .. } => {
                    // Only the hot column receives gradient: dz[i] * 1.0.
                    for i in 0..layer.weight.rows() {
                        let cur = g.weight.get(i, *index);
                        g.weight.set(i, *index, cur + dz[i]);
                    }
                }
            }
            if want_input_grad {
                return Ok(Some(transpose_matvec(&layer.weight, &dz)));
            }
            return Ok(None);
        }

        accumulate_outer(&mut g.weight, &dz, cache.post[l - 1].as_slice());
        d_post = transpose_matvec(&layer.weight, &dz);
    }
    unreachable!("loop always returns at l == 0");
}

/// `grad += dz ⊗ input` (outer product, row-major).
fn accumulate_outer(grad: &mut DenseMatrix, dz: &DenseVector, input: &[f64]) {
    let cols = grad.cols();
    let data = grad.as_mut_slice();
    for i in 0..dz.dim() {
        let d = dz[i];
        let row = &mut data[i * cols..(i + 1) * cols];
        for (g, x) in row.iter_mut().zip(input) {
            *g += d * x;
        }
    }
}

/// `W^T v`.
fn transpose_matvec(w: &DenseMatrix, v: &DenseVector) -> DenseVector {
    let mut out = DenseVector::zeros(w.cols());
    for i in 0..w.rows() {
        let vi = v[i];
        for (o, wij) in out.as_mut_slice().iter_mut().zip(w.row(i)) {
            *o += wij * vi;
        }
    }
    out
}

/// Central finite differences of `loss_fn` over every parameter:
/// `(f(θ+eps) − f(θ−eps)) / (2·eps)`.
///
/// This is the independent oracle for `mlp_backward`; it only ever calls the
/// loss function.
pub fn finite_difference_grad<F>(loss_fn: F, params: &MlpParams, eps: f64) -> Result<MlpGrads>
where
    F: Fn(&MlpParams) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig {
            key: "eps",
            reason: "must be positive".into(),
        });
    }
    let mut grads = MlpGrads::zeros_like(params);
    let mut probe = params.clone();
    let n_layers = params.layers.len();
    for l in 0..n_layers {
        let n_weights = params.layers[l].weight.as_slice().len();
        for p in 0..n_weights {
            let orig = probe.layers[l].weight.as_slice()[p];
            probe.layers_mut()[l].weight.as_mut_slice()[p] = orig + eps;
            let plus = loss_fn(&probe);
            probe.layers_mut()[l].weight.as_mut_slice()[p] = orig - eps;
            let minus = loss_fn(&probe);
            probe.layers_mut()[l].weight.as_mut_slice()[p] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite("loss at perturbed point".into()));
            }
            grads.layers[l].weight.as_mut_slice()[p] = (plus - minus) / (2.0 * eps);
        }
        let n_biases = params.layers[l].bias.dim();
        for p in 0..n_biases {
            let orig = probe.layers[l].bias[p];
            probe.layers_mut()[l].bias[p] = orig + eps;
            let plus = loss_fn(&probe);
            probe.layers_mut()[l].bias[p] = orig - eps;
            let minus = loss_fn(&probe);
            probe.layers_mut()[l].bias[p] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite("loss at perturbed point".into()));
            }
            grads.layers[l].bias[p] = (plus - minus) / (2.0 * eps);
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vec2(data: &[f64]) -> DenseVector {
        DenseVector::new(data.to_vec()).unwrap()
    }

    #[test]
    fn affine_identity_passes_through() {
        let w = DenseMatrix::identity(3);
        let b = DenseVector::zeros(3);
        let x = vec2(&[1.0, 2.0, 3.0]);
        let y = affine_forward(&w, &b, &x).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn affine_hand_example() {
        let w = DenseMatrix::new(2, 2, vec![1.0, 1.0, 0.0, 2.0]).unwrap();
        let b = vec2(&[1.0, 0.0]);
        let x = vec2(&[1.0, 1.0]);
        let y = affine_forward(&w, &b, &x).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 2.0]);
    }

    #[test]
    fn affine_dim_mismatch_names_dims() {
        let w = DenseMatrix::zeros(2, 3);
        let b = DenseVector::zeros(2);
        let x = DenseVector::zeros(4);
        let err = affine_forward(&w, &b, &x).unwrap_err();
        assert!(err.to_string().contains("3 vs 4"), "{err}");
    }

    #[test]
    fn affine_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut w = DenseMatrix::zeros(8, 5);
        for v in w.as_mut_slice() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut b = DenseVector::zeros(8);
        let mut x = DenseVector::zeros(5);
        for v in b.as_mut_slice() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for v in x.as_mut_slice() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let y = affine_forward(&w, &b, &x).unwrap();

        // Independent double-loop implementation.
        for i in 0..8 {
            let mut expected = 0.0;
            for j in 0..5 {
                expected += w.get(i, j) * x[j];
            }
            expected += b[i];
            assert!((y[i] - expected).abs() < 1e-12, "row {i}");
        }
    }

    #[test]
    fn activation_cases() {
        let z = vec2(&[-1.0, 0.0, 2.0]);
        assert_eq!(
            activation_forward(Activation::ReLU, &z).as_slice(),
            &[0.0, 0.0, 2.0]
        );
        assert_eq!(activation_forward(Activation::Identity, &z).as_slice(), z.as_slice());
        assert_eq!(activation_forward(Activation::Tanh, &vec2(&[0.0]))[0], 0.0);
    }

    fn random_net(rng: &mut ChaCha8Rng, dims: &[usize], activation: Activation) -> MlpParams {
        MlpParams::glorot(
            dims[0],
            &dims[1..dims.len() - 1],
            dims[dims.len() - 1],
            activation,
            rng,
        )
        .unwrap()
    }

    #[test]
    fn forward_identity_single_layer() {
        let params = MlpParams::new(
            vec![Layer {
                weight: DenseMatrix::identity(3),
                bias: DenseVector::zeros(3),
            }],
            Activation::Identity,
        )
        .unwrap();
        let x = vec2(&[0.5, -1.0, 2.0]);
        let (h, cache) = mlp_forward(&params, &x).unwrap();
        assert_eq!(h.as_slice(), x.as_slice());
        assert_eq!(cache.depth(), 1);
    }

    #[test]
    fn forward_zero_weights_propagates_biases() {
        // Two layers, all weights zero, all biases one: h == final bias.
        let layers = vec![
            Layer {
                weight: DenseMatrix::zeros(4, 3),
                bias: DenseVector::new(vec![1.0; 4]).unwrap(),
            },
            Layer {
                weight: DenseMatrix::zeros(2, 4),
                bias: DenseVector::new(vec![1.0; 2]).unwrap(),
            },
        ];
        let params = MlpParams::new(layers, Activation::ReLU).unwrap();
        let (h, _) = mlp_forward(&params, &vec2(&[5.0, -2.0, 0.1])).unwrap();
        assert_eq!(h.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn forward_matches_layer_by_layer_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = random_net(&mut rng, &[5, 7, 3], Activation::Tanh);
        let mut x = DenseVector::zeros(5);
        for v in x.as_mut_slice() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let (h, _) = mlp_forward(&params, &x).unwrap();

        // Oracle: explicit composition of affine_forward/activation_forward.
        let l0 = &params.layers()[0];
        let z0 = affine_forward(&l0.weight, &l0.bias, &x).unwrap();
        let a0 = activation_forward(Activation::Tanh, &z0);
        let l1 = &params.layers()[1];
        let z1 = affine_forward(&l1.weight, &l1.bias, &a0).unwrap();
        let expected = activation_forward(Activation::Identity, &z1);
        assert_eq!(h.as_slice(), expected.as_slice());
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = random_net(&mut rng, &[4, 6, 2], Activation::ReLU);
        let x = vec2(&[0.3, -0.4, 0.9, 0.0]);
        let (h1, _) = mlp_forward(&params, &x).unwrap();
        let (h2, _) = mlp_forward(&params, &x).unwrap();
        assert_eq!(h1.as_slice(), h2.as_slice());
    }

    #[test]
    fn forward_linear_in_input_for_identity_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut weight = DenseMatrix::zeros(3, 4);
        for v in weight.as_mut_slice() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let params = MlpParams::new(
            vec![Layer {
                weight,
                bias: DenseVector::zeros(3),
            }],
            Activation::Identity,
        )
        .unwrap();
        let x = vec2(&[0.2, -0.7, 1.1, 0.4]);
        let alpha = 2.5;
        let mut ax = x.clone();
        for v in ax.as_mut_slice() {
            *v *= alpha;
        }
        let (h, _) = mlp_forward(&params, &x).unwrap();
        let (h_scaled, _) = mlp_forward(&params, &ax).unwrap();
        for i in 0..3 {
            assert!((h_scaled[i] - alpha * h[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_forward_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = random_net(&mut rng, &[6, 5, 3], Activation::ReLU);
        for index in 0..6 {
            let x = DenseVector::one_hot(6, index).unwrap();
            let (dense, _) = mlp_forward(&params, &x).unwrap();
            let (fast, _) = mlp_forward_one_hot(&params, 6, index).unwrap();
            assert_eq!(dense.as_slice(), fast.as_slice());
        }
    }

    #[test]
    fn backward_identity_layer_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let params = random_net(&mut rng, &[3, 2], Activation::Identity);
        let x = vec2(&[0.4, -1.2, 0.8]);
        let grad_h = vec2(&[2.0, -0.5]);
        let (_, cache) = mlp_forward(&params, &x).unwrap();
        let (grads, grad_x) = mlp_backward(&params, &cache, &grad_h).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let expected = grad_h[i] * x[j];
                assert!((grads.layers[0].weight.get(i, j) - expected).abs() < 1e-15);
            }
            assert_eq!(grads.layers[0].bias[i], grad_h[i]);
        }
        // grad_x == W^T grad_h for a linear layer.
        let w = &params.layers()[0].weight;
        for j in 0..3 {
            let expected = w.get(0, j) * grad_h[0] + w.get(1, j) * grad_h[1];
            assert!((grad_x[j] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn dead_relu_units_zero_hidden_grads() {
        // Hidden pre-activations all negative: hidden-layer grads vanish and
        // the output weight grads vanish too (their inputs are zero). Only
        // the output bias still carries grad_h.
        let layers = vec![
            Layer {
                weight: DenseMatrix::new(2, 2, vec![-1.0, 0.0, 0.0, -1.0]).unwrap(),
                bias: DenseVector::new(vec![-1.0, -1.0]).unwrap(),
            },
            Layer {
                weight: DenseMatrix::new(2, 2, vec![0.3, 0.4, 0.5, 0.6]).unwrap(),
                bias: DenseVector::zeros(2),
            },
        ];
        let params = MlpParams::new(layers, Activation::ReLU).unwrap();
        let x = vec2(&[1.0, 2.0]);
        let (_, cache) = mlp_forward(&params, &x).unwrap();
        let grad_h = vec2(&[1.0, -1.0]);
        let (grads, grad_x) = mlp_backward(&params, &cache, &grad_h).unwrap();
        assert!(grads.layers[0].weight.as_slice().iter().all(|&g| g == 0.0));
        assert!(grads.layers[0].bias.iter().all(|&g| g == 0.0));
        assert!(grads.layers[1].weight.as_slice().iter().all(|&g| g == 0.0));
        assert_eq!(grads.layers[1].bias.as_slice(), grad_h.as_slice());
        assert!(grad_x.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn finite_difference_on_scalar_square() {
        // f(θ) = θ² at θ = 3 via a 1×1 identity net whose weight is θ.
        let params = MlpParams::new(
            vec![Layer {
                weight: DenseMatrix::new(1, 1, vec![3.0]).unwrap(),
                bias: DenseVector::zeros(1),
            }],
            Activation::Identity,
        )
        .unwrap();
        let loss = |p: &MlpParams| {
            let w = p.layers()[0].weight.get(0, 0);
            w * w
        };
        let grads = finite_difference_grad(loss, &params, 1e-6).unwrap();
        assert!((grads.layers[0].weight.get(0, 0) - 6.0).abs() < 1e-6);
    }

    #[test]
    fn finite_difference_of_constant_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let params = random_net(&mut rng, &[3, 4, 2], Activation::Tanh);
        let grads = finite_difference_grad(|_| 42.0, &params, 1e-6).unwrap();
        for l in &grads.layers {
            assert!(l.weight.as_slice().iter().all(|&g| g == 0.0));
            assert!(l.bias.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn finite_difference_rejects_non_finite_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let params = random_net(&mut rng, &[2, 2], Activation::Identity);
        let err = finite_difference_grad(|_| f64::NAN, &params, 1e-6).unwrap_err();
        assert!(err.to_string().contains("non-finite"));
    }

    fn assert_grads_close(analytic: &MlpGrads, numeric: &MlpGrads) {
        for (la, ln) in analytic.layers.iter().zip(&numeric.layers) {
            for (a, n) in la.weight.as_slice().iter().zip(ln.weight.as_slice()) {
                check_entry(*a, *n);
            }
            for (a, n) in la.bias.iter().zip(ln.bias.iter()) {
                check_entry(*a, *n);
            }
        }
    }

    fn check_entry(analytic: f64, numeric: f64) {
        let denom = analytic.abs().max(numeric.abs());
        if denom < 1e-8 {
            assert!((analytic - numeric).abs() <= 1e-8, "a={analytic} n={numeric}");
        } else {
            let rel = (analytic - numeric).abs() / denom;
            assert!(rel <= 1e-5, "a={analytic} n={numeric} rel={rel}");
        }
    }

    #[test]
    fn backward_matches_finite_differences_over_random_nets() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let activations = [Activation::ReLU, Activation::Tanh, Activation::Identity];
        for case in 0..100 {
            let n_hidden = rng.gen_range(0..3usize);
            let mut dims = vec![rng.gen_range(1..=16usize)];
            for _ in 0..n_hidden {
                dims.push(rng.gen_range(1..=16usize));
            }
            dims.push(rng.gen_range(1..=16usize));
            let activation = activations[case % 3];
            let params = random_net(&mut rng, &dims, activation);

            let mut x = DenseVector::zeros(dims[0]);
            for v in x.as_mut_slice() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let mut grad_h = DenseVector::zeros(*dims.last().unwrap());
            for v in grad_h.as_mut_slice() {
                *v = rng.gen_range(-1.0..1.0);
            }

            let (_, cache) = mlp_forward(&params, &x).unwrap();
            let (analytic, _) = mlp_backward(&params, &cache, &grad_h).unwrap();

            let gh = grad_h.clone();
            let xc = x.clone();
            let numeric = finite_difference_grad(
                move |p| {
                    let (h, _) = mlp_forward(p, &xc).unwrap();
                    h.iter().zip(gh.iter()).map(|(a, b)| a * b).sum()
                },
                &params,
                1e-6,
            )
            .unwrap();
            assert_grads_close(&analytic, &numeric);
        }
    }

    #[test]
    fn glorot_respects_bound() {
        // 4×6 layer: bound is sqrt(6/10).
        let bound = (6.0_f64 / 10.0).sqrt();
        for seed in 0..1000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params =
                MlpParams::glorot(6, &[], 4, Activation::Identity, &mut rng).unwrap();
            let max = params.layers()[0]
                .weight
                .as_slice()
                .iter()
                .fold(0.0f64, |m, w| m.max(w.abs()));
            assert!(max <= bound, "seed {seed}: {max} > {bound}");
            assert!(params.layers()[0].bias.iter().all(|&b| b == 0.0));
        }
    }
}
