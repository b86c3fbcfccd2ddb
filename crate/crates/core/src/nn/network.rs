//! Fully connected layer chains with a cached forward pass and exact
//! reverse-mode gradients.
//!
//! A layer computes `y = act(x · W + b)` with `W` stored `in_dim × out_dim`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{GclError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(GclError::Config("layer dimensions must be positive".into()));
        }
        if bias.len() != weights.cols() {
            return Err(GclError::shape("DenseLayer bias", weights.cols(), bias.len()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    fn forward(&self, input: &Matrix) -> Result<Matrix> {
        let mut z = input.matmul(&self.weights)?;
        z.add_row_vector(&self.bias)?;
        let act = self.activation;
        z.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
        Ok(z)
    }
}

/// Gradient of one layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weights.is_finite() && g.bias.iter().all(|v| v.is_finite()))
    }

    /// Flat views in the same order as [`Network::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
            .collect()
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    /// `activations[0]` is the input, `activations[i + 1]` the output of layer `i`.
    activations: Vec<Matrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<DenseLayer>,
    #[serde(skip)]
    cache: Option<ForwardCache>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Network {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(GclError::Config("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(GclError::shape(
                    format!("layer {} input", i + 1),
                    pair[0].out_dim(),
                    pair[1].in_dim(),
                ));
            }
        }
        Ok(Self {
            layers,
            cache: None,
        })
    }

    /// Glorot-uniform weights, zero biases, reproducible from `seed`.
    ///
    /// `activations` has one entry per layer, i.e. `dims.len() - 1` entries.
    pub fn init(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(dims, activations, &mut rng)
    }

    pub fn init_with_rng<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(GclError::Config(format!(
                "network needs at least two dimensions, got {dims:?}"
            )));
        }
        if activations.len() != dims.len() - 1 {
            return Err(GclError::Config(format!(
                "{} activations for {} layers",
                activations.len(),
                dims.len() - 1
            )));
        }
        if dims.contains(&0) {
            return Err(GclError::Config(format!("zero-width layer in {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(pair, &act)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                DenseLayer::new(Matrix::from_vec(fan_in, fan_out, data)?, vec![0.0; fan_out], act)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.cache = None;
        &mut self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim()];
        dims.extend(self.layers.iter().map(DenseLayer::out_dim));
        dims
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Inference pass; nothing is cached.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        let mut x = self.check_input(input)?;
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Training pass; keeps every layer's activation for [`Network::backward`].
    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(self.check_input(input)?);
        for layer in &self.layers {
            let next = layer.forward(activations.last().expect("non-empty"))?;
            activations.push(next);
        }
        let out = activations.last().expect("non-empty").clone();
        self.cache = Some(ForwardCache { activations });
        Ok(out)
    }

    /// Backpropagates `loss_grad` (∂loss/∂output of the last forward pass).
    pub fn backward(&self, loss_grad: &Matrix) -> Result<Gradients> {
        self.backprop(loss_grad, true)
    }

    /// Backpropagates `logit_grad`, the gradient with respect to the last
    /// layer's pre-activation. Lets a loss fold the output activation's
    /// derivative into its own gradient.
    pub fn backward_from_logits(&self, logit_grad: &Matrix) -> Result<Gradients> {
        self.backprop(logit_grad, false)
    }

    fn backprop(&self, loss_grad: &Matrix, through_last_activation: bool) -> Result<Gradients> {
        let cache = self.cache.as_ref().ok_or(GclError::NoForwardCache)?;
        let output = cache.activations.last().expect("non-empty");
        if loss_grad.shape() != output.shape() {
            return Err(GclError::shape(
                "backward loss gradient",
                format!("{}x{}", output.rows(), output.cols()),
                format!("{}x{}", loss_grad.rows(), loss_grad.cols()),
            ));
        }

        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = loss_grad.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let out = &cache.activations[i + 1];
            let input = &cache.activations[i];
            // ∂loss/∂z
            let delta = if i == last && !through_last_activation {
                upstream.clone()
            } else {
                let act = layer.activation;
                let data = upstream
                    .as_slice()
                    .iter()
                    .zip(out.as_slice())
                    .map(|(&g, &y)| g * act.derivative_from_output(y))
                    .collect();
                Matrix::from_vec(out.rows(), out.cols(), data)?
            };
            let weights = input.t_matmul(&delta)?;
            let bias = delta.column_sums();
            if i > 0 {
                upstream = delta.matmul_t(&layer.weights)?;
            }
            grads.push(LayerGrad { weights, bias });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Mutable flat views of every parameter tensor: `W0, b0, W1, b1, ...`.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.cache = None;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn check_input(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.in_dim() {
            return Err(GclError::LayerInput {
                layer: 0,
                expected: self.in_dim(),
                actual: input.cols(),
            });
        }
        Ok(input.clone())
    }
}
