//! Small MLP encoder with an L2-normalized output layer and manual
//! backpropagation. Batches are matrices with one sample per column, so
//! forward and backward passes are matrix products.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::rng_for;
use crate::sphere::UnitVector;

const MIN_PRE_NORM: f64 = 1e-150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            other => Err(Error::Format(format!("unknown activation code {other}"))),
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative as a function of the pre-activation value.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidConfig(format!(
                "unknown activation '{other}' (expected relu or tanh)"
            ))),
        }
    }
}

/// MLP with hidden activations and a final L2 normalization, mapping inputs
/// onto the unit sphere S^(D-1). Weight matrix `l` has shape
/// `layer_dims[l+1] x layer_dims[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpEncoder {
    id: String,
    layer_dims: Vec<usize>,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    activation: Activation,
}

impl MlpEncoder {
    /// Fresh encoder with weights drawn uniformly from plus or minus
    /// 1/sqrt(fan_in) per layer and zero biases, seeded.
    pub fn new(
        id: impl Into<String>,
        layer_dims: &[usize],
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = rng_for(seed, "encoder-init", 0);
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for l in 0..layer_dims.len() - 1 {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            // Row-major draw order fixes the weight layout per seed.
            let mut w = DMatrix::zeros(fan_out, fan_in);
            for r in 0..fan_out {
                for c in 0..fan_in {
                    w[(r, c)] = rng.random_range(-bound..=bound);
                }
            }
            weights.push(w);
            biases.push(DVector::zeros(fan_out));
        }
        Ok(Self {
            id: id.into(),
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    /// Rebuilds an encoder from explicit parameters (deserialization, weight
    /// averaging), validating the shape chain.
    pub fn from_parts(
        id: impl Into<String>,
        layer_dims: Vec<usize>,
        weights: Vec<DMatrix<f64>>,
        biases: Vec<DVector<f64>>,
        activation: Activation,
    ) -> Result<Self> {
        validate_dims(&layer_dims)?;
        if weights.len() != layer_dims.len() - 1 || biases.len() != layer_dims.len() - 1 {
            return Err(Error::InvalidConfig(format!(
                "expected {} layers of parameters, got {} weight and {} bias entries",
                layer_dims.len() - 1,
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..weights.len() {
            if weights[l].nrows() != layer_dims[l + 1] || weights[l].ncols() != layer_dims[l] {
                return Err(Error::InvalidConfig(format!(
                    "weight {l} has shape {}x{}, expected {}x{}",
                    weights[l].nrows(),
                    weights[l].ncols(),
                    layer_dims[l + 1],
                    layer_dims[l]
                )));
            }
            if biases[l].len() != layer_dims[l + 1] {
                return Err(Error::InvalidConfig(format!(
                    "bias {l} has length {}, expected {}",
                    biases[l].len(),
                    layer_dims[l + 1]
                )));
            }
        }
        Ok(Self {
            id: id.into(),
            layer_dims,
            weights,
            biases,
            activation,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Vec<DMatrix<f64>>, &mut Vec<DVector<f64>>) {
        (&mut self.weights, &mut self.biases)
    }

    /// Forward pass over a batch (one sample per column), keeping the
    /// intermediate values needed for backpropagation.
    pub fn forward_batch(&self, inputs: &DMatrix<f64>) -> Result<ForwardTrace> {
        if inputs.nrows() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: inputs.nrows(),
            });
        }
        if inputs.ncols() == 0 {
            return Err(Error::EmptyInput {
                what: "forward batch",
            });
        }
        let batch = inputs.ncols();
        let layers = self.weights.len();
        let mut activations = Vec::with_capacity(layers);
        let mut pre_activations = Vec::with_capacity(layers);
        let mut current = inputs.clone();
        for l in 0..layers {
            let mut pre = &self.weights[l] * &current;
            for mut col in pre.column_iter_mut() {
                col += &self.biases[l];
            }
            activations.push(current);
            let next = if l + 1 == layers {
                pre.clone()
            } else {
                pre.map(|x| self.activation.apply(x))
            };
            pre_activations.push(pre);
            current = next;
        }

        let mut norms = Vec::with_capacity(batch);
        let mut units = current;
        for (b, mut col) in units.column_iter_mut().enumerate() {
            let norm = col.norm();
            if !norm.is_finite() || norm < MIN_PRE_NORM {
                return Err(Error::ZeroVector {
                    context: "encoder pre-normalization output",
                }
                .at_row(b));
            }
            col /= norm;
            norms.push(norm);
        }
        Ok(ForwardTrace {
            activations,
            pre_activations,
            pre_norm_norms: norms,
            units,
        })
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &DVector<f64>) -> Result<UnitVector> {
        let matrix = DMatrix::from_column_slice(input.len(), 1, input.as_slice());
        let trace = self.forward_batch(&matrix)?;
        Ok(UnitVector::from_unit_unchecked(DVector::from_column_slice(
            trace.units.column(0).as_slice(),
        )))
    }

    /// Backpropagates `grad_units` (the loss gradient with respect to the
    /// unit outputs, D x B) through the normalization layer and the MLP,
    /// returning gradients for every weight and bias. The normalization
    /// Jacobian is (I - u u^T) / |y| per column.
    pub fn backward_batch(&self, trace: &ForwardTrace, grad_units: &DMatrix<f64>) -> EncoderGradients {
        let layers = self.weights.len();
        let batch = grad_units.ncols();
        let dim = grad_units.nrows();

        let mut d_pre = DMatrix::zeros(dim, batch);
        for b in 0..batch {
            let u = trace.units.column(b);
            let g = grad_units.column(b);
            let radial = g.dot(&u);
            let mut out = d_pre.column_mut(b);
            out.copy_from(&g);
            out.axpy(-radial, &u, 1.0);
            out /= trace.pre_norm_norms[b];
        }

        let mut weight_grads = vec![DMatrix::zeros(0, 0); layers];
        let mut bias_grads = vec![DVector::zeros(0); layers];
        for l in (0..layers).rev() {
            weight_grads[l] = &d_pre * trace.activations[l].transpose();
            bias_grads[l] = d_pre.column_sum();
            if l > 0 {
                let mut d_act = self.weights[l].transpose() * &d_pre;
                let pre_below = &trace.pre_activations[l - 1];
                for c in 0..d_act.ncols() {
                    for r in 0..d_act.nrows() {
                        d_act[(r, c)] *= self.activation.derivative(pre_below[(r, c)]);
                    }
                }
                d_pre = d_act;
            }
        }
        EncoderGradients {
            weights: weight_grads,
            biases: bias_grads,
        }
    }
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::InvalidConfig(
            "layer_dims needs at least an input and an output dimension".into(),
        ));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidConfig("layer dimensions must be positive".into()));
    }
    if *layer_dims.last().unwrap() < 2 {
        return Err(Error::DimensionTooSmall(*layer_dims.last().unwrap()));
    }
    Ok(())
}

/// Intermediate state of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[l]` is the input to layer `l`; `activations[0]` is the
    /// network input.
    activations: Vec<DMatrix<f64>>,
    /// Pre-activation values per layer; the last entry is the
    /// pre-normalization output.
    pre_activations: Vec<DMatrix<f64>>,
    /// Per-column norm of the pre-normalization output.
    pre_norm_norms: Vec<f64>,
    /// Unit-norm outputs, D x B.
    pub units: DMatrix<f64>,
}

/// Per-parameter gradients, matching an encoder's weight and bias shapes.
#[derive(Debug, Clone)]
pub struct EncoderGradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl EncoderGradients {
    pub fn zeros_like(encoder: &MlpEncoder) -> Self {
        Self {
            weights: encoder
                .weights()
                .iter()
                .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
                .collect(),
            biases: encoder
                .biases()
                .iter()
                .map(|b| DVector::zeros(b.len()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &EncoderGradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    /// Euclidean norm over all parameters.
    pub fn norm(&self) -> f64 {
        let mut sq = 0.0;
        for w in &self.weights {
            sq += w.norm_squared();
        }
        for b in &self.biases {
            sq += b.norm_squared();
        }
        sq.sqrt()
    }
}
