use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, NodeId, Rng, Tape};

/// Slope used for every leaky ReLU unless configured otherwise.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Relu,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

/// A stack of affine layers, each followed by its activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    slope: f64,
}

/// Shape of one layer before any weights exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

impl LayerShape {
    pub const fn new(input: usize, output: usize, activation: Activation) -> Self {
        LayerShape {
            input,
            output,
            activation,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.input * self.output + self.output
    }
}

fn leaky(v: f64, slope: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        v * slope
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>, slope: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Validation("network without layers".into()));
        }
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::Config(format!("leaky relu slope {slope} outside (0, 1)")));
        }
        for (i, layer) in layers.iter().enumerate() {
            let (_, out) = layer.weight.shape();
            if layer.bias.shape() != (1, out) {
                return Err(Error::dim("layer bias", layer.weight.shape(), layer.bias.shape()));
            }
            if let Some(next) = layers.get(i + 1) {
                if next.weight.rows() != out {
                    return Err(Error::dim("layer chain", layer.weight.shape(), next.weight.shape()));
                }
            }
            if !layer.weight.is_finite() || !layer.bias.is_finite() {
                return Err(Error::Validation(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Network { layers, slope })
    }

    /// Weights i.i.d. `N(0, scale^2)`, biases zero.
    pub fn init(shapes: &[LayerShape], rng: &mut Rng, scale: f64, slope: f64) -> Result<Self> {
        let layers = shapes
            .iter()
            .map(|s| Layer {
                weight: rng.normal_matrix(s.input, s.output, scale),
                bias: Matrix::zeros(1, s.output),
                activation: s.activation,
            })
            .collect();
        Network::new(layers, slope)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.cols()
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        self.layers
            .iter()
            .map(|l| LayerShape::new(l.weight.rows(), l.weight.cols(), l.activation))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameters in binding order: weight then bias, layer by layer.
    pub fn params(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    /// Forward pass without recording. Produces bit-identical values to
    /// [`BoundNetwork::forward`].
    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.input_dim() {
            return Err(Error::dim("network input", input.shape(), self.layers[0].weight.shape()));
        }
        let mut h = input.clone();
        for layer in &self.layers {
            h = h.matmul(&layer.weight)?.add_row(&layer.bias)?;
            h = match layer.activation {
                Activation::LeakyRelu => {
                    let s = self.slope;
                    h.map(|v| leaky(v, s))
                }
                Activation::Relu => h.map(|v| if v > 0.0 { v } else { v * 0.0 }),
                Activation::None => h,
            };
        }
        Ok(h)
    }

    /// Records the parameters on `tape` as leaves.
    pub fn bind(&self, tape: &mut Tape) -> BoundNetwork {
        let params = self
            .layers
            .iter()
            .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone()), l.activation))
            .collect();
        BoundNetwork {
            params,
            slope: self.slope,
            input_dim: self.input_dim(),
        }
    }

    /// Binds existing tape nodes as the parameters, in the order of
    /// [`Network::params`]. Shapes must match this network's.
    pub fn bind_nodes(&self, tape: &Tape, nodes: &[NodeId]) -> Result<BoundNetwork> {
        if nodes.len() != 2 * self.layers.len() {
            return Err(Error::Usage(format!(
                "expected {} parameter nodes, got {}",
                2 * self.layers.len(),
                nodes.len()
            )));
        }
        let mut params = Vec::with_capacity(self.layers.len());
        for (l, pair) in self.layers.iter().zip(nodes.chunks(2)) {
            for (m, &n) in [&l.weight, &l.bias].into_iter().zip(pair) {
                if tape.value(n).shape() != m.shape() {
                    return Err(Error::dim("bind_nodes", m.shape(), tape.value(n).shape()));
                }
            }
            params.push((pair[0], pair[1], l.activation));
        }
        Ok(BoundNetwork {
            params,
            slope: self.slope,
            input_dim: self.input_dim(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(Matrix::is_finite)
    }

    /// Bitwise parameter equality.
    pub fn bitwise_eq(&self, other: &Network) -> bool {
        self.slope.to_bits() == other.slope.to_bits()
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.activation == b.activation && a.weight.bitwise_eq(&b.weight) && a.bias.bitwise_eq(&b.bias)
            })
    }
}

/// A network whose parameters are leaves on a tape.
#[derive(Clone, Debug)]
pub struct BoundNetwork {
    params: Vec<(NodeId, NodeId, Activation)>,
    slope: f64,
    input_dim: usize,
}

impl BoundNetwork {
    pub fn forward(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        let shape = tape.value(input).shape();
        if shape.1 != self.input_dim {
            return Err(Error::dim("network input", shape, (self.input_dim, 0)));
        }
        let mut h = input;
        for &(w, b, act) in &self.params {
            h = tape.affine(h, w, b)?;
            h = match act {
                Activation::LeakyRelu => tape.leaky_relu(h, self.slope)?,
                Activation::Relu => tape.relu(h)?,
                Activation::None => h,
            };
        }
        Ok(h)
    }

    /// Parameter nodes in the order of [`Network::params`].
    pub fn param_nodes(&self) -> Vec<NodeId> {
        self.params.iter().flat_map(|&(w, b, _)| [w, b]).collect()
    }
}
