//! The generators, critics and attribute regressor.
//!
//! Topology (all hidden layers leaky ReLU):
//!
//! | net | layers                                              |
//! |-----|-----------------------------------------------------|
//! | G1  | noise -> prior                                      |
//! | G2  | prior -> hidden -> feature (ReLU out)               |
//! | Gc  | prior + embed -> hidden -> feature (ReLU out)       |
//! | D0  | feature -> hidden -> 1 (linear out)                 |
//! | Dc  | feature + embed -> hidden -> 1 (linear out)         |
//! | A   | feature -> embed (linear)                           |
//!
//! `G0 = G2 . G1`; the output of G1 is the structured prior shared with Gc.

mod checkpoint;
mod network;

use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use network::{Activation, BoundNetwork, Layer, LayerShape, Network, DEFAULT_LEAKY_SLOPE};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

/// Default standard deviation of initial weights.
pub const DEFAULT_INIT_SCALE: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub noise_dim: usize,
    pub prior_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub embed_dim: usize,
}

impl Default for ModelDims {
    /// Full-size widths with the 312-wide attribute embedding.
    fn default() -> Self {
        ModelDims {
            noise_dim: 512,
            prior_dim: 1024,
            hidden_dim: 4096,
            feature_dim: 2048,
            embed_dim: 312,
        }
    }
}

impl ModelDims {
    pub fn with_embed_dim(self, embed_dim: usize) -> Self {
        ModelDims { embed_dim, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("noise_dim", self.noise_dim),
            ("prior_dim", self.prior_dim),
            ("hidden_dim", self.hidden_dim),
            ("feature_dim", self.feature_dim),
            ("embed_dim", self.embed_dim),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Whether generation goes through the structured prior.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// G1 feeds its output to both G2 and Gc.
    #[default]
    Decoupled,
    /// Single conditional generator fed raw `prior_dim`-wide noise; G1 and
    /// G2 are carried along but never used.
    NotDecoupled,
}

/// Layer shapes of every network, without allocating weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    pub g1: Vec<LayerShape>,
    pub g2: Vec<LayerShape>,
    pub gc: Vec<LayerShape>,
    pub d0: Vec<LayerShape>,
    pub dc: Vec<LayerShape>,
}

impl Topology {
    pub fn new(d: &ModelDims) -> Self {
        use Activation::*;
        Topology {
            g1: vec![LayerShape::new(d.noise_dim, d.prior_dim, LeakyRelu)],
            g2: vec![
                LayerShape::new(d.prior_dim, d.hidden_dim, LeakyRelu),
                LayerShape::new(d.hidden_dim, d.feature_dim, Relu),
            ],
            gc: vec![
                LayerShape::new(d.prior_dim + d.embed_dim, d.hidden_dim, LeakyRelu),
                LayerShape::new(d.hidden_dim, d.feature_dim, Relu),
            ],
            d0: vec![
                LayerShape::new(d.feature_dim, d.hidden_dim, LeakyRelu),
                LayerShape::new(d.hidden_dim, 1, None),
            ],
            dc: vec![
                LayerShape::new(d.feature_dim + d.embed_dim, d.hidden_dim, LeakyRelu),
                LayerShape::new(d.hidden_dim, 1, None),
            ],
        }
    }

    pub fn parameter_counts(&self) -> [usize; 5] {
        let count = |s: &[LayerShape]| s.iter().map(LayerShape::parameter_count).sum();
        [count(&self.g1), count(&self.g2), count(&self.gc), count(&self.d0), count(&self.dc)]
    }
}

/// The five adversarial networks.
#[derive(Clone, Debug, PartialEq)]
pub struct DecGan {
    pub dims: ModelDims,
    pub architecture: Architecture,
    pub g1: Network,
    pub g2: Network,
    pub gc: Network,
    pub d0: Network,
    pub dc: Network,
}

/// Initializes all five networks with the default leaky slope.
pub fn init_decgan(dims: &ModelDims, rng: &mut Rng, scale: f64) -> Result<DecGan> {
    DecGan::init(dims, Architecture::Decoupled, rng, scale, DEFAULT_LEAKY_SLOPE)
}

impl DecGan {
    pub fn init(dims: &ModelDims, architecture: Architecture, rng: &mut Rng, scale: f64, slope: f64) -> Result<Self> {
        dims.validate()?;
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("init scale {scale} must be finite and >= 0")));
        }
        let t = Topology::new(dims);
        Ok(DecGan {
            dims: *dims,
            architecture,
            g1: Network::init(&t.g1, rng, scale, slope)?,
            g2: Network::init(&t.g2, rng, scale, slope)?,
            gc: Network::init(&t.gc, rng, scale, slope)?,
            d0: Network::init(&t.d0, rng, scale, slope)?,
            dc: Network::init(&t.dc, rng, scale, slope)?,
        })
    }

    /// Checks every network against the topology implied by `dims`.
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let t = Topology::new(&self.dims);
        let nets = [
            ("g1", &self.g1, &t.g1),
            ("g2", &self.g2, &t.g2),
            ("gc", &self.gc, &t.gc),
            ("d0", &self.d0, &t.d0),
            ("dc", &self.dc, &t.dc),
        ];
        for (name, net, shapes) in nets {
            if &net.shapes() != shapes {
                return Err(Error::Validation(format!("{name} does not match the declared dims")));
            }
        }
        Ok(())
    }

    pub fn is_decoupled(&self) -> bool {
        self.architecture == Architecture::Decoupled
    }

    /// Draws `n` noise rows, `noise_dim` wide (or `prior_dim` wide when not
    /// decoupled).
    pub fn sample_noise(&self, n: usize, rng: &mut Rng) -> Matrix {
        let width = match self.architecture {
            Architecture::Decoupled => self.dims.noise_dim,
            Architecture::NotDecoupled => self.dims.prior_dim,
        };
        rng.normal_matrix(n, width, 1.0)
    }

    /// Conditioning input for Gc: `G1(z)` when decoupled, `z` itself otherwise.
    pub fn prior_from_noise(&self, z: &Matrix) -> Result<Matrix> {
        match self.architecture {
            Architecture::Decoupled => structured_prior(&self.g1, z),
            Architecture::NotDecoupled => {
                if z.cols() != self.dims.prior_dim {
                    return Err(Error::dim("raw prior", z.shape(), (z.rows(), self.dims.prior_dim)));
                }
                Ok(z.clone())
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        [&self.g1, &self.g2, &self.gc, &self.d0, &self.dc]
            .iter()
            .map(|n| n.parameter_count())
            .sum()
    }
}

/// `s = G1(z)`.
pub fn structured_prior(g1: &Network, z: &Matrix) -> Result<Matrix> {
    g1.forward(z)
}

/// `x0 = G2(G1(z))`.
pub fn generate_unconditional(g1: &Network, g2: &Network, z: &Matrix) -> Result<Matrix> {
    g2.forward(&structured_prior(g1, z)?)
}

/// `xc = Gc(s || c)`.
pub fn generate_conditional(gc: &Network, s: &Matrix, c: &Matrix) -> Result<Matrix> {
    if s.rows() != c.rows() {
        return Err(Error::dim("generate_conditional", s.shape(), c.shape()));
    }
    gc.forward(&s.concat_cols(c)?)
}

/// Unconstrained critic score per row. For Dc the caller concatenates the
/// embedding onto the features.
pub fn discriminate(d: &Network, input: &Matrix) -> Result<Matrix> {
    d.forward(input)
}

/// `a = A(x)`.
pub fn regress_attributes(a: &Network, x: &Matrix) -> Result<Matrix> {
    a.forward(x)
}

/// The attribute regressor as a network (single linear layer).
pub fn regressor_network(weight: Matrix, bias: Matrix) -> Result<Network> {
    Network::new(
        vec![Layer {
            weight,
            bias,
            activation: Activation::None,
        }],
        DEFAULT_LEAKY_SLOPE,
    )
}
