//! A small, deterministic feed-forward engine.
//!
//! Samples are rows: a batch is a `batch x features` matrix and a dense layer
//! with weight `W` (`d_out x d_in`) maps `H` to `a(H·Wᵀ)`. Layers carry no
//! bias.

mod conv;
mod engine;
mod jacobian;
mod params;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub use conv::{conv2d_forward, FeatureMap};
pub use engine::{backward, forward, gradients, predict, ForwardTrace, Loss};
pub use jacobian::{io_jacobian, io_jacobian_chain, io_jacobian_fd, FD_STEP};
pub use params::{LayerParams, ParamEntry, ParamSet, SnapshotManifest};
pub use train::{
    cosine_lr, sgd_step, train, BatchMode, EpochRecord, LrSchedule, StepEvent, TrainConfig,
    TrainHistory, DIVERGENCE_LOSS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative at pre-activation `z`. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn apply(self, z: &Matrix) -> Matrix {
        match self {
            Activation::Identity => z.clone(),
            a => z.map(|v| a.eval(v)),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" | "none" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidArgument(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LayerSpec {
    Dense {
        d_in: usize,
        d_out: usize,
        activation: Activation,
    },
    /// `x + g·W_last·a(…a(W_first·x))`: the activation follows every stem
    /// weight except the last, and the skip branch stays linear. Without a
    /// gate, `g` is fixed at 1.
    Residual {
        width: usize,
        stem_depth: usize,
        activation: Activation,
        gate: Option<f64>,
    },
    /// Stride 1, zero "same" padding, forward only. Rows of the batch hold
    /// `c x height x width` feature maps, channel-major.
    Conv2d {
        k: usize,
        c_in: usize,
        c_out: usize,
        height: usize,
        width: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn input_dim(&self) -> usize {
        match *self {
            LayerSpec::Dense { d_in, .. } => d_in,
            LayerSpec::Residual { width, .. } => width,
            LayerSpec::Conv2d {
                c_in,
                height,
                width,
                ..
            } => c_in * height * width,
        }
    }

    pub fn output_dim(&self) -> usize {
        match *self {
            LayerSpec::Dense { d_out, .. } => d_out,
            LayerSpec::Residual { width, .. } => width,
            LayerSpec::Conv2d {
                c_out,
                height,
                width,
                ..
            } => c_out * height * width,
        }
    }

    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Dense { activation, .. }
            | LayerSpec::Residual { activation, .. }
            | LayerSpec::Conv2d { activation, .. } => activation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let net = Self { layers };
        net.validate()?;
        Ok(net)
    }

    /// Plain MLP through `dims`; the last layer uses `output_activation`.
    pub fn mlp(dims: &[usize], hidden: Activation, output_activation: Activation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument("an MLP needs at least two dims".into()));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| LayerSpec::Dense {
                d_in: dims[i],
                d_out: dims[i + 1],
                activation: if i + 1 == n { output_activation } else { hidden },
            })
            .collect();
        Self::new(layers)
    }

    /// `blocks` identical residual blocks of the given width.
    pub fn residual_mlp(
        width: usize,
        blocks: usize,
        stem_depth: usize,
        activation: Activation,
        gate: Option<f64>,
    ) -> Result<Self> {
        let layers = (0..blocks)
            .map(|_| LayerSpec::Residual {
                width,
                stem_depth,
                activation,
                gate,
            })
            .collect();
        Self::new(layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Dense { d_in, d_out, .. } if d_in == 0 || d_out == 0 => {
                    return Err(Error::InvalidArgument(format!("layer {i}: zero dimension")));
                }
                LayerSpec::Residual {
                    width, stem_depth, ..
                } if width == 0 || stem_depth == 0 => {
                    return Err(Error::InvalidArgument(format!(
                        "layer {i}: residual block needs width and stem depth >= 1"
                    )));
                }
                LayerSpec::Conv2d {
                    k,
                    c_in,
                    c_out,
                    height,
                    width,
                    ..
                } if k == 0 || c_in == 0 || c_out == 0 || height == 0 || width == 0 => {
                    return Err(Error::InvalidArgument(format!("layer {i}: zero dimension")));
                }
                _ => {}
            }
            if i > 0 {
                let prev = self.layers[i - 1].output_dim();
                if prev != layer.input_dim() {
                    return Err(Error::Shape {
                        op: "NetworkSpec",
                        detail: format!(
                            "layer {} outputs {prev} features but layer {i} expects {}",
                            i - 1,
                            layer.input_dim()
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn is_residual(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::Residual { .. }))
    }

    pub fn uses_relu(&self) -> bool {
        self.layers.iter().any(|l| l.activation() == Activation::Relu)
    }

    pub fn is_linear(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.activation() == Activation::Identity)
    }

    pub fn has_conv(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::Conv2d { .. }))
    }
}
