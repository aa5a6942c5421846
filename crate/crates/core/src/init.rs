//! Weight constructors: the identity-preserving family (IDI/IDIC), the
//! zero-preserving family (IDIZ/IDIZC), the channel-maintain kernel, and the
//! usual comparison baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{LayerParams, LayerSpec, NetworkSpec, ParamSet};
use crate::tensor::{gaussian_matrix, hadamard, qr_thin, ConvKernel, Matrix, Rng};

pub const DEFAULT_TAU: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_LOOSE_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Idi,
    Idiz,
    Idic,
    Idizc,
    ChannelMaintain,
    Hadamard,
    Xavier,
    Kaiming,
    Orthogonal,
    Zero,
    PartialIdentityZeroPad,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Idi,
        Method::Idiz,
        Method::Idic,
        Method::Idizc,
        Method::ChannelMaintain,
        Method::Hadamard,
        Method::Xavier,
        Method::Kaiming,
        Method::Orthogonal,
        Method::Zero,
        Method::PartialIdentityZeroPad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Idi => "idi",
            Method::Idiz => "idiz",
            Method::Idic => "idic",
            Method::Idizc => "idizc",
            Method::ChannelMaintain => "channel-maintain",
            Method::Hadamard => "hadamard",
            Method::Xavier => "xavier",
            Method::Kaiming => "kaiming",
            Method::Orthogonal => "orthogonal",
            Method::Zero => "zero",
            Method::PartialIdentityZeroPad => "partial-identity-zero-pad",
        }
    }

    /// Methods that only make sense for 4-D kernels.
    pub fn is_kernel_only(self) -> bool {
        matches!(self, Method::Idic | Method::Idizc | Method::ChannelMaintain)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match norm.as_str() {
            "partial-identity" | "pz" | "zero-pad" => "partial-identity-zero-pad",
            "he" => "kaiming",
            "glorot" => "xavier",
            "channel" | "dirac" => "channel-maintain",
            other => other,
        };
        Method::ALL
            .into_iter()
            .find(|m| m.name() == alias)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown init method '{s}'")))
    }
}

/// A named initializer with its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub method: Method,
    pub tau: f64,
    pub epsilon: f64,
    /// Std of the noise added to the nonzero IDI entries; 0 disables it.
    pub loose_eps: f64,
    pub seed: u64,
}

impl InitSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            tau: DEFAULT_TAU,
            epsilon: DEFAULT_EPSILON,
            loose_eps: DEFAULT_LOOSE_EPS,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::Idiz | Method::Idizc if self.epsilon.is_nan() || self.epsilon <= 0.0 => Err(Error::InvalidArgument(
                format!("{} requires epsilon > 0, got {}", self.method, self.epsilon),
            )),
            Method::Idi | Method::Idic | Method::ChannelMaintain if self.tau == 0.0 => Err(
                Error::InvalidArgument(format!("{} requires tau != 0", self.method)),
            ),
            _ if self.loose_eps < 0.0 || !self.loose_eps.is_finite() => Err(
                Error::InvalidArgument(format!("loose_eps must be >= 0, got {}", self.loose_eps)),
            ),
            _ => Ok(()),
        }
    }

    /// Builds a `d_out x d_in` weight. Kernel-only methods are rejected.
    pub fn build_matrix(&self, d_out: usize, d_in: usize) -> Result<Matrix> {
        self.validate()?;
        check_dims(d_out, d_in)?;
        let mut rng = Rng::new(self.seed);
        match self.method {
            Method::Idi => Ok(idi(d_out, d_in, self.tau, self.loose_eps, &mut rng)),
            Method::Idiz => Ok(idiz(d_out, d_in, self.epsilon)),
            m if m.is_kernel_only() => Err(Error::InvalidArgument(format!(
                "{m} builds convolution kernels; pass kernel dimensions"
            ))),
            m => baseline(m, d_out, d_in, &mut rng),
        }
    }

    /// Builds a `k x k x c_in x c_out` kernel. Matrix methods are applied to
    /// the `c_out x (k·k·c_in)` view and reshaped.
    pub fn build_kernel(&self, k: usize, c_in: usize, c_out: usize) -> Result<ConvKernel> {
        self.validate()?;
        check_dims(c_out, k * k * c_in)?;
        let mut rng = Rng::new(self.seed);
        match self.method {
            Method::Idic | Method::Idi => Ok(idic(k, c_in, c_out, self.tau, self.loose_eps, &mut rng)),
            Method::Idizc | Method::Idiz => Ok(idizc(k, c_in, c_out, self.epsilon)),
            Method::ChannelMaintain => channel_maintain(k, c_in, c_out, self.tau),
            m => ConvKernel::from_matrix(baseline(m, c_out, k * k * c_in, &mut rng)?, k, k, c_in),
        }
    }
}

fn check_dims(d_out: usize, d_in: usize) -> Result<()> {
    if d_out == 0 || d_in == 0 {
        return Err(Error::InvalidArgument(format!(
            "dimensions must be positive, got {d_out}x{d_in}"
        )));
    }
    Ok(())
}

/// Identity-preserving weight: entry (m, j) is `tau` when `m ≡ j (mod d_in)`
/// and 0 otherwise, so for `d_out = q·d_in` the layer outputs `q` stacked
/// copies of its input and for `d_out < d_in` it keeps the first `d_out`
/// coordinates.
///
/// With `loose_eps > 0` each nonzero entry is drawn from `N(tau, loose_eps²)`
/// instead; structural zeros stay exactly zero.
pub fn idi(d_out: usize, d_in: usize, tau: f64, loose_eps: f64, rng: &mut Rng) -> Matrix {
    let mut w = Matrix::zeros(d_out, d_in);
    for m in 0..d_out {
        for j in (m % d_in..d_in).step_by(d_in.max(1)) {
            debug_assert_eq!(m % d_in, j % d_in);
            w[(m, j)] = if loose_eps > 0.0 {
                rng.normal(tau, loose_eps)
            } else {
                tau
            };
        }
    }
    w
}

/// Zero-preserving weight. Every row carries one `+epsilon` and one
/// `-epsilon`, so on inputs with i.i.d. coordinates of variance φ the
/// outputs have mean 0 and variance `2φε²`.
///
/// * `d_out < d_in`: `idi(ε)` on the leading block, and the trailing
///   `d_out x (d_in - d_out)` block is filled with the `-ε` identity pattern
///   using that block's column count as the modulus.
/// * `d_out >= d_in`: `idi(ε)`, plus `-ε` at column `(m mod d_in + 1) mod d_in`
///   of each row `m` (the wrapped neighbour of the `+ε` entry). When
///   `d_in == 1` the neighbour is the `+ε` entry itself and the row keeps `+ε`.
pub fn idiz(d_out: usize, d_in: usize, epsilon: f64) -> Matrix {
    let mut w = Matrix::zeros(d_out, d_in);
    for m in 0..d_out {
        if m < d_in {
            w[(m, m)] = epsilon;
        } else {
            w[(m, m % d_in)] = epsilon;
        }
    }
    if d_out < d_in {
        let block = d_in - d_out;
        for m in 0..d_out {
            for jb in (m % block..block).step_by(block) {
                w[(m, d_out + jb)] = -epsilon;
            }
        }
    } else if d_in > 1 {
        for m in 0..d_out {
            w[(m, (m % d_in + 1) % d_in)] = -epsilon;
        }
    }
    w
}

/// Patch-maintain kernel: `idi` on the `c_out x (k·k·c_in)` view.
pub fn idic(k: usize, c_in: usize, c_out: usize, tau: f64, loose_eps: f64, rng: &mut Rng) -> ConvKernel {
    let m = idi(c_out, k * k * c_in, tau, loose_eps, rng);
    ConvKernel::from_matrix(m, k, k, c_in).expect("idi view has kernel shape")
}

/// Zero-preserving patch kernel: `idiz` on the `c_out x (k·k·c_in)` view.
pub fn idizc(k: usize, c_in: usize, c_out: usize, epsilon: f64) -> ConvKernel {
    let m = idiz(c_out, k * k * c_in, epsilon);
    ConvKernel::from_matrix(m, k, k, c_in).expect("idiz view has kernel shape")
}

/// Dirac-style kernel: zero everywhere except the centre tap, which holds
/// `idi(c_out, c_in, tau)`. Requires odd `k`.
pub fn channel_maintain(k: usize, c_in: usize, c_out: usize, tau: f64) -> Result<ConvKernel> {
    if k.is_multiple_of(2) {
        return Err(Error::UnsupportedShape(format!(
            "channel-maintain needs an odd kernel size, got {k}"
        )));
    }
    let centre = (k - 1) / 2;
    let mut kernel = ConvKernel::zeros(k, k, c_in, c_out);
    for co in 0..c_out {
        kernel.set(co, centre, centre, co % c_in, tau);
    }
    Ok(kernel)
}

/// Comparison initializers.
///
/// Xavier is uniform on `±√(6/(d_in+d_out))`; Kaiming is `N(0, 2/d_in)`;
/// Orthogonal takes the QR factor of a Gaussian draw with `diag(R) > 0`;
/// Hadamard is `H_n/√n` and needs a square power-of-two shape.
pub fn baseline(method: Method, d_out: usize, d_in: usize, rng: &mut Rng) -> Result<Matrix> {
    check_dims(d_out, d_in)?;
    match method {
        Method::Xavier => {
            let limit = (6.0 / (d_in + d_out) as f64).sqrt();
            Ok(Matrix::from_fn(d_out, d_in, |_, _| rng.uniform_range(-limit, limit)))
        }
        Method::Kaiming => Ok(gaussian_matrix(rng, d_out, d_in, 0.0, (2.0 / d_in as f64).sqrt())),
        Method::Orthogonal => {
            if d_out >= d_in {
                let g = gaussian_matrix(rng, d_out, d_in, 0.0, 1.0);
                Ok(qr_thin(&g)?.0)
            } else {
                let g = gaussian_matrix(rng, d_in, d_out, 0.0, 1.0);
                Ok(qr_thin(&g)?.0.transpose())
            }
        }
        Method::Zero => Ok(Matrix::zeros(d_out, d_in)),
        Method::PartialIdentityZeroPad => Ok(Matrix::from_fn(d_out, d_in, |r, c| {
            if r == c {
                1.0
            } else {
                0.0
            }
        })),
        Method::Hadamard => {
            if d_out != d_in {
                return Err(Error::UnsupportedSize(format!(
                    "hadamard needs a square matrix, got {d_out}x{d_in}"
                )));
            }
            Ok(hadamard(d_out)?.scale(1.0 / (d_out as f64).sqrt()))
        }
        Method::Idi => Ok(idi(d_out, d_in, DEFAULT_TAU, 0.0, rng)),
        Method::Idiz => Ok(idiz(d_out, d_in, DEFAULT_EPSILON)),
        m => Err(Error::InvalidArgument(format!("{m} is not a matrix initializer"))),
    }
}

/// Query/key/value/output projections of one attention layer.
#[derive(Clone, Debug)]
pub struct AttentionWeights {
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
    pub output: Matrix,
}

/// `W_Q`, `W_K`, `W_V` get IDI; the output projection `W_O` gets IDIZ so the
/// attention branch starts (almost) silent.
pub fn init_attention(d_model: usize, tau: f64, epsilon: f64, loose_eps: f64, rng: &mut Rng) -> AttentionWeights {
    AttentionWeights {
        query: idi(d_model, d_model, tau, loose_eps, rng),
        key: idi(d_model, d_model, tau, loose_eps, rng),
        value: idi(d_model, d_model, tau, loose_eps, rng),
        output: idiz(d_model, d_model, epsilon),
    }
}

/// Whole-network initialization rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitPolicy {
    /// IDI/IDIC on every layer; in residual networks IDIZ/IDIZC on the last
    /// weight of each residual stem and on the final classifier. The first
    /// weight uses `tau = √2` when the network contains ReLU, 1 otherwise.
    IdInit { epsilon: f64, loose_eps: f64 },
    /// The same baseline method on every weight and kernel.
    Baseline { method: Method },
}

impl InitPolicy {
    pub fn idinit() -> Self {
        InitPolicy::IdInit {
            epsilon: DEFAULT_EPSILON,
            loose_eps: DEFAULT_LOOSE_EPS,
        }
    }

    pub fn baseline(method: Method) -> Self {
        InitPolicy::Baseline { method }
    }
}

/// Initializes every layer of `net`. Residual gates keep the value set in
/// `net` (or are absent).
pub fn init_network(net: &NetworkSpec, policy: InitPolicy, rng: &mut Rng) -> Result<ParamSet> {
    net.validate()?;
    let residual = net.is_residual();
    let first_tau = if net.uses_relu() {
        std::f64::consts::SQRT_2
    } else {
        1.0
    };
    let last_index = net.layers.len() - 1;
    let mut first = true;
    let tau_for = |first: &mut bool| {
        let t = if *first { first_tau } else { 1.0 };
        *first = false;
        t
    };

    let mut layers = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let params = match *layer {
            LayerSpec::Dense { d_in, d_out, .. } => {
                let weight = match policy {
                    InitPolicy::IdInit { epsilon, loose_eps } => {
                        let tau = tau_for(&mut first);
                        if residual && i == last_index {
                            idiz(d_out, d_in, epsilon)
                        } else {
                            idi(d_out, d_in, tau, loose_eps, rng)
                        }
                    }
                    InitPolicy::Baseline { method } => baseline(method, d_out, d_in, rng)?,
                };
                LayerParams::Dense { weight }
            }
            LayerSpec::Residual {
                width,
                stem_depth,
                gate,
                ..
            } => {
                let mut stem = Vec::with_capacity(stem_depth);
                for s in 0..stem_depth {
                    let w = match policy {
                        InitPolicy::IdInit { epsilon, loose_eps } => {
                            let tau = tau_for(&mut first);
                            if s + 1 == stem_depth {
                                idiz(width, width, epsilon)
                            } else {
                                idi(width, width, tau, loose_eps, rng)
                            }
                        }
                        InitPolicy::Baseline { method } => baseline(method, width, width, rng)?,
                    };
                    stem.push(w);
                }
                LayerParams::Residual {
                    stem,
                    gate: gate.map(|g| Matrix::filled(1, 1, g)),
                }
            }
            LayerSpec::Conv2d { k, c_in, c_out, .. } => {
                let kernel = match policy {
                    InitPolicy::IdInit { epsilon, loose_eps } => {
                        let tau = tau_for(&mut first);
                        if residual && i == last_index {
                            idizc(k, c_in, c_out, epsilon)
                        } else {
                            idic(k, c_in, c_out, tau, loose_eps, rng)
                        }
                    }
                    InitPolicy::Baseline { method } => ConvKernel::from_matrix(
                        baseline(method, c_out, k * k * c_in, rng)?,
                        k,
                        k,
                        c_in,
                    )?,
                };
                LayerParams::Conv { kernel }
            }
        };
        layers.push(params);
    }
    ParamSet::new(net, layers)
}
