//! Probes that measure what the initializers do to training: gradient
//! asymmetry, layer symmetry, update rank, signal variance, dead weights,
//! scalar toy dynamics, deep stems, Jacobian spectra and MNIST accuracy.

mod asymmetry;
mod dead;
mod isometry;
mod longstem;
mod mnist;
mod rank;
mod symmetry;
mod toy;
mod variance;

pub use asymmetry::{
    asymmetry_report,
    asymmetry_bounds, asymmetry_magnitude, monte_carlo_asymmetry, two_step_gradient, AsymmetryEstimate,
    AsymmetryProbe,
};
pub use dead::{dead_neuron_experiment, DeadNeuronConfig, DeadVariant, DEAD_THRESHOLD};
pub use isometry::{isometry_probe, jacobian_spectrum, IsometryConfig, JacobianSpectrum};
pub use longstem::{long_stem_probe, LongStemConfig, EXPLOSION_RATIO};
pub use mnist::{mnist_experiment, mnist_on, MnistConfig, MnistNet};
pub use rank::{rank_experiment, RankConfig, RankInit};
pub use symmetry::{layer_distance, symmetry_experiment, SymmetryConfig, SymmetryMode};
pub use toy::{toy_dynamics, ToyConfig, ToyResult};
pub use variance::{variance_probe, NetKind, VarianceConfig};

use serde::{Deserialize, Serialize};

use crate::init::{InitPolicy, Method};
use crate::tensor::Rng;

/// Independent child seed for sub-task `stream` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    Rng::with_stream(seed, stream + 1).next_u64()
}

/// Which initialization a probe compares: IDInit or one named baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitChoice {
    Idinit,
    Xavier,
    Kaiming,
    Orthogonal,
    Zero,
    PartialIdentityZeroPad,
}

impl InitChoice {
    pub fn policy(self) -> InitPolicy {
        match self {
            InitChoice::Idinit => InitPolicy::idinit(),
            InitChoice::Xavier => InitPolicy::baseline(Method::Xavier),
            InitChoice::Kaiming => InitPolicy::baseline(Method::Kaiming),
            InitChoice::Orthogonal => InitPolicy::baseline(Method::Orthogonal),
            InitChoice::Zero => InitPolicy::baseline(Method::Zero),
            InitChoice::PartialIdentityZeroPad => InitPolicy::baseline(Method::PartialIdentityZeroPad),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InitChoice::Idinit => "idinit",
            InitChoice::Xavier => "xavier",
            InitChoice::Kaiming => "kaiming",
            InitChoice::Orthogonal => "orthogonal",
            InitChoice::Zero => "zero",
            InitChoice::PartialIdentityZeroPad => "partial-identity-zero-pad",
        }
    }
}

impl std::str::FromStr for InitChoice {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "idinit" | "idi" => Ok(InitChoice::Idinit),
            "xavier" | "glorot" => Ok(InitChoice::Xavier),
            "kaiming" | "he" => Ok(InitChoice::Kaiming),
            "orthogonal" => Ok(InitChoice::Orthogonal),
            "zero" => Ok(InitChoice::Zero),
            "partial-identity-zero-pad" | "partial-identity" | "pz" => Ok(InitChoice::PartialIdentityZeroPad),
            _ => Err(crate::Error::InvalidArgument(format!("unknown init '{s}'"))),
        }
    }
}
