use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::init::init_network;
use crate::net::{io_jacobian, Activation, NetworkSpec};
use crate::report::ExperimentReport;
use crate::tensor::{gaussian_matrix, singular_values, Matrix, Rng};

use super::InitChoice;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianSpectrum {
    /// Mean squared singular value.
    pub chi: f64,
    /// Descending.
    pub singular_values: Vec<f64>,
}

impl JacobianSpectrum {
    pub fn log_singular_values(&self) -> Vec<f64> {
        self.singular_values.iter().map(|s| s.ln()).collect()
    }
}

pub fn jacobian_spectrum(j: &Matrix) -> JacobianSpectrum {
    let sv = singular_values(j);
    let chi = sv.iter().map(|s| s * s).sum::<f64>() / sv.len().max(1) as f64;
    JacobianSpectrum {
        chi,
        singular_values: sv,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsometryConfig {
    pub init: InitChoice,
    pub blocks: usize,
    pub width: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for IsometryConfig {
    fn default() -> Self {
        Self {
            init: InitChoice::Idinit,
            blocks: 64,
            width: 32,
            activation: Activation::Relu,
            seed: 0,
        }
    }
}

/// Input–output Jacobian spectrum of a freshly initialized residual MLP at a
/// standard normal input. Trace `log_singular_value` is indexed by rank.
pub fn isometry_probe(cfg: &IsometryConfig) -> Result<ExperimentReport> {
    let net = NetworkSpec::residual_mlp(cfg.width, cfg.blocks, 2, cfg.activation, None)?;
    let mut rng = Rng::new(cfg.seed);
    let params = init_network(&net, cfg.init.policy(), &mut rng)?;
    let x = gaussian_matrix(&mut rng, 1, cfg.width, 0.0, 1.0);
    let spec = jacobian_spectrum(&io_jacobian(&net, &params, x.row(0))?);
    let mode = format!("{}-{}blocks", cfg.init.name(), cfg.blocks);
    let mut report = ExperimentReport::new("isometry", &mode, cfg.seed, cfg);
    for (i, l) in spec.log_singular_values().into_iter().enumerate() {
        report.push("log_singular_value", i, l);
    }
    report.set("chi", spec.chi);
    report.set("sigma_max", spec.singular_values[0]);
    report.set("sigma_min", *spec.singular_values.last().unwrap());
    report.diverged = !spec.chi.is_finite();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_chi() {
        let s = jacobian_spectrum(&Matrix::identity(5));
        assert_eq!(s.chi, 1.0);
        assert_eq!(s.log_singular_values(), vec![0.0; 5]);
        let s = jacobian_spectrum(&Matrix::identity(4).scale(2.0));
        assert_eq!(s.chi, 4.0);
    }
}
