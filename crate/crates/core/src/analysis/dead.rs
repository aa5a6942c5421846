use serde::{Deserialize, Serialize};

use crate::data::synth_linear_map;
use crate::error::{Error, Result};
use crate::init::{init_network, InitPolicy};
use crate::net::{train, Activation, BatchMode, LayerParams, Loss, LrSchedule, NetworkSpec, TrainConfig};
use crate::report::ExperimentReport;
use crate::tensor::{gaussian_matrix, Matrix, Rng};

use super::derive_seed;

/// Entries whose summed absolute updates stay below this are dead.
pub const DEAD_THRESHOLD: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeadVariant {
    /// Last stem weight all zeros behind a zero gate.
    ZeroLast,
    /// Last stem weight IDIZ behind a zero gate.
    IdizLast,
}

impl DeadVariant {
    pub fn name(self) -> &'static str {
        match self {
            DeadVariant::ZeroLast => "zero-last",
            DeadVariant::IdizLast => "idiz-last",
        }
    }
}

impl std::str::FromStr for DeadVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "zero-last" | "zero" => Ok(DeadVariant::ZeroLast),
            "idiz-last" | "idiz" => Ok(DeadVariant::IdizLast),
            other => Err(Error::InvalidArgument(format!("unknown dead-neuron variant '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeadNeuronConfig {
    pub variant: DeadVariant,
    pub steps: usize,
    pub width: usize,
    pub blocks: usize,
    pub n_samples: usize,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for DeadNeuronConfig {
    fn default() -> Self {
        Self {
            variant: DeadVariant::IdizLast,
            steps: 100,
            width: 16,
            blocks: 2,
            n_samples: 128,
            epsilon: 1e-6,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 0,
        }
    }
}

/// Full-batch training of a gated ReLU residual MLP (gate 0) on a random
/// linear map; tracks the fraction of entries of the last stem weights that
/// have never moved.
pub fn dead_neuron_experiment(cfg: &DeadNeuronConfig) -> Result<ExperimentReport> {
    let net = NetworkSpec::residual_mlp(cfg.width, cfg.blocks, 2, Activation::Relu, Some(0.0))?;
    let mut rng = Rng::new(cfg.seed);
    let mut params = init_network(
        &net,
        InitPolicy::IdInit {
            epsilon: cfg.epsilon,
            loose_eps: crate::init::DEFAULT_LOOSE_EPS,
        },
        &mut rng,
    )?;
    if cfg.variant == DeadVariant::ZeroLast {
        for layer in &mut params.layers {
            if let LayerParams::Residual { stem, .. } = layer {
                let last = stem.last_mut().expect("stem depth 2");
                *last = Matrix::zeros(last.rows(), last.cols());
            }
        }
    }
    // Positions of the last stem weights in the canonical tensor order.
    let watched: Vec<usize> = params
        .roles()
        .iter()
        .enumerate()
        .filter(|(_, (_, role))| role == "stem1")
        .map(|(i, _)| i)
        .collect();
    let mut moved: Vec<Matrix> = watched
        .iter()
        .map(|&i| {
            let t = params.tensors()[i];
            Matrix::zeros(t.rows(), t.cols())
        })
        .collect();

    let map = gaussian_matrix(&mut rng, cfg.width, cfg.width, 0.0, 1.0 / (cfg.width as f64).sqrt());
    let data = synth_linear_map(cfg.n_samples, &map, 0.01, derive_seed(cfg.seed, 0));
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate,
        momentum: cfg.momentum,
        weight_decay: 0.0,
        batch_size: cfg.n_samples,
        epochs: cfg.steps,
        loss: Loss::Mse,
        mode: BatchMode::FullBatch,
        lr_schedule: LrSchedule::Constant,
        seed: derive_seed(cfg.seed, 1),
        snapshot_every: 0,
    };

    let total: usize = moved.iter().map(|m| m.len()).sum();
    let dead_fraction = |moved: &[Matrix]| {
        let dead = moved
            .iter()
            .flat_map(|m| m.data().iter())
            .filter(|&&v| v < DEAD_THRESHOLD)
            .count();
        dead as f64 / total as f64
    };
    let mut report = ExperimentReport::new("deadneuron", cfg.variant.name(), cfg.seed, cfg);
    report.push("dead_fraction", 0, dead_fraction(&moved));
    let history = train(&net, &mut params, &data, None, &tc, &mut |ev| {
        let velocity = ev.params.velocity();
        for (acc, &i) in moved.iter_mut().zip(&watched) {
            for (a, v) in acc.data_mut().iter_mut().zip(velocity[i].data()) {
                *a += v.abs();
            }
        }
        report.push("dead_fraction", ev.step, dead_fraction(&moved));
        report.push("loss", ev.step, ev.loss);
    })?;
    report.diverged = history.diverged;
    report.set("dead_fraction", dead_fraction(&moved));
    report.set("steps", history.steps as f64);
    let gates: Vec<f64> = params
        .layers
        .iter()
        .filter_map(|l| match l {
            LayerParams::Residual { gate: Some(g), .. } => Some(g[(0, 0)].abs()),
            _ => None,
        })
        .collect();
    report.set("max_abs_gate", gates.iter().copied().fold(0.0, f64::max));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_steps_means_all_dead() {
        for variant in [DeadVariant::ZeroLast, DeadVariant::IdizLast] {
            let cfg = DeadNeuronConfig {
                variant,
                steps: 0,
                ..Default::default()
            };
            assert_eq!(dead_neuron_experiment(&cfg).unwrap().get("dead_fraction"), 1.0);
        }
    }
}
