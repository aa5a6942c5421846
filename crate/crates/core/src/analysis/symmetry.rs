use serde::{Deserialize, Serialize};

use crate::data::synth_linear_map;
use crate::error::{shape_err, Error, Result};
use crate::net::{predict, train, Activation, BatchMode, LayerParams, Loss, LrSchedule, NetworkSpec, ParamSet, TrainConfig};
use crate::report::ExperimentReport;
use crate::tensor::Matrix;

use super::derive_seed;

/// Mean over layer pairs of the mean absolute elementwise difference.
pub fn layer_distance(layers: &[&Matrix]) -> Result<f64> {
    if layers.len() < 2 {
        return Err(Error::InvalidArgument("layer distance needs at least two layers".into()));
    }
    let shape = layers[0].shape();
    if let Some(bad) = layers.iter().find(|m| m.shape() != shape) {
        return Err(shape_err("layer_distance", format!("{:?} vs {:?}", bad.shape(), shape)));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..layers.len() {
        for j in i + 1..layers.len() {
            let sum: f64 = layers[i].data().iter().zip(layers[j].data()).map(|(a, b)| (a - b).abs()).sum();
            total += sum / layers[i].len() as f64;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryMode {
    Gd,
    GdMomentum,
    Sgd,
    SgdMomentum,
}

impl SymmetryMode {
    pub fn name(self) -> &'static str {
        match self {
            SymmetryMode::Gd => "gd",
            SymmetryMode::GdMomentum => "gd-momentum",
            SymmetryMode::Sgd => "sgd",
            SymmetryMode::SgdMomentum => "sgd-momentum",
        }
    }
}

impl std::str::FromStr for SymmetryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '+'], "-").as_str() {
            "gd" => Ok(SymmetryMode::Gd),
            "gd-momentum" | "gdm" => Ok(SymmetryMode::GdMomentum),
            "sgd" => Ok(SymmetryMode::Sgd),
            "sgd-momentum" | "sgdm" => Ok(SymmetryMode::SgdMomentum),
            other => Err(Error::InvalidArgument(format!("unknown symmetry mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymmetryConfig {
    pub mode: SymmetryMode,
    pub dim: usize,
    pub layers: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub noise_std: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for SymmetryConfig {
    fn default() -> Self {
        Self {
            mode: SymmetryMode::SgdMomentum,
            dim: 10,
            layers: 4,
            n_train: 2000,
            n_test: 2000,
            noise_std: 1e-2,
            batch_size: 4,
            epochs: 200,
            learning_rate: 3e-4,
            momentum: 0.9,
            seed: 0,
        }
    }
}

fn per_element_mse(out: &Matrix, target: &Matrix) -> f64 {
    out.sub(target).expect("same shape").frobenius_norm_sq() / out.len() as f64
}

/// Trains `layers` square linear layers from the identity on `Y = −X + ξ`
/// and records, per epoch, the distance between layers and the test MSE.
pub fn symmetry_experiment(cfg: &SymmetryConfig) -> Result<ExperimentReport> {
    let d = cfg.dim;
    let net = NetworkSpec::mlp(&vec![d; cfg.layers + 1], Activation::Identity, Activation::Identity)?;
    let layers = (0..cfg.layers)
        .map(|_| LayerParams::Dense {
            weight: Matrix::identity(d),
        })
        .collect();
    let mut params = ParamSet::new(&net, layers)?;
    let map = Matrix::identity(d).scale(-1.0);
    let train_set = synth_linear_map(cfg.n_train, &map, cfg.noise_std, derive_seed(cfg.seed, 0));
    let test_set = synth_linear_map(cfg.n_test, &map, cfg.noise_std, derive_seed(cfg.seed, 1));

    let (mode, momentum) = match cfg.mode {
        SymmetryMode::Gd => (BatchMode::FullBatch, 0.0),
        SymmetryMode::GdMomentum => (BatchMode::FullBatch, cfg.momentum),
        SymmetryMode::Sgd => (BatchMode::MiniBatch, 0.0),
        SymmetryMode::SgdMomentum => (BatchMode::MiniBatch, cfg.momentum),
    };
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate,
        momentum,
        weight_decay: 0.0,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        loss: Loss::Mse,
        mode,
        lr_schedule: LrSchedule::Constant,
        seed: derive_seed(cfg.seed, 2),
        snapshot_every: 0,
    };

    let mut report = ExperimentReport::new("symmetry", cfg.mode.name(), cfg.seed, cfg);
    let initial_mse = per_element_mse(&predict(&net, &params, &test_set.inputs)?, &test_set.targets);
    report.push("layer_distance", 0, layer_distance(&params.tensors())?);
    report.push("test_mse", 0, initial_mse);

    let mut failure = None;
    let history = train(&net, &mut params, &train_set, None, &tc, &mut |ev| {
        if !ev.epoch_end || failure.is_some() {
            return;
        }
        let step = || -> Result<(f64, f64)> {
            let dist = layer_distance(&ev.params.tensors())?;
            let mse = per_element_mse(&predict(&net, ev.params, &test_set.inputs)?, &test_set.targets);
            Ok((dist, mse))
        };
        match step() {
            Ok((dist, mse)) => {
                report.push("layer_distance", ev.epoch, dist);
                report.push("test_mse", ev.epoch, mse);
            }
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    report.diverged = history.diverged;
    let final_mse = report.trace("test_mse").and_then(|t| t.last()).unwrap_or(f64::NAN);
    let final_dist = report.trace("layer_distance").and_then(|t| t.last()).unwrap_or(f64::NAN);
    report.set("initial_test_mse", initial_mse);
    report.set("final_test_mse", final_mse);
    report.set("test_mse_ratio", final_mse / initial_mse);
    report.set("final_layer_distance", final_dist);
    report.set("steps", history.steps as f64);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        let a = Matrix::filled(1, 1, 2.0);
        let b = Matrix::filled(1, 1, 4.0);
        assert_eq!(layer_distance(&[&a, &b]).unwrap(), 2.0);
        assert_eq!(layer_distance(&[&a, &a, &a]).unwrap(), 0.0);
        assert!(layer_distance(&[&a]).is_err());
        assert!(layer_distance(&[&a, &Matrix::zeros(2, 1)]).is_err());
    }

    #[test]
    fn short_run_is_deterministic() {
        let cfg = SymmetryConfig {
            epochs: 2,
            n_train: 40,
            n_test: 40,
            ..Default::default()
        };
        let a = symmetry_experiment(&cfg).unwrap();
        let b = symmetry_experiment(&cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.get("steps"), 20.0);
    }
}
