use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{load_mnist, Dataset};
use crate::error::{Error, Result};
use crate::init::init_network;
use crate::net::{train, Activation, BatchMode, Loss, LrSchedule, NetworkSpec, TrainConfig};
use crate::report::ExperimentReport;
use crate::tensor::Rng;

use super::{derive_seed, InitChoice};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MnistNet {
    Linear5Relu,
    Linear5Tanh,
}

impl MnistNet {
    pub fn name(self) -> &'static str {
        match self {
            MnistNet::Linear5Relu => "linear5relu",
            MnistNet::Linear5Tanh => "linear5tanh",
        }
    }

    /// `784 → hidden ×4 → 10`, five weights, no activation on the logits.
    pub fn spec(self, hidden: usize) -> Result<NetworkSpec> {
        let act = match self {
            MnistNet::Linear5Relu => Activation::Relu,
            MnistNet::Linear5Tanh => Activation::Tanh,
        };
        NetworkSpec::mlp(&[784, hidden, hidden, hidden, hidden, 10], act, Activation::Identity)
    }
}

impl std::str::FromStr for MnistNet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "linear5relu" => Ok(MnistNet::Linear5Relu),
            "linear5tanh" => Ok(MnistNet::Linear5Tanh),
            other => Err(Error::InvalidArgument(format!("unknown MNIST net '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MnistConfig {
    pub net: MnistNet,
    pub init: InitChoice,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Use only the first this many training images (`None` = all 60000).
    pub train_limit: Option<usize>,
    pub seed: u64,
}

impl Default for MnistConfig {
    fn default() -> Self {
        Self {
            net: MnistNet::Linear5Relu,
            init: InitChoice::Idinit,
            hidden: 512,
            epochs: 30,
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            train_limit: Some(10_000),
            seed: 0,
        }
    }
}

/// Trains on already loaded data.
pub fn mnist_on(cfg: &MnistConfig, train_set: &Dataset, test_set: &Dataset) -> Result<ExperimentReport> {
    let net = cfg.net.spec(cfg.hidden)?;
    let mut rng = Rng::new(cfg.seed);
    let mut params = init_network(&net, cfg.init.policy(), &mut rng)?;
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate,
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        loss: Loss::SoftmaxCrossEntropy,
        mode: BatchMode::MiniBatch,
        lr_schedule: LrSchedule::Cosine,
        seed: derive_seed(cfg.seed, 0),
        snapshot_every: 0,
    };
    let history = train(&net, &mut params, train_set, Some(test_set), &tc, &mut |_| {})?;
    let mode = format!("{}-{}", cfg.net.name(), cfg.init.name());
    let mut report = ExperimentReport::new("mnist", &mode, cfg.seed, cfg);
    for e in &history.epochs {
        report.push("train_loss", e.epoch, e.train_loss);
        if let Some(l) = e.test_loss {
            report.push("test_loss", e.epoch, l);
        }
        if let Some(a) = e.test_accuracy {
            report.push("test_accuracy", e.epoch, a);
        }
    }
    let acc = report.trace("test_accuracy").expect("labelled test set").clone();
    report.set("final_test_accuracy", acc.last().unwrap_or(f64::NAN));
    report.set("best_test_accuracy", acc.max().unwrap_or(f64::NAN));
    report.set("train_samples", train_set.len() as f64);
    report.set("epochs_completed", (history.epochs.len() - 1) as f64);
    report.diverged = history.diverged;
    Ok(report)
}

/// Loads MNIST from `data_dir` and trains Linear-5.
pub fn mnist_experiment(cfg: &MnistConfig, data_dir: &Path) -> Result<ExperimentReport> {
    let (train_set, test_set) = load_mnist(data_dir, cfg.train_limit)?;
    mnist_on(cfg, &train_set, &test_set)
}
