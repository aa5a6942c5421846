use serde::{Deserialize, Serialize};

use crate::data::synth_linear_map;
use crate::error::Result;
use crate::init::init_network;
use crate::net::{predict, train, Activation, BatchMode, Loss, LrSchedule, NetworkSpec, TrainConfig};
use crate::report::ExperimentReport;
use crate::tensor::{gaussian_matrix, Rng};

use super::{derive_seed, InitChoice};

/// Output std above this multiple of the input std counts as an explosion.
pub const EXPLOSION_RATIO: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LongStemConfig {
    pub init: InitChoice,
    pub stem_depth: usize,
    pub width: usize,
    pub epochs: usize,
    pub n_train: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for LongStemConfig {
    fn default() -> Self {
        Self {
            init: InitChoice::Idinit,
            stem_depth: 32,
            width: 16,
            epochs: 35,
            n_train: 256,
            batch_size: 32,
            learning_rate: 1e-3,
            momentum: 0.9,
            seed: 0,
        }
    }
}

/// One residual block whose stem is `stem_depth` linear weights, trained on a
/// random linear map. Records the output std on a fixed probe batch before
/// training and after every epoch, and flags an explosion when it exceeds
/// [`EXPLOSION_RATIO`] times the probe's input std or stops being finite.
///
/// Every stem weight of the baselines is scaled for ReLU (`2/fan_in`) while
/// nothing in the stem restores the variance, so a deep stem amplifies its
/// input geometrically.
pub fn long_stem_probe(cfg: &LongStemConfig) -> Result<ExperimentReport> {
    let net = NetworkSpec::residual_mlp(cfg.width, 1, cfg.stem_depth, Activation::Identity, None)?;
    let mut rng = Rng::new(cfg.seed);
    let mut params = init_network(&net, cfg.init.policy(), &mut rng)?;
    let map = gaussian_matrix(&mut rng, cfg.width, cfg.width, 0.0, 1.0 / (cfg.width as f64).sqrt());
    let data = synth_linear_map(cfg.n_train, &map, 0.01, derive_seed(cfg.seed, 0));
    let probe = gaussian_matrix(&mut Rng::new(derive_seed(cfg.seed, 1)), 64, cfg.width, 0.0, 1.0);
    let input_std = probe.std();
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate,
        momentum: cfg.momentum,
        weight_decay: 0.0,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        loss: Loss::Mse,
        mode: BatchMode::MiniBatch,
        lr_schedule: LrSchedule::Cosine,
        seed: derive_seed(cfg.seed, 2),
        snapshot_every: 0,
    };

    let mode = format!("{}-depth{}", cfg.init.name(), cfg.stem_depth);
    let mut report = ExperimentReport::new("longstem", &mode, cfg.seed, cfg);
    let mut exploded = false;
    let mut max_ratio: f64 = 0.0;
    let mut record = |report: &mut ExperimentReport, epoch: usize, std: f64| {
        let ratio = std / input_std;
        if !ratio.is_finite() || ratio > EXPLOSION_RATIO {
            exploded = true;
        }
        max_ratio = if ratio.is_finite() { max_ratio.max(ratio) } else { f64::INFINITY };
        report.push("output_std", epoch, if std.is_finite() { std } else { f64::MAX });
    };
    let std0 = predict(&net, &params, &probe)?.std();
    record(&mut report, 0, std0);
    let mut eval_err = None;
    let history = train(&net, &mut params, &data, None, &tc, &mut |ev| {
        if ev.epoch_end {
            match predict(&net, ev.params, &probe) {
                Ok(out) => record(&mut report, ev.epoch, out.std()),
                Err(e) => eval_err = Some(e),
            }
        }
    })?;
    if let Some(e) = eval_err {
        return Err(e);
    }
    // A run stopped by divergence blew up as far as this probe is concerned.
    let exploded = exploded || history.diverged;
    report.diverged = history.diverged;
    report.set("input_std", input_std);
    report.set("max_std_ratio", if max_ratio.is_finite() { max_ratio } else { f64::MAX });
    report.set("exploded", if exploded { 1.0 } else { 0.0 });
    report.set("epochs_completed", (history.epochs.len() - 1) as f64);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shallow_short_run() {
        let cfg = LongStemConfig {
            stem_depth: 1,
            epochs: 2,
            n_train: 64,
            ..Default::default()
        };
        let r = long_stem_probe(&cfg).unwrap();
        assert_eq!(r.get("exploded"), 0.0);
        assert_eq!(r.trace("output_std").unwrap().len(), 3);
    }
}
