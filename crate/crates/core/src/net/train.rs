use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{shape_err, Error, Result};
use crate::tensor::{Matrix, Rng};

use super::{backward, forward, predict, Loss, NetworkSpec, ParamSet};

/// Loss values above this (or non-finite) stop training with `diverged`.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchMode {
    /// One step per epoch on the whole training set.
    FullBatch,
    MiniBatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// `lr·(1 + cos(π·epoch/epochs))/2`, updated once per epoch.
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: Loss,
    pub mode: BatchMode,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    /// Keep a copy of the weights every this many epochs (0 = never).
    #[serde(default)]
    pub snapshot_every: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.batch_size == 0 && self.mode == BatchMode::MiniBatch {
            return bad("batch_size must be >= 1".into());
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => cosine_lr(self.learning_rate, epoch, self.epochs),
        }
    }
}

pub fn cosine_lr(lr: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs == 0 {
        return lr;
    }
    lr * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs as f64).cos())
}

/// One SGD-with-momentum update:
/// `m ← γm + η(g + wd·θ)`, `θ ← θ − m`.
pub fn sgd_step(params: &mut ParamSet, grads: &[Matrix], lr: f64, momentum: f64, weight_decay: f64) -> Result<()> {
    let (tensors, velocity) = params.tensors_and_velocity_mut();
    if grads.len() != tensors.len() {
        return Err(shape_err(
            "sgd_step",
            format!("{} gradients for {} tensors", grads.len(), tensors.len()),
        ));
    }
    for ((theta, v), g) in tensors.into_iter().zip(velocity.iter_mut()).zip(grads) {
        if g.shape() != theta.shape() {
            return Err(shape_err("sgd_step", format!("gradient {:?} vs weight {:?}", g.shape(), theta.shape())));
        }
        let th = theta.data_mut();
        for ((t, m), gi) in th.iter_mut().zip(v.data_mut()).zip(g.data()) {
            *m = momentum * *m + lr * (gi + weight_decay * *t);
            *t -= *m;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the evaluation before any update.
    pub epoch: usize,
    pub lr: f64,
    /// Mean batch loss over the epoch (the full training loss at epoch 0).
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub steps: usize,
    pub diverged: bool,
    pub snapshots: Vec<(usize, ParamSet)>,
}

/// Passed to the observer after every update.
pub struct StepEvent<'a> {
    /// 1-based count of updates so far.
    pub step: usize,
    /// 1-based epoch the step belongs to.
    pub epoch: usize,
    pub epoch_end: bool,
    pub loss: f64,
    pub lr: f64,
    pub params: &'a ParamSet,
    pub grads: &'a [Matrix],
}

fn is_divergent(loss: f64) -> bool {
    !loss.is_finite() || loss > DIVERGENCE_LOSS
}

fn evaluate(net: &NetworkSpec, params: &ParamSet, data: &Dataset, loss: Loss) -> Result<(f64, Option<f64>)> {
    let out = predict(net, params, &data.inputs)?;
    let value = loss.value(&out, &data.targets)?;
    let acc = data.labels.as_ref().map(|labels| accuracy(&out, labels));
    Ok((value, acc))
}

/// Fraction of rows whose arg-max equals the label.
pub fn accuracy(output: &Matrix, labels: &[usize]) -> f64 {
    let hits = (0..output.rows())
        .filter(|&r| {
            let row = output.row(r);
            let best = (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
            best == labels[r]
        })
        .count();
    hits as f64 / output.rows().max(1) as f64
}

/// Trains in place. The mini-batch order comes from `Rng::new(cfg.seed)`, so
/// runs with equal inputs are bitwise identical. Divergence stops training
/// and is reported through `TrainHistory::diverged`, not as an error.
pub fn train(
    net: &NetworkSpec,
    params: &mut ParamSet,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&StepEvent<'_>),
) -> Result<TrainHistory> {
    cfg.validate()?;
    let n = train_set.len();
    if n == 0 {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let batch = match cfg.mode {
        BatchMode::FullBatch => n,
        BatchMode::MiniBatch => cfg.batch_size.min(n),
    };
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(cfg.epochs + 1),
        steps: 0,
        diverged: false,
        snapshots: Vec::new(),
    };

    let (train0, _) = evaluate(net, params, train_set, cfg.loss)?;
    let (test_loss, test_accuracy) = match test_set {
        Some(t) => {
            let (l, a) = evaluate(net, params, t, cfg.loss)?;
            (Some(l), a)
        }
        None => (None, None),
    };
    history.epochs.push(EpochRecord {
        epoch: 0,
        lr: cfg.lr_at(0),
        train_loss: train0,
        test_loss,
        test_accuracy,
    });
    if is_divergent(train0) {
        history.diverged = true;
        return Ok(history);
    }

    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_at(epoch - 1);
        if cfg.mode == BatchMode::MiniBatch {
            rng.shuffle(&mut order);
        }
        let batches = n.div_ceil(batch);
        let mut total = 0.0;
        for b in 0..batches {
            let idx = &order[b * batch..((b + 1) * batch).min(n)];
            let (x, y) = if batches == 1 && cfg.mode == BatchMode::FullBatch {
                (train_set.inputs.clone(), train_set.targets.clone())
            } else {
                (train_set.inputs.select_rows(idx), train_set.targets.select_rows(idx))
            };
            let trace = forward(net, params, &x)?;
            let (loss, d_out) = cfg.loss.value_and_grad(trace.output(), &y)?;
            if is_divergent(loss) {
                history.diverged = true;
                return Ok(history);
            }
            let grads = backward(net, params, &trace, &d_out)?;
            sgd_step(params, &grads, lr, cfg.momentum, cfg.weight_decay)?;
            history.steps += 1;
            total += loss;
            observer(&StepEvent {
                step: history.steps,
                epoch,
                epoch_end: b + 1 == batches,
                loss,
                lr,
                params,
                grads: &grads,
            });
        }
        let (test_loss, test_accuracy) = match test_set {
            Some(t) => {
                let (l, a) = evaluate(net, params, t, cfg.loss)?;
                (Some(l), a)
            }
            None => (None, None),
        };
        let train_loss = total / batches as f64;
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            test_loss,
            test_accuracy,
        });
        if cfg.snapshot_every > 0 && epoch % cfg.snapshot_every == 0 {
            history.snapshots.push((epoch, params.clone()));
        }
        if is_divergent(train_loss) || test_loss.is_some_and(is_divergent) {
            history.diverged = true;
            break;
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, LayerParams};

    fn scalar_net(w: f64) -> (NetworkSpec, ParamSet) {
        let net = NetworkSpec::mlp(&[1, 1], Activation::Identity, Activation::Identity).unwrap();
        let params = ParamSet::new(&net, vec![LayerParams::Dense { weight: Matrix::filled(1, 1, w) }]).unwrap();
        (net, params)
    }

    fn cfg(lr: f64, momentum: f64, epochs: usize, mode: BatchMode) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            momentum,
            weight_decay: 0.0,
            batch_size: 2,
            epochs,
            loss: Loss::Mse,
            mode,
            lr_schedule: LrSchedule::Constant,
            seed: 0,
            snapshot_every: 0,
        }
    }

    fn line_data() -> Dataset {
        let x = Matrix::from_rows(&[[1.0], [-0.5], [2.0], [0.3]]).unwrap();
        let y = x.scale(2.0);
        Dataset::regression(x, y)
    }

    #[test]
    fn plain_gd_step() {
        let (_, mut p) = scalar_net(1.0);
        sgd_step(&mut p, &[Matrix::filled(1, 1, 0.5)], 0.1, 0.0, 0.0).unwrap();
        assert!((p.tensors()[0][(0, 0)] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn momentum_second_step_displacement() {
        let (_, mut p) = scalar_net(0.0);
        let g = [Matrix::filled(1, 1, 1.0)];
        sgd_step(&mut p, &g, 0.1, 0.9, 0.0).unwrap();
        let after_one = p.tensors()[0][(0, 0)];
        sgd_step(&mut p, &g, 0.1, 0.9, 0.0).unwrap();
        let second = after_one - p.tensors()[0][(0, 0)];
        assert!((second - 0.1 * 1.9).abs() < 1e-15);
    }

    #[test]
    fn momentum_matches_scalar_recurrence() {
        let (_, mut p) = scalar_net(0.7);
        let (mut theta, mut m) = (0.7f64, 0.0f64);
        let (lr, gamma, wd) = (0.05, 0.9, 1e-3);
        for k in 0..10 {
            let g = (k as f64 * 0.37).sin();
            sgd_step(&mut p, &[Matrix::filled(1, 1, g)], lr, gamma, wd).unwrap();
            m = gamma * m + lr * (g + wd * theta);
            theta -= m;
            assert!((p.tensors()[0][(0, 0)] - theta).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_lr_keeps_weights() {
        let (net, mut p) = scalar_net(0.3);
        let before = p.clone();
        let h = train(&net, &mut p, &line_data(), None, &cfg(0.0, 0.9, 5, BatchMode::MiniBatch), &mut |_| {}).unwrap();
        assert_eq!(p.tensors(), before.tensors());
        let losses: Vec<f64> = h.epochs.iter().map(|e| e.train_loss).collect();
        assert!(losses.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-15));
    }

    #[test]
    fn scalar_regression_converges() {
        let (net, mut p) = scalar_net(0.0);
        let x = Matrix::filled(1, 1, 1.0);
        let data = Dataset::regression(x.clone(), x.scale(2.0));
        let mut steps = 0;
        let h = train(&net, &mut p, &data, None, &cfg(0.1, 0.0, 200, BatchMode::FullBatch), &mut |_| steps += 1).unwrap();
        assert_eq!(h.steps, 200);
        assert_eq!(steps, 200);
        assert!((p.tensors()[0][(0, 0)] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn full_batch_takes_one_step_per_epoch() {
        let (net, mut p) = scalar_net(0.0);
        let mut ends = 0;
        let h = train(&net, &mut p, &line_data(), None, &cfg(0.01, 0.0, 7, BatchMode::FullBatch), &mut |e| {
            assert!(e.epoch_end);
            ends += 1;
        })
        .unwrap();
        assert_eq!((h.steps, ends), (7, 7));
    }

    #[test]
    fn divergence_is_reported() {
        let (net, mut p) = scalar_net(1.0);
        let h = train(&net, &mut p, &line_data(), None, &cfg(50.0, 0.0, 100, BatchMode::FullBatch), &mut |_| {}).unwrap();
        assert!(h.diverged);
        assert!(h.steps < 100);
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0.1, 0, 10), 0.1);
        assert!((cosine_lr(0.1, 5, 10) - 0.05).abs() < 1e-15);
    }
}
