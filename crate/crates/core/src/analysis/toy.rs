use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::DIVERGENCE_LOSS;
use crate::report::ExperimentReport;

/// Scalar depth-`L` model `x_L = (r + w₂w₁)^L·x₀` fitted to `target_scale·x₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    /// 1 for the residual form, 0 for the plain product.
    pub r: u8,
    pub depth: u32,
    pub lr: f64,
    pub w1: f64,
    pub w2: f64,
    pub inputs: Vec<f64>,
    pub target_scale: f64,
    pub steps: usize,
    /// Trajectory points are kept every this many steps.
    pub record_every: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            r: 1,
            depth: 5,
            lr: 1e-5,
            w1: 1.0,
            w2: 0.0,
            inputs: (0..9).map(|i| 1.0 + 0.1 * i as f64).collect(),
            target_scale: 50.0,
            steps: 10_000,
            record_every: 10,
        }
    }
}

impl ToyConfig {
    /// Default starts: `(1, 0)` with `r = 1`, `(1, 1)` with `r = 0`.
    pub fn for_r(r: u8) -> Self {
        let (w1, w2) = if r == 1 { (1.0, 0.0) } else { (1.0, 1.0) };
        Self {
            r,
            w1,
            w2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r > 1 {
            return Err(Error::InvalidArgument(format!("r must be 0 or 1, got {}", self.r)));
        }
        if self.depth == 0 || self.inputs.is_empty() || self.record_every == 0 {
            return Err(Error::InvalidArgument("toy model needs depth >= 1, inputs and record_every >= 1".into()));
        }
        if self.lr.is_nan() || self.lr < 0.0 {
            return Err(Error::InvalidArgument(format!("lr must be >= 0, got {}", self.lr)));
        }
        Ok(())
    }

    /// Mean over inputs of `½(x_L − target_scale·x₀)²`, with its gradient.
    pub fn loss_and_grad(&self, w1: f64, w2: f64) -> (f64, f64, f64) {
        let l = self.depth as i32;
        let base = self.r as f64 + w1 * w2;
        let p = base.powi(l);
        let dp = l as f64 * base.powi(l - 1);
        let n = self.inputs.len() as f64;
        let (mut loss, mut g1, mut g2) = (0.0, 0.0, 0.0);
        for &x0 in &self.inputs {
            let resid = p * x0 - self.target_scale * x0;
            loss += 0.5 * resid * resid;
            let common = resid * dp * x0;
            g1 += common * w2;
            g2 += common * w1;
        }
        (loss / n, g1 / n, g2 / n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyResult {
    pub trajectory: Vec<(f64, f64)>,
    pub product: f64,
    /// Closest approach to `(−1, 1)` over every step.
    pub min_distance_to_bad_point: f64,
    pub diverged: bool,
}

/// Plain gradient descent on the toy model, recording `(w₁, w₂)`.
pub fn toy_dynamics(cfg: &ToyConfig) -> Result<(ToyResult, ExperimentReport)> {
    cfg.validate()?;
    let (mut w1, mut w2) = (cfg.w1, cfg.w2);
    let dist = |a: f64, b: f64| ((a + 1.0).powi(2) + (b - 1.0).powi(2)).sqrt();
    let mut min_dist = dist(w1, w2);
    let mut trajectory = vec![(w1, w2)];
    let mut report = ExperimentReport::new("toy", &format!("r{}", cfg.r), 0, cfg);
    report.push("w1", 0, w1);
    report.push("w2", 0, w2);
    report.push("loss", 0, cfg.loss_and_grad(w1, w2).0);
    let mut diverged = false;
    for step in 1..=cfg.steps {
        let (_, g1, g2) = cfg.loss_and_grad(w1, w2);
        w1 -= cfg.lr * g1;
        w2 -= cfg.lr * g2;
        let (loss, _, _) = cfg.loss_and_grad(w1, w2);
        if !loss.is_finite() || loss > DIVERGENCE_LOSS || !w1.is_finite() || !w2.is_finite() {
            diverged = true;
            break;
        }
        min_dist = min_dist.min(dist(w1, w2));
        if step % cfg.record_every == 0 || step == cfg.steps {
            trajectory.push((w1, w2));
            report.push("w1", step, w1);
            report.push("w2", step, w2);
            report.push("loss", step, loss);
        }
    }
    let product = w1 * w2;
    report.set("product", product);
    report.set("w1", w1);
    report.set("w2", w2);
    report.set("fixed_point", cfg.target_scale.powf(1.0 / cfg.depth as f64) - cfg.r as f64);
    report.set("min_distance_to_minus1_1", min_dist);
    report.diverged = diverged;
    Ok((
        ToyResult {
            trajectory,
            product,
            min_distance_to_bad_point: min_dist,
            diverged,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lr_is_constant() {
        let cfg = ToyConfig {
            lr: 0.0,
            steps: 30,
            ..ToyConfig::for_r(1)
        };
        let (res, _) = toy_dynamics(&cfg).unwrap();
        assert!(res.trajectory.iter().all(|&p| p == (1.0, 0.0)));
    }

    #[test]
    fn gradient_matches_differences() {
        let cfg = ToyConfig::for_r(0);
        let (w1, w2, h) = (0.9, 1.1, 1e-6);
        let (_, g1, g2) = cfg.loss_and_grad(w1, w2);
        let fd1 = (cfg.loss_and_grad(w1 + h, w2).0 - cfg.loss_and_grad(w1 - h, w2).0) / (2.0 * h);
        let fd2 = (cfg.loss_and_grad(w1, w2 + h).0 - cfg.loss_and_grad(w1, w2 - h).0) / (2.0 * h);
        assert!((g1 - fd1).abs() < 1e-5 * g1.abs().max(1.0));
        assert!((g2 - fd2).abs() < 1e-5 * g2.abs().max(1.0));
    }

    #[test]
    fn validation() {
        assert!(ToyConfig { r: 2, ..Default::default() }.validate().is_err());
        assert!(ToyConfig { depth: 0, ..Default::default() }.validate().is_err());
    }
}
