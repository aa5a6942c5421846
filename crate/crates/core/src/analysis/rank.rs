use serde::{Deserialize, Serialize};

use crate::data::independent_batch;
use crate::error::{Error, Result};
use crate::init::{baseline, idi, Method};
use crate::net::{gradients, sgd_step, Activation, LayerParams, Loss, NetworkSpec, ParamSet};
use crate::report::ExperimentReport;
use crate::tensor::{gaussian_matrix, hadamard, numerical_rank, Matrix, Rng, DEFAULT_RANK_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankInit {
    /// IDI on all three weights.
    Idinit,
    /// Identity block padded with zeros on the two rectangular weights.
    PartialIdentityZeroPad,
    /// First `D0` columns of `H/√Dh` on the expanding weight, partial identity
    /// on the reducing one. `Dh` must be a power of two.
    Hadamard,
}

impl RankInit {
    pub fn name(self) -> &'static str {
        match self {
            RankInit::Idinit => "idinit",
            RankInit::PartialIdentityZeroPad => "zero-pad",
            RankInit::Hadamard => "hadamard",
        }
    }
}

impl std::str::FromStr for RankInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "idinit" | "idi" => Ok(RankInit::Idinit),
            "zero-pad" | "zeropad" | "pz" | "partial-identity" | "partial-identity-zero-pad" => {
                Ok(RankInit::PartialIdentityZeroPad)
            }
            "hadamard" => Ok(RankInit::Hadamard),
            other => Err(Error::InvalidArgument(format!("unknown rank init '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankConfig {
    pub init: RankInit,
    pub d0: usize,
    pub dh: usize,
    pub dl: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            init: RankInit::Idinit,
            d0: 8,
            dh: 32,
            dl: 8,
            steps: 50,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

fn records(step: usize) -> bool {
    step <= 10 || step.is_multiple_of(10)
}

/// Trains the linear net `D0 → Dh → Dh → DL` with plain SGD, one fresh batch
/// of `D0` linearly independent inputs (and Gaussian targets) per step, and
/// traces `rank(θ⁽¹⁾ − I)` for the middle weight.
pub fn rank_experiment(cfg: &RankConfig) -> Result<ExperimentReport> {
    let RankConfig { d0, dh, dl, .. } = *cfg;
    if d0 == 0 || dl == 0 || dh <= d0.max(dl) {
        return Err(Error::InvalidArgument(format!(
            "rank experiment needs Dh > D0, DL >= 1 (got D0={d0}, Dh={dh}, DL={dl})"
        )));
    }
    let mut rng = Rng::new(cfg.seed);
    let (first, last) = match cfg.init {
        RankInit::Idinit => (idi(dh, d0, 1.0, 0.0, &mut rng), idi(dl, dh, 1.0, 0.0, &mut rng)),
        RankInit::PartialIdentityZeroPad => (
            baseline(Method::PartialIdentityZeroPad, dh, d0, &mut rng)?,
            baseline(Method::PartialIdentityZeroPad, dl, dh, &mut rng)?,
        ),
        RankInit::Hadamard => {
            let h = hadamard(dh)?.scale(1.0 / (dh as f64).sqrt());
            let first = Matrix::from_fn(dh, d0, |r, c| h[(r, c)]);
            (first, baseline(Method::PartialIdentityZeroPad, dl, dh, &mut rng)?)
        }
    };
    let net = NetworkSpec::mlp(&[d0, dh, dh, dl], Activation::Identity, Activation::Identity)?;
    let mut params = ParamSet::new(
        &net,
        vec![
            LayerParams::Dense { weight: first },
            LayerParams::Dense {
                weight: Matrix::identity(dh),
            },
            LayerParams::Dense { weight: last },
        ],
    )?;

    let mut report = ExperimentReport::new("rank", cfg.init.name(), cfg.seed, cfg);
    let delta_rank = |p: &ParamSet| {
        let delta = p.tensors()[1].sub(&Matrix::identity(dh)).expect("square");
        numerical_rank(&delta, DEFAULT_RANK_TOL)
    };
    report.push("rank", 0, delta_rank(&params) as f64);
    let mut max_rank = 0usize;
    for step in 1..=cfg.steps {
        let x = independent_batch(d0, d0, &mut rng)?;
        let y = gaussian_matrix(&mut rng, d0, dl, 0.0, 1.0);
        let (loss, grads) = gradients(&net, &params, &x, &y, Loss::Mse)?;
        if !loss.is_finite() {
            report.diverged = true;
            break;
        }
        sgd_step(&mut params, &grads, cfg.learning_rate, 0.0, 0.0)?;
        let r = delta_rank(&params);
        max_rank = max_rank.max(r);
        if records(step) {
            report.push("rank", step, r as f64);
            report.push("loss", step, loss);
        }
    }
    let trace = report.trace("rank").expect("rank trace").clone();
    let after_two = trace
        .steps
        .iter()
        .zip(&trace.values)
        .filter(|(s, _)| **s >= 2)
        .map(|(_, v)| *v)
        .reduce(f64::min);
    report.set("final_rank", trace.last().unwrap_or(0.0));
    report.set("min_rank_after_step2", after_two.unwrap_or(f64::NAN));
    report.set("max_rank", max_rank as f64);
    report.set("d0", d0 as f64);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_zero_has_rank_zero() {
        let cfg = RankConfig {
            steps: 0,
            ..Default::default()
        };
        let r = rank_experiment(&cfg).unwrap();
        assert_eq!(r.trace("rank").unwrap().values, vec![0.0]);
    }

    #[test]
    fn recording_schedule() {
        let cfg = RankConfig {
            steps: 25,
            init: RankInit::Hadamard,
            ..Default::default()
        };
        let r = rank_experiment(&cfg).unwrap();
        let steps = &r.trace("rank").unwrap().steps;
        assert_eq!(steps, &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20]);
    }

    #[test]
    fn rejects_bad_dims() {
        let cfg = RankConfig {
            dh: 8,
            ..Default::default()
        };
        assert!(rank_experiment(&cfg).is_err());
    }
}
