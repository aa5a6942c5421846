use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::report::ExperimentReport;
use crate::tensor::{dot, outer, Matrix, Rng};

/// Gradient of the second step when a single square layer starts at `I`,
/// takes one SGD step (rate `eta`) on `(x1, y1)` and is then evaluated on
/// `(x2, y2)`:
///
/// `x₂x₂ᵀ − ηx₁x₁ᵀx₂x₂ᵀ + ηy₁x₁ᵀx₂x₂ᵀ − y₂x₂ᵀ`.
pub fn two_step_gradient(x1: &[f64], y1: &[f64], x2: &[f64], y2: &[f64], eta: f64) -> Result<Matrix> {
    let d = x1.len();
    if [y1.len(), x2.len(), y2.len()].iter().any(|&n| n != d) {
        return Err(shape_err("two_step_gradient", "all vectors must have the same length"));
    }
    let s = dot(x1, x2);
    let u: Vec<f64> = (0..d)
        .map(|i| x2[i] - eta * s * x1[i] + eta * s * y1[i] - y2[i])
        .collect();
    Ok(outer(&u, x2))
}

/// `‖m − mᵀ‖²_F`.
pub fn asymmetry_magnitude(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(shape_err("asymmetry_magnitude", format!("{}x{} is not square", m.rows(), m.cols())));
    }
    let n = m.rows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = m[(i, j)] - m[(j, i)];
            total += d * d;
        }
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymmetryProbe {
    pub d: usize,
    pub sigma: f64,
    pub eta: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for AsymmetryProbe {
    fn default() -> Self {
        Self {
            d: 64,
            sigma: 1.0,
            eta: 0.1,
            n_samples: 20_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub n_samples: usize,
}

/// Closed-form bounds on `E‖Ω − Ωᵀ‖²_F`:
/// `4η²d³σ⁸ − 4η²d²σ⁸ + 2d²σ⁴` and `6η²d³σ⁸ + 3d²σ⁴`.
///
/// The lower bound leans on a large-`d` approximation. With σ = 1 and
/// η = 0.1 the true expectation sits below it for `d <= 16` (d = 16 gives
/// about 650 against 665.6); from `d = 32` up it holds.
pub fn asymmetry_bounds(d: usize, sigma: f64, eta: f64) -> (f64, f64) {
    let d = d as f64;
    let (s4, s8, e2) = (sigma.powi(4), sigma.powi(8), eta * eta);
    let lower = 4.0 * e2 * d.powi(3) * s8 - 4.0 * e2 * d * d * s8 + 2.0 * d * d * s4;
    let upper = 6.0 * e2 * d.powi(3) * s8 + 3.0 * d * d * s4;
    (lower, upper)
}

/// Monte-Carlo estimate of `E‖Ω − Ωᵀ‖²_F` for
/// `Ω = −ηx₁x₁ᵀx₂x₂ᵀ + ηy₁x₁ᵀx₂x₂ᵀ − y₂x₂ᵀ` with all four vectors drawn
/// i.i.d. from `N(0, σ²I_d)`, drawn in the order `x₁, y₁, x₂, y₂`.
pub fn monte_carlo_asymmetry(probe: &AsymmetryProbe) -> Result<AsymmetryEstimate> {
    if probe.n_samples == 0 || probe.d == 0 {
        return Err(Error::InvalidArgument("asymmetry probe needs d >= 1 and n_samples >= 1".into()));
    }
    if probe.sigma < 0.0 || probe.eta < 0.0 {
        return Err(Error::InvalidArgument("sigma and eta must be non-negative".into()));
    }
    let mut rng = Rng::new(probe.seed);
    let d = probe.d;
    let draw = |rng: &mut Rng| -> Vec<f64> { (0..d).map(|_| rng.normal(0.0, probe.sigma)).collect() };
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..probe.n_samples {
        let x1 = draw(&mut rng);
        let y1 = draw(&mut rng);
        let x2 = draw(&mut rng);
        let y2 = draw(&mut rng);
        let mut omega = two_step_gradient(&x1, &y1, &x2, &y2, probe.eta)?;
        // Drop the symmetric x₂x₂ᵀ term; it cancels in Ω − Ωᵀ anyway.
        omega.axpy(-1.0, &outer(&x2, &x2))?;
        let a = asymmetry_magnitude(&omega)?;
        sum += a;
        sum_sq += a * a;
    }
    let n = probe.n_samples as f64;
    let mean = sum / n;
    let var = if probe.n_samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let (lower_bound, upper_bound) = asymmetry_bounds(d, probe.sigma, probe.eta);
    Ok(AsymmetryEstimate {
        mean,
        std_error: (var / n).sqrt(),
        lower_bound,
        upper_bound,
        n_samples: probe.n_samples,
    })
}

/// Runs the probe and wraps it in a report.
pub fn asymmetry_report(probe: &AsymmetryProbe) -> Result<ExperimentReport> {
    let est = monte_carlo_asymmetry(probe)?;
    let mut r = ExperimentReport::new("asymmetry", &format!("d{}", probe.d), probe.seed, probe);
    r.set("mean", est.mean);
    r.set("std_error", est.std_error);
    r.set("lower_bound", est.lower_bound);
    r.set("upper_bound", est.upper_bound);
    r.set("eta_zero_expectation", 2.0 * (probe.d * (probe.d - 1)) as f64 * probe.sigma.powi(4));
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit_and_eta_zero() {
        let mut rng = Rng::new(1);
        let v: Vec<Vec<f64>> = (0..2).map(|_| (0..5).map(|_| rng.standard_normal()).collect()).collect();
        let g = two_step_gradient(&v[0], &v[0], &v[1], &v[1], 0.3).unwrap();
        assert_eq!(g.max_abs(), 0.0);

        let y2: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
        let g = two_step_gradient(&v[0], &y2, &v[1], &y2, 0.0).unwrap();
        let want = outer(&v[1], &v[1]).sub(&outer(&y2, &v[1])).unwrap();
        assert!(g.max_abs_diff(&want).unwrap() < 1e-15);
        assert!(two_step_gradient(&v[0], &v[0], &v[1], &[1.0], 0.1).is_err());
    }

    #[test]
    fn magnitude_examples() {
        let s = Matrix::from_rows(&[[1.0, 2.0], [2.0, 5.0]]).unwrap();
        assert_eq!(asymmetry_magnitude(&s).unwrap(), 0.0);
        let a = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        assert_eq!(asymmetry_magnitude(&a).unwrap(), 8.0);
        assert!(asymmetry_magnitude(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn printed_bounds_evaluate() {
        let (lo, hi) = asymmetry_bounds(64, 1.0, 0.1);
        assert!((lo - 18513.92).abs() < 1e-6);
        assert!((hi - 28016.64).abs() < 1e-6);
    }

    #[test]
    fn sigma_zero_gives_zero() {
        let est = monte_carlo_asymmetry(&AsymmetryProbe {
            d: 8,
            sigma: 0.0,
            eta: 0.1,
            n_samples: 50,
            seed: 0,
        })
        .unwrap();
        assert_eq!(est.mean, 0.0);
    }
}
