use crate::error::{shape_err, Error, Result};

use super::{Matrix, Rng};

/// Relative tolerance used by [`numerical_rank`] when callers have no better choice.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Jacobi sweeps stop once every pair satisfies |<p,q>| <= tol * |p| |q|.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 80;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Op {
    N,
    T,
}

// c = op(a) * op(b)
fn gemm(a: &Matrix, op_a: Op, b: &Matrix, op_b: Op, name: &'static str) -> Result<Matrix> {
    let (m, k) = match op_a {
        Op::N => (a.rows(), a.cols()),
        Op::T => (a.cols(), a.rows()),
    };
    let (k2, n) = match op_b {
        Op::N => (b.rows(), b.cols()),
        Op::T => (b.cols(), b.rows()),
    };
    if k != k2 {
        return Err(shape_err(
            name,
            format!(
                "inner dimensions differ: {}x{} and {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            ),
        ));
    }
    let mut c = Matrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return Ok(c);
    }
    let (rsa, csa) = match op_a {
        Op::N => (a.cols() as isize, 1),
        Op::T => (1, a.cols() as isize),
    };
    let (rsb, csb) = match op_b {
        Op::N => (b.cols() as isize, 1),
        Op::T => (1, b.cols() as isize),
    };
    // SAFETY: the strides describe exactly the row-major buffers of `a`, `b`
    // and `c`, whose lengths were validated against (m, k, n) above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data().as_ptr(),
            rsa,
            csa,
            b.data().as_ptr(),
            rsb,
            csb,
            0.0,
            c.data_mut().as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok(c)
}

/// Matrix product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    gemm(a, Op::N, b, Op::N, "matmul")
}

/// `aᵀ * b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    gemm(a, Op::T, b, Op::N, "matmul_tn")
}

/// `a * bᵀ` without materializing the transpose.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    gemm(a, Op::N, b, Op::T, "matmul_nt")
}

/// Outer product `u vᵀ`.
pub fn outer(u: &[f64], v: &[f64]) -> Matrix {
    Matrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Singular values in descending order, computed with cyclic one-sided
/// (Hestenes) Jacobi rotations on the columns of the taller orientation.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Vec::new();
    }
    // Work on the columns of whichever orientation is tall.
    let mut cols: Vec<Vec<f64>> = if m >= n {
        (0..n).map(|c| a.col_vec(c)).collect()
    } else {
        (0..m).map(|r| a.row(r).to_vec()).collect()
    };
    let k = cols.len();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k.saturating_sub(1) {
            for q in p + 1..k {
                let (lo, hi) = cols.split_at_mut(q);
                let cp = &mut lo[p];
                let cq = &mut hi[0];
                let alpha = dot(cp, cp);
                let beta = dot(cq, cq);
                let gamma = dot(cp, cq);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Number of singular values strictly greater than `rel_tol * sigma_max`.
pub fn numerical_rank(a: &Matrix, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    match sv.first() {
        Some(&smax) if smax > 0.0 => sv.iter().filter(|&&s| s > rel_tol * smax).count(),
        _ => 0,
    }
}

/// Sylvester Hadamard matrix of order `n` (entries ±1, `H Hᵀ = n I`).
pub fn hadamard(n: usize) -> Result<Matrix> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::UnsupportedSize(format!(
            "hadamard size must be a power of two, got {n}"
        )));
    }
    let mut h = Matrix::filled(1, 1, 1.0);
    while h.rows() < n {
        let s = h.rows();
        h = Matrix::from_fn(2 * s, 2 * s, |r, c| {
            let v = h[(r % s, c % s)];
            if r >= s && c >= s {
                -v
            } else {
                v
            }
        });
    }
    Ok(h)
}

/// I.i.d. `N(mean, std²)` entries drawn row-major from `rng`.
pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize, mean: f64, std: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal(mean, std))
}

/// Thin QR of a tall matrix (`rows >= cols`) with a non-negative diagonal in R.
///
/// Uses classical Gram-Schmidt with one re-orthogonalization pass, which
/// yields the unique positive-diagonal factorization for full-rank input.
pub fn qr_thin(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(shape_err("qr_thin", format!("needs rows >= cols, got {m}x{n}")));
    }
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut r = Matrix::zeros(n, n);
    for j in 0..n {
        let mut v = a.col_vec(j);
        for _pass in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let proj = dot(qi, &v);
                r[(i, j)] += proj;
                for (vk, qk) in v.iter_mut().zip(qi) {
                    *vk -= proj * qk;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        r[(j, j)] = norm;
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        q.push(v);
    }
    let qm = Matrix::from_fn(m, n, |row, col| q[col][row]);
    Ok((qm, r))
}
