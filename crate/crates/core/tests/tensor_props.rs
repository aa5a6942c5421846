use idinit::tensor::{
    gaussian_matrix, matmul, matmul_tn, numerical_rank, singular_values, ConvKernel, Matrix, Rng,
    DEFAULT_RANK_TOL,
};
use proptest::prelude::*;

/// Characteristic polynomial of a square matrix by Faddeev–LeVerrier.
/// Returns coefficients c[0..=n] with p(x) = sum c[i] x^i and c[n] = 1.
fn char_poly(b: &Matrix) -> Vec<f64> {
    let n = b.rows();
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut m = Matrix::zeros(n, n);
    for k in 1..=n {
        let mut next = matmul(b, &m).unwrap();
        for i in 0..n {
            next[(i, i)] += c[n - k + 1];
        }
        let bm = matmul(b, &next).unwrap();
        let tr: f64 = (0..n).map(|i| bm[(i, i)]).sum();
        c[n - k] = -tr / k as f64;
        m = next;
    }
    c
}

fn eval_poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Real roots in [0, hi] by sign-change scan plus bisection.
fn poly_roots(c: &[f64], hi: f64) -> Vec<f64> {
    let steps = 200_000;
    let mut roots = Vec::new();
    let mut x0 = 0.0;
    let mut f0 = eval_poly(c, x0);
    for s in 1..=steps {
        let x1 = hi * s as f64 / steps as f64;
        let f1 = eval_poly(c, x1);
        if f0 == 0.0 {
            roots.push(x0);
        } else if f0.signum() != f1.signum() && f1 != 0.0 {
            let (mut a, mut b, mut fa) = (x0, x1, f0);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                let fm = eval_poly(c, mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        x0 = x1;
        f0 = f1;
    }
    roots.sort_by(|a, b| b.total_cmp(a));
    roots
}

#[test]
fn singular_values_match_eigen_oracle_on_gram_matrix() {
    for seed in 0..5 {
        let a = gaussian_matrix(&mut Rng::new(seed), 6, 4, 0.0, 1.0);
        let gram = matmul_tn(&a, &a).unwrap();
        let trace: f64 = (0..4).map(|i| gram[(i, i)]).sum();
        let eig = poly_roots(&char_poly(&gram), trace * 1.01);
        assert_eq!(eig.len(), 4, "seed {seed}: found roots {eig:?}");
        let sv = singular_values(&a);
        for (s, l) in sv.iter().zip(&eig) {
            assert!(
                (s - l.sqrt()).abs() <= 1e-8 * s.max(1.0),
                "seed {seed}: sigma {s} vs sqrt(lambda) {}",
                l.sqrt()
            );
        }
    }
}

#[test]
fn wide_and_tall_orientations_agree() {
    let a = gaussian_matrix(&mut Rng::new(77), 5, 9, 0.0, 1.0);
    let s1 = singular_values(&a);
    let s2 = singular_values(&a.transpose());
    assert_eq!(s1.len(), 5);
    for (x, y) in s1.iter().zip(&s2) {
        assert!((x - y).abs() < 1e-12 * x.max(1.0));
    }
}

fn rel_fro(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn matmul_is_associative(seed in any::<u64>(), m in 1usize..9, k in 1usize..9, l in 1usize..9, n in 1usize..9) {
        let mut rng = Rng::new(seed);
        let a = gaussian_matrix(&mut rng, m, k, 0.0, 1.0);
        let b = gaussian_matrix(&mut rng, k, l, 0.0, 1.0);
        let c = gaussian_matrix(&mut rng, l, n, 0.0, 1.0);
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        prop_assert!(rel_fro(&left, &right) < 1e-9);
    }

    #[test]
    fn squared_singular_values_sum_to_frobenius(seed in any::<u64>(), m in 1usize..65, n in 1usize..65) {
        let a = gaussian_matrix(&mut Rng::new(seed), m, n, 0.0, 1.0);
        let sv = singular_values(&a);
        prop_assert_eq!(sv.len(), m.min(n));
        prop_assert!(sv.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(sv.iter().all(|&s| s >= 0.0));
        let total: f64 = sv.iter().map(|s| s * s).sum();
        let fro = a.frobenius_norm_sq();
        prop_assert!((total - fro).abs() <= 1e-9 * fro);
    }

    #[test]
    fn rank_of_product_is_bounded(seed in any::<u64>(), ra in 1usize..6, rb in 1usize..6) {
        let mut rng = Rng::new(seed);
        let d = 8;
        let a = matmul(&gaussian_matrix(&mut rng, d, ra, 0.0, 1.0), &gaussian_matrix(&mut rng, ra, d, 0.0, 1.0)).unwrap();
        let b = matmul(&gaussian_matrix(&mut rng, d, rb, 0.0, 1.0), &gaussian_matrix(&mut rng, rb, d, 0.0, 1.0)).unwrap();
        let rank_a = numerical_rank(&a, DEFAULT_RANK_TOL);
        let rank_b = numerical_rank(&b, DEFAULT_RANK_TOL);
        prop_assert_eq!(rank_a, ra);
        prop_assert_eq!(rank_b, rb);
        let ab = matmul(&a, &b).unwrap();
        prop_assert!(numerical_rank(&ab, DEFAULT_RANK_TOL) <= rank_a.min(rank_b));
    }

    #[test]
    fn kernel_reshape_roundtrip_is_bitwise(seed in any::<u64>(), kh in 1usize..4, kw in 1usize..4, cin in 1usize..5, cout in 1usize..5) {
        let m = gaussian_matrix(&mut Rng::new(seed), cout, kh * kw * cin, 0.0, 1.0);
        let k = ConvKernel::from_matrix(m.clone(), kh, kw, cin).unwrap();
        let back = k.to_matrix();
        prop_assert!(back.data().iter().zip(m.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let again = ConvKernel::from_matrix(back, kh, kw, cin).unwrap();
        prop_assert_eq!(again, k);
    }

    #[test]
    fn same_seed_same_stream(seed in any::<u64>()) {
        let mut a = Rng::new(seed);
        let mut b = Rng::new(seed);
        for _ in 0..64 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
        prop_assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
    }
}
