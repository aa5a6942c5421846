use idinit::init::{idi, idiz, init_attention, init_network, InitPolicy, Method};
use idinit::net::{
    forward, io_jacobian, io_jacobian_chain, io_jacobian_fd, predict, Activation, LayerParams, NetworkSpec, ParamSet,
    FD_STEP,
};
use idinit::tensor::{gaussian_matrix, matmul, matmul_nt, Matrix, Rng};
use proptest::prelude::*;

#[test]
fn tanh_finite_differences_match_chain_rule() {
    let mut rng = Rng::new(21);
    let net = NetworkSpec::mlp(&[5, 7, 6, 4], Activation::Tanh, Activation::Tanh).unwrap();
    let params = init_network(&net, InitPolicy::baseline(Method::Xavier), &mut rng).unwrap();
    let x: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
    let fd = io_jacobian_fd(&net, &params, &x, FD_STEP).unwrap();
    let exact = io_jacobian_chain(&net, &params, &x).unwrap();
    assert!(fd.max_abs_diff(&exact).unwrap() < 1e-5);
    // io_jacobian picks finite differences for non-linear nets.
    assert_eq!(io_jacobian(&net, &params, &x).unwrap(), fd);
}

#[test]
fn linear_net_jacobian_is_weight_product() {
    let mut rng = Rng::new(22);
    let net = NetworkSpec::mlp(&[3, 5, 2], Activation::Identity, Activation::Identity).unwrap();
    let params = init_network(&net, InitPolicy::baseline(Method::Kaiming), &mut rng).unwrap();
    let w = params.tensors();
    let want = matmul(w[1], w[0]).unwrap();
    let j = io_jacobian(&net, &params, &[0.3, -1.0, 2.0]).unwrap();
    assert!(j.max_abs_diff(&want).unwrap() < 1e-14);
}

#[test]
fn idinit_residual_forward_is_near_identity() {
    let (width, blocks, eps) = (12, 6, 1e-6);
    let net = NetworkSpec::residual_mlp(width, blocks, 3, Activation::Relu, None).unwrap();
    let policy = InitPolicy::IdInit {
        epsilon: eps,
        loose_eps: 0.0,
    };
    let params = init_network(&net, policy, &mut Rng::new(1)).unwrap();
    let x = gaussian_matrix(&mut Rng::new(2), 8, width, 0.0, 1.0);
    let trace = forward(&net, &params, &x).unwrap();
    let dev = trace.output().max_abs_diff(&x).unwrap();
    // Largest signal entering any stem's last weight.
    let stem_signal = trace.activations.iter().map(|a| a.max_abs()).fold(0.0, f64::max) * 2.0;
    let bound = blocks as f64 * width as f64 * eps * stem_signal;
    assert!(dev > 0.0 && dev <= bound, "{dev:e} vs {bound:e}");
}

#[test]
fn attention_output_bound() {
    for seed in 0..5 {
        let mut rng = Rng::new(seed);
        let d = 4 + seed as usize;
        let eps = 1e-6;
        let w = init_attention(d, 1.0, eps, 1e-6, &mut rng);
        let x = gaussian_matrix(&mut rng, 5, d, 0.0, 1.0);
        let q = matmul_nt(&x, &w.query).unwrap();
        let k = matmul_nt(&x, &w.key).unwrap();
        let v = matmul_nt(&x, &w.value).unwrap();
        let mut a = matmul_nt(&q, &k).unwrap().scale(1.0 / (d as f64).sqrt());
        for r in 0..5 {
            let row = a.row_mut(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|s| (s - m).exp()).sum();
            row.iter_mut().for_each(|s| *s = (*s - m).exp() / z);
        }
        let out = x.add(&matmul_nt(&matmul(&a, &v).unwrap(), &w.output).unwrap()).unwrap();
        let dev = out.max_abs_diff(&x).unwrap();
        assert!(dev <= d as f64 * eps * x.max_abs(), "seed {seed}");
    }
}

#[test]
fn idiz_output_variance_monte_carlo() {
    let (d, eps) = (10, 1e-3);
    let w = idiz(d, d, eps);
    let mut rng = Rng::new(9);
    for phi in [0.5, 2.0] {
        let x = gaussian_matrix(&mut rng, 100_000 / d, d, 0.0, f64::sqrt(phi));
        let y = matmul_nt(&x, &w).unwrap();
        let var = y.data().iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        let want = 2.0 * phi * eps * eps;
        assert!((var / want - 1.0).abs() < 0.05, "phi {phi}: {var:e} vs {want:e}");
    }
}

#[test]
fn snapshot_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let net = NetworkSpec::new(vec![
        idinit::net::LayerSpec::Dense {
            d_in: 3,
            d_out: 4,
            activation: Activation::Relu,
        },
        idinit::net::LayerSpec::Residual {
            width: 4,
            stem_depth: 2,
            activation: Activation::Tanh,
            gate: Some(0.25),
        },
    ])
    .unwrap();
    let params = init_network(&net, InitPolicy::baseline(Method::Orthogonal), &mut Rng::new(4)).unwrap();
    let manifest = params.write_snapshot(&net, dir.path()).unwrap();
    assert_eq!(manifest.params.len(), 4);
    let roles: Vec<&str> = manifest.params.iter().map(|p| p.role.as_str()).collect();
    assert_eq!(roles, ["dense", "stem0", "stem1", "gate"]);
    let (net2, params2) = ParamSet::read_snapshot(dir.path()).unwrap();
    assert_eq!(net2, net);
    for (a, b) in params.tensors().iter().zip(params2.tensors()) {
        assert_eq!(*a, b);
    }
    let x = gaussian_matrix(&mut Rng::new(5), 2, 3, 0.0, 1.0);
    assert_eq!(predict(&net, &params, &x).unwrap(), predict(&net2, &params2, &x).unwrap());
}

#[test]
fn gate_scales_the_stem() {
    let net = NetworkSpec::residual_mlp(2, 1, 1, Activation::Identity, Some(0.5)).unwrap();
    let params = ParamSet::new(
        &net,
        vec![LayerParams::Residual {
            stem: vec![Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap()],
            gate: Some(Matrix::filled(1, 1, 0.5)),
        }],
    )
    .unwrap();
    let y = predict(&net, &params, &Matrix::from_rows(&[[1.0, 1.0]]).unwrap()).unwrap();
    assert_eq!(y.row(0), &[1.0 + 1.5, 1.0 + 3.5]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn idi_stacks_copies(d_in in 1usize..20, q in 1usize..5, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let d_out = q * d_in;
        let x = gaussian_matrix(&mut rng, 3, d_in, 0.0, 1.0);
        let y = matmul_nt(&x, &idi(d_out, d_in, 1.0, 0.0, &mut rng)).unwrap();
        for r in 0..3 {
            for c in 0..d_out {
                prop_assert_eq!(y[(r, c)], x[(r, c % d_in)]);
            }
        }
    }

    #[test]
    fn idiz_rows_sum_to_zero(d_out in 1usize..24, d_in in 2usize..24) {
        let m = idiz(d_out, d_in, 1e-6);
        for s in m.row_sums() {
            prop_assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn loose_noise_keeps_the_zero_pattern(d_out in 1usize..30, d_in in 1usize..30, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let exact = idi(d_out, d_in, 1.0, 0.0, &mut rng);
        let loose = idi(d_out, d_in, 1.0, 1e-6, &mut rng);
        for (a, b) in exact.data().iter().zip(loose.data()) {
            prop_assert_eq!(*a == 0.0, *b == 0.0);
            prop_assert!((a - b).abs() < 1e-5);
        }
    }
}
