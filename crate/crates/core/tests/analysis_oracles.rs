use idinit::analysis::{
    asymmetry_magnitude, dead_neuron_experiment, layer_distance, long_stem_probe, monte_carlo_asymmetry,
    rank_experiment, symmetry_experiment, two_step_gradient, AsymmetryProbe, DeadNeuronConfig, DeadVariant,
    InitChoice, LongStemConfig, RankConfig, RankInit, SymmetryConfig, SymmetryMode,
};
use idinit::net::{gradients, sgd_step, Activation, LayerParams, Loss, NetworkSpec, ParamSet};
use idinit::tensor::{gaussian_matrix, Matrix, Rng};

fn vector(rng: &mut Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.standard_normal()).collect()
}

#[test]
fn two_step_gradient_matches_engine_simulation() {
    for seed in 0..50 {
        let mut rng = Rng::new(seed);
        let d = 2 + rng.below(7) as usize;
        let eta = rng.uniform_range(0.01, 0.5);
        let (x1, y1, x2, y2) = (vector(&mut rng, d), vector(&mut rng, d), vector(&mut rng, d), vector(&mut rng, d));

        let net = NetworkSpec::mlp(&[d, d], Activation::Identity, Activation::Identity).unwrap();
        let mut params = ParamSet::new(
            &net,
            vec![LayerParams::Dense {
                weight: Matrix::identity(d),
            }],
        )
        .unwrap();
        let row = |v: &[f64]| Matrix::new(1, d, v.to_vec()).unwrap();
        let (_, g1) = gradients(&net, &params, &row(&x1), &row(&y1), Loss::Mse).unwrap();
        sgd_step(&mut params, &g1, eta, 0.0, 0.0).unwrap();
        let (_, g2) = gradients(&net, &params, &row(&x2), &row(&y2), Loss::Mse).unwrap();

        let formula = two_step_gradient(&x1, &y1, &x2, &y2, eta).unwrap();
        let diff = formula.max_abs_diff(&g2[0]).unwrap();
        assert!(diff < 1e-12 * formula.max_abs().max(1.0), "seed {seed}: {diff:e}");
    }
}

#[test]
fn asymmetry_magnitude_matches_pair_loop() {
    let mut rng = Rng::new(3);
    let m = gaussian_matrix(&mut rng, 6, 6, 0.0, 1.0);
    let mut want = 0.0;
    for i in 0..6 {
        for j in i + 1..6 {
            want += 2.0 * (m[(i, j)] - m[(j, i)]).powi(2);
        }
    }
    assert!((asymmetry_magnitude(&m).unwrap() - want).abs() < 1e-12 * want);
}

#[test]
fn asymmetry_grows_with_the_cube_of_d() {
    let est = |d| {
        monte_carlo_asymmetry(&AsymmetryProbe {
            d,
            eta: 1.0,
            n_samples: 4000,
            ..Default::default()
        })
        .unwrap()
        .mean
    };
    let ratio = est(32) / est(16);
    assert!((ratio / 8.0 - 1.0).abs() < 0.15, "ratio {ratio}");
}

#[test]
fn rank_constraint_across_sizes() {
    for (d0, dh) in [(4, 16), (8, 32), (16, 64)] {
        for seed in 0..3 {
            let run = |init| {
                rank_experiment(&RankConfig {
                    init,
                    d0,
                    dh,
                    dl: d0,
                    steps: 12,
                    seed,
                    ..Default::default()
                })
                .unwrap()
            };
            let idi = run(RankInit::Idinit);
            let trace = idi.trace("rank").unwrap();
            for (s, r) in trace.steps.iter().zip(&trace.values) {
                if *s >= 2 {
                    assert!(*r >= d0 as f64, "IDInit ({d0},{dh}) step {s}: rank {r}");
                }
            }
            let pad = run(RankInit::PartialIdentityZeroPad);
            assert!(pad.get("max_rank") <= d0 as f64, "zero-pad ({d0},{dh}): {}", pad.get("max_rank"));
        }
    }
}

#[test]
fn hadamard_rank_mode_runs_and_rejects_odd_width() {
    let r = rank_experiment(&RankConfig {
        init: RankInit::Hadamard,
        steps: 3,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(r.trace("rank").unwrap().len(), 4);
    assert!(rank_experiment(&RankConfig {
        init: RankInit::Hadamard,
        dh: 24,
        ..Default::default()
    })
    .is_err());
}

#[test]
fn layer_distance_matches_pair_loop() {
    let mut rng = Rng::new(8);
    let layers: Vec<Matrix> = (0..4).map(|_| gaussian_matrix(&mut rng, 3, 3, 0.0, 1.0)).collect();
    let refs: Vec<&Matrix> = layers.iter().collect();
    let mut total = 0.0;
    let mut pairs = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            let mut s = 0.0;
            for k in 0..9 {
                s += (layers[i].data()[k] - layers[j].data()[k]).abs();
            }
            total += s / 9.0;
            pairs += 1.0;
        }
    }
    assert!((layer_distance(&refs).unwrap() - total / pairs).abs() < 1e-14);
}

#[test]
fn noiseless_full_batch_gd_keeps_layers_equal() {
    let r = symmetry_experiment(&SymmetryConfig {
        mode: SymmetryMode::Gd,
        noise_std: 0.0,
        epochs: 50,
        ..Default::default()
    })
    .unwrap();
    assert!(r.get("final_layer_distance") < 1e-9, "{}", r.get("final_layer_distance"));
}

#[test]
fn dead_fraction_with_no_steps_is_one() {
    for variant in [DeadVariant::ZeroLast, DeadVariant::IdizLast] {
        let r = dead_neuron_experiment(&DeadNeuronConfig {
            variant,
            steps: 0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.get("dead_fraction"), 1.0);
    }
}

#[test]
fn long_stem_idinit_stays_bounded_and_kaiming_explodes() {
    let run = |init, stem_depth| {
        long_stem_probe(&LongStemConfig {
            init,
            stem_depth,
            ..Default::default()
        })
        .unwrap()
    };
    let idi = run(InitChoice::Idinit, 32);
    assert_eq!(idi.get("exploded"), 0.0, "max ratio {}", idi.get("max_std_ratio"));
    assert_eq!(idi.get("epochs_completed"), 35.0);
    let kaiming = run(InitChoice::Kaiming, 32);
    assert_eq!(kaiming.get("exploded"), 1.0, "max ratio {}", kaiming.get("max_std_ratio"));
    for init in [InitChoice::Idinit, InitChoice::Kaiming, InitChoice::Xavier] {
        let shallow = long_stem_probe(&LongStemConfig {
            init,
            stem_depth: 1,
            epochs: 5,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(shallow.get("exploded"), 0.0, "{init:?}");
    }
}
