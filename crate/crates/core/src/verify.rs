//! Self-check suites run by `idinit verify`. Each check yields one
//! [`Verdict`]; a suite passes when all of its verdicts do.

use serde::Serialize;

use crate::analysis::{
    dead_neuron_experiment, isometry_probe, rank_experiment, DeadNeuronConfig, InitChoice,
    IsometryConfig, RankConfig,
};
use crate::error::{Error, Result};
use crate::init::{channel_maintain, idi, idiz, init_attention, init_network, InitPolicy, Method};
use crate::net::{
    conv2d_forward, gradients, io_jacobian_chain, io_jacobian_fd, predict, Activation, LayerSpec, Loss, NetworkSpec, FeatureMap, FD_STEP,
};
use crate::tensor::{gaussian_matrix, matmul_nt, numerical_rank, Matrix, Rng, DEFAULT_RANK_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Initializers,
    Gradients,
    Isometry,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Initializers, Suite::Gradients, Suite::Isometry];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Initializers => "initializers",
            Suite::Gradients => "gradients",
            Suite::Isometry => "isometry",
        }
    }

    /// Check names in run order.
    pub fn checks(self) -> &'static [&'static str] {
        match self {
            Suite::Initializers => &[
                "idi_identity_transition",
                "idi_full_column_rank",
                "idi_zero_pattern",
                "idi_loose_bound",
                "idiz_row_sums",
                "idiz_variance",
                "channel_maintain_identity",
                "attention_near_identity",
            ],
            Suite::Gradients => &["dense_gradients", "residual_gradients", "tanh_jacobian"],
            Suite::Isometry => &["identity_forward", "idinit_chi", "kaiming_chi", "deterministic_reports"],
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite '{s}'")))
    }
}

/// Deliberate defects for checking that the suites catch them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Writes `1e-3` into the first structural zero of every `idi` matrix.
    IdiZeroEntry,
}

impl std::str::FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "idi-zero-entry" => Ok(Fault::IdiZeroEntry),
            _ => Err(Error::InvalidArgument(format!("unknown fault '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub suite: &'static str,
    pub check: &'static str,
    pub passed: bool,
    pub detail: String,
}

struct Ctx {
    fault: Option<Fault>,
}

impl Ctx {
    fn idi(&self, d_out: usize, d_in: usize, tau: f64, loose: f64, rng: &mut Rng) -> Matrix {
        let mut m = idi(d_out, d_in, tau, loose, rng);
        if self.fault == Some(Fault::IdiZeroEntry) {
            if let Some(i) = m.data().iter().position(|&v| v == 0.0) {
                m.data_mut()[i] = 1e-3;
            }
        }
        m
    }
}

pub fn run_suite(suite: Suite, fault: Option<Fault>) -> Vec<Verdict> {
    let ctx = Ctx { fault };
    suite
        .checks()
        .iter()
        .map(|&check| {
            let (passed, detail) = match run_check(&ctx, check) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            Verdict {
                suite: suite.name(),
                check,
                passed,
                detail,
            }
        })
        .collect()
}

fn run_check(ctx: &Ctx, check: &str) -> Result<(bool, String)> {
    match check {
        "idi_identity_transition" => idi_identity_transition(ctx),
        "idi_full_column_rank" => idi_full_column_rank(ctx),
        "idi_zero_pattern" => idi_zero_pattern(ctx),
        "idi_loose_bound" => idi_loose_bound(ctx),
        "idiz_row_sums" => idiz_row_sums(),
        "idiz_variance" => idiz_variance(),
        "channel_maintain_identity" => channel_maintain_identity(),
        "attention_near_identity" => attention_near_identity(),
        "dense_gradients" => gradient_check(false),
        "residual_gradients" => gradient_check(true),
        "tanh_jacobian" => tanh_jacobian(),
        "identity_forward" => identity_forward(),
        "idinit_chi" => chi(InitChoice::Idinit),
        "kaiming_chi" => chi(InitChoice::Kaiming),
        "deterministic_reports" => deterministic_reports(),
        other => Err(Error::InvalidArgument(format!("unknown check '{other}'"))),
    }
}

const SHAPES: [(usize, usize); 8] = [(1, 1), (4, 4), (8, 4), (12, 4), (9, 3), (64, 16), (5, 1), (32, 32)];

fn idi_identity_transition(ctx: &Ctx) -> Result<(bool, String)> {
    let mut rng = Rng::new(0);
    let mut worst = 0.0f64;
    for (d_out, d_in) in SHAPES {
        let x = gaussian_matrix(&mut rng, 10, d_in, 0.0, 1.0);
        let y = matmul_nt(&x, &ctx.idi(d_out, d_in, 1.0, 0.0, &mut rng))?;
        let stacked = Matrix::from_fn(10, d_out, |r, c| x[(r, c % d_in)]);
        worst = worst.max(y.max_abs_diff(&stacked)?);
    }
    Ok((worst == 0.0, format!("max deviation from stacked copies {worst:e}")))
}

fn idi_full_column_rank(ctx: &Ctx) -> Result<(bool, String)> {
    let mut rng = Rng::new(0);
    let mut bad = Vec::new();
    for (d_out, d_in) in SHAPES.into_iter().chain([(3, 8), (16, 64)]) {
        let r = numerical_rank(&ctx.idi(d_out, d_in, 1.0, 0.0, &mut rng), DEFAULT_RANK_TOL);
        if r != d_out.min(d_in) {
            bad.push(format!("{d_out}x{d_in} rank {r}"));
        }
    }
    Ok((bad.is_empty(), if bad.is_empty() { "all shapes full rank".into() } else { bad.join(", ") }))
}

fn idi_zero_pattern(ctx: &Ctx) -> Result<(bool, String)> {
    let mut rng = Rng::new(0);
    let mut wrong = 0usize;
    for (d_out, d_in) in SHAPES.into_iter().chain([(3, 8)]) {
        for loose in [0.0, 1e-6] {
            let m = ctx.idi(d_out, d_in, 1.0, loose, &mut rng);
            for r in 0..d_out {
                for c in 0..d_in {
                    let structural = r % d_in != c;
                    if structural != (m[(r, c)] == 0.0) {
                        wrong += 1;
                    }
                }
            }
        }
    }
    Ok((wrong == 0, format!("{wrong} entries break the m = j (mod d_in) pattern")))
}

fn idi_loose_bound(ctx: &Ctx) -> Result<(bool, String)> {
    let mut rng = Rng::new(1);
    let exact = ctx.idi(256, 64, 1.0, 0.0, &mut rng);
    let loose = ctx.idi(256, 64, 1.0, 1e-6, &mut rng);
    let d = loose.max_abs_diff(&exact)?;
    Ok((d < 1e-5 && d > 0.0, format!("‖loose − exact‖∞ = {d:.3e}")))
}

fn idiz_row_sums() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (d_out, d_in) in SHAPES.into_iter().chain([(3, 8), (2, 7)]) {
        if d_in == 1 {
            continue;
        }
        let m = idiz(d_out, d_in, 1e-3);
        worst = worst.max(m.row_sums().iter().fold(0.0f64, |a, s| a.max(s.abs())));
    }
    Ok((worst == 0.0, format!("max |row sum| {worst:e}")))
}

fn idiz_variance() -> Result<(bool, String)> {
    let eps = 1e-3;
    let w = idiz(16, 16, eps);
    let x = gaussian_matrix(&mut Rng::new(2), 100_000 / 16, 16, 0.0, 1.0);
    let y = matmul_nt(&x, &w)?;
    let mean = y.mean();
    let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
    let rel = (var / (2.0 * eps * eps) - 1.0).abs();
    Ok((rel < 0.05, format!("variance / 2ε² − 1 = {rel:.4}")))
}

fn channel_maintain_identity() -> Result<(bool, String)> {
    let mut rng = Rng::new(3);
    let mut worst = 0.0f64;
    for (k, c) in [(1, 3), (3, 4), (5, 2)] {
        let kernel = channel_maintain(k, c, c, 1.0)?;
        let data: Vec<f64> = (0..c * 7 * 6).map(|_| rng.standard_normal()).collect();
        let input = FeatureMap::new(c, 7, 6, data)?;
        let out = conv2d_forward(&kernel, &input)?;
        for (a, b) in out.data.iter().zip(&input.data) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((worst == 0.0, format!("max |conv(x) − x| {worst:e}")))
}

fn attention_near_identity() -> Result<(bool, String)> {
    let mut rng = Rng::new(4);
    let (d, n, eps) = (8, 6, 1e-6);
    let w = init_attention(d, 1.0, eps, 1e-6, &mut rng);
    let x = gaussian_matrix(&mut rng, n, d, 0.0, 1.0);
    let q = matmul_nt(&x, &w.query)?;
    let k = matmul_nt(&x, &w.key)?;
    let v = matmul_nt(&x, &w.value)?;
    let mut scores = matmul_nt(&q, &k)?.scale(1.0 / (d as f64).sqrt());
    for r in 0..n {
        let row = scores.row_mut(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|s| (s - m).exp()).sum();
        row.iter_mut().for_each(|s| *s = (*s - m).exp() / z);
    }
    let att = matmul_nt(&crate::tensor::matmul(&scores, &v)?, &w.output)?;
    let dev = att.max_abs();
    let bound = d as f64 * eps * x.max_abs();
    Ok((dev <= bound, format!("‖out − x‖∞ {dev:.3e} <= {bound:.3e}")))
}

fn random_net(rng: &mut Rng, residual: bool) -> Result<NetworkSpec> {
    let acts = [Activation::Tanh, Activation::Identity];
    let d = 2 + rng.below(5) as usize;
    let mut layers = Vec::new();
    if residual {
        for _ in 0..1 + rng.below(3) {
            layers.push(LayerSpec::Residual {
                width: d,
                stem_depth: 1 + rng.below(3) as usize,
                activation: acts[rng.below(2) as usize],
                gate: (rng.below(2) == 0).then_some(0.5),
            });
        }
        layers.push(LayerSpec::Dense {
            d_in: d,
            d_out: 1 + rng.below(3) as usize,
            activation: Activation::Identity,
        });
    } else {
        let mut width = d;
        for _ in 0..1 + rng.below(3) {
            let next = 1 + rng.below(6) as usize;
            layers.push(LayerSpec::Dense {
                d_in: width,
                d_out: next,
                activation: acts[rng.below(2) as usize],
            });
            width = next;
        }
    }
    NetworkSpec::new(layers)
}

/// Analytic gradients against central differences on 20 random nets.
fn gradient_check(residual: bool) -> Result<(bool, String)> {
    let mut rng = Rng::new(if residual { 6 } else { 5 });
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let net = random_net(&mut rng, residual)?;
        let mut params = init_network(&net, InitPolicy::baseline(Method::Xavier), &mut rng)?;
        let x = gaussian_matrix(&mut rng, 4, net.input_dim(), 0.0, 1.0);
        let y = gaussian_matrix(&mut rng, 4, net.output_dim(), 0.0, 1.0);
        let (_, grads) = gradients(&net, &params, &x, &y, Loss::Mse)?;
        for (t, g) in grads.iter().enumerate() {
            for e in 0..g.len() {
                let orig = params.tensors()[t].data()[e];
                let mut loss_at = |v: f64| -> Result<f64> {
                    params.tensors_mut()[t].data_mut()[e] = v;
                    Loss::Mse.value(&predict(&net, &params, &x)?, &y)
                };
                let fd = (loss_at(orig + FD_STEP)? - loss_at(orig - FD_STEP)?) / (2.0 * FD_STEP);
                loss_at(orig)?;
                let a = g.data()[e];
                worst = worst.max((a - fd).abs() / (1e-6 * a.abs().max(fd.abs()) + 1e-8));
            }
        }
    }
    Ok((worst <= 1.0, format!("max error / tolerance {worst:.3}")))
}

fn tanh_jacobian() -> Result<(bool, String)> {
    let mut rng = Rng::new(7);
    let net = NetworkSpec::mlp(&[4, 6, 5, 3], Activation::Tanh, Activation::Tanh)?;
    let params = init_network(&net, InitPolicy::baseline(Method::Xavier), &mut rng)?;
    let x: Vec<f64> = (0..4).map(|_| rng.standard_normal()).collect();
    let fd = io_jacobian_fd(&net, &params, &x, FD_STEP)?;
    let exact = io_jacobian_chain(&net, &params, &x)?;
    let d = fd.max_abs_diff(&exact)?;
    Ok((d < 1e-5, format!("max |J_fd − J| {d:.3e}")))
}

fn identity_forward() -> Result<(bool, String)> {
    let net = NetworkSpec::residual_mlp(16, 8, 2, Activation::Relu, None)?;
    let policy = InitPolicy::IdInit {
        epsilon: 0.0,
        loose_eps: 0.0,
    };
    let params = init_network(&net, policy, &mut Rng::new(8))?;
    let x = gaussian_matrix(&mut Rng::new(9), 5, 16, 0.0, 1.0);
    let d = predict(&net, &params, &x)?.max_abs_diff(&x)?;
    Ok((d == 0.0, format!("‖f(x) − x‖∞ {d:e} with ε = 0")))
}

fn chi(init: InitChoice) -> Result<(bool, String)> {
    let r = isometry_probe(&IsometryConfig {
        init,
        ..Default::default()
    })?;
    let chi = r.get("chi");
    let ok = match init {
        InitChoice::Idinit => (chi - 1.0).abs() < 1e-3,
        _ => chi > 10.0,
    };
    Ok((ok, format!("χ = {chi:.6e}")))
}

fn deterministic_reports() -> Result<(bool, String)> {
    let rank = || rank_experiment(&RankConfig::default())?.to_json();
    let dead = || {
        dead_neuron_experiment(&DeadNeuronConfig {
            steps: 10,
            ..Default::default()
        })?
        .to_json()
    };
    let iso = || isometry_probe(&IsometryConfig::default())?.to_json();
    let same = rank()? == rank()? && dead()? == dead()? && iso()? == iso()?;
    Ok((same, format!("re-run reports bitwise identical: {same}")))
}
