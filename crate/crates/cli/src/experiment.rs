use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use idinit::analysis::{
    asymmetry_report, dead_neuron_experiment, isometry_probe, long_stem_probe, mnist_experiment, rank_experiment,
    symmetry_experiment, toy_dynamics, variance_probe, AsymmetryProbe, DeadNeuronConfig, DeadVariant, InitChoice,
    IsometryConfig, LongStemConfig, MnistConfig, MnistNet, NetKind, RankConfig, RankInit, SymmetryConfig,
    SymmetryMode, ToyConfig, VarianceConfig,
};
use idinit::data::data_dir;
use idinit::net::Activation;
use idinit::report::{ExperimentReport, OutputFormat};
use serde::Deserialize;

#[derive(Args)]
pub struct ExperimentArgs {
    #[command(subcommand)]
    which: Which,
    /// JSON file with one object per experiment name, e.g. `{"rank": {"d0": 4}}`.
    /// Flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: ./runs/<experiment>-<seed>-<unix time>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv, json or both.
    #[arg(long, global = true)]
    format: Option<OutputFormat>,
}

#[derive(Subcommand)]
enum Which {
    /// Layer distance and test MSE of a deep linear net trained from I.
    Symmetry(SymmetryFlags),
    /// rank(θ − I) of the middle weight while training D0 → Dh → Dh → DL.
    Rank(RankFlags),
    /// Input-output Jacobian spectrum of a residual MLP at initialization.
    Isometry(IsometryFlags),
    /// Per-layer output mean and std over many random batches.
    Variance(VarianceFlags),
    /// Fraction of stem weights that never move behind a zero gate.
    Deadneuron(DeadFlags),
    /// Gradient descent on the two-scalar toy model.
    Toy(ToyFlags),
    /// Output std of a single residual block with a deep linear stem.
    Longstem(LongStemFlags),
    /// Linear-5 on MNIST; reads IDX files from $IDINIT_DATA_DIR (default ./data).
    Mnist(MnistFlags),
    /// Monte-Carlo estimate of the two-step gradient asymmetry.
    Asymmetry(AsymmetryFlags),
}

#[derive(Args)]
struct SymmetryFlags {
    /// gd, gd-momentum, sgd or sgd-momentum.
    #[arg(long)]
    mode: Option<SymmetryMode>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Args)]
struct RankFlags {
    /// idinit, zero-pad or hadamard.
    #[arg(long)]
    init: Option<RankInit>,
    #[arg(long)]
    d0: Option<usize>,
    #[arg(long)]
    dh: Option<usize>,
    #[arg(long)]
    dl: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct IsometryFlags {
    /// idinit, xavier, kaiming, orthogonal, zero or partial-identity-zero-pad.
    #[arg(long)]
    init: Option<InitChoice>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// identity, tanh or relu.
    #[arg(long)]
    activation: Option<Activation>,
}

#[derive(Args)]
struct VarianceFlags {
    /// fc, resfc, conv or resconv.
    #[arg(long)]
    kind: Option<NetKind>,
    #[arg(long)]
    init: Option<InitChoice>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Args)]
struct DeadFlags {
    /// zero-last or idiz-last.
    #[arg(long)]
    variant: Option<DeadVariant>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct ToyFlags {
    /// 1 for the residual form, 0 for the plain product. Also picks the
    /// default start: (1, 0) for r = 1, (1, 1) for r = 0.
    #[arg(long)]
    r: Option<u8>,
    #[arg(long)]
    depth: Option<u32>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    w1: Option<f64>,
    #[arg(long)]
    w2: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct LongStemFlags {
    #[arg(long)]
    init: Option<InitChoice>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct MnistFlags {
    /// linear5relu or linear5tanh.
    #[arg(long)]
    net: Option<MnistNet>,
    #[arg(long)]
    init: Option<InitChoice>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Number of training images to use; 0 means all 60000.
    #[arg(long)]
    train_limit: Option<usize>,
}

#[derive(Args)]
struct AsymmetryFlags {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<OutputFormat>,
    symmetry: Option<SymmetryConfig>,
    rank: Option<RankConfig>,
    isometry: Option<IsometryConfig>,
    variance: Option<VarianceConfig>,
    deadneuron: Option<DeadNeuronConfig>,
    toy: Option<ToyConfig>,
    longstem: Option<LongStemConfig>,
    mnist: Option<MnistConfig>,
    asymmetry: Option<AsymmetryProbe>,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

pub fn run(args: ExperimentArgs) -> Result<u8> {
    let file = load_config(args.config.as_deref())?;
    let seed = args.seed.or(file.seed);
    let report = match args.which {
        Which::Symmetry(f) => {
            let mut c = file.symmetry.unwrap_or_default();
            set(&mut c.mode, f.mode);
            set(&mut c.epochs, f.epochs);
            set(&mut c.learning_rate, f.lr);
            set(&mut c.momentum, f.momentum);
            set(&mut c.batch_size, f.batch_size);
            set(&mut c.noise_std, f.noise);
            set(&mut c.dim, f.dim);
            set(&mut c.layers, f.layers);
            set(&mut c.seed, seed);
            symmetry_experiment(&c)?
        }
        Which::Rank(f) => {
            let mut c = file.rank.unwrap_or_default();
            set(&mut c.init, f.init);
            set(&mut c.d0, f.d0);
            set(&mut c.dh, f.dh);
            set(&mut c.dl, f.dl);
            set(&mut c.steps, f.steps);
            set(&mut c.learning_rate, f.lr);
            set(&mut c.seed, seed);
            rank_experiment(&c)?
        }
        Which::Isometry(f) => {
            let mut c = file.isometry.unwrap_or_default();
            set(&mut c.init, f.init);
            set(&mut c.blocks, f.blocks);
            set(&mut c.width, f.width);
            set(&mut c.activation, f.activation);
            set(&mut c.seed, seed);
            isometry_probe(&c)?
        }
        Which::Variance(f) => {
            let mut c = file.variance.unwrap_or_default();
            set(&mut c.kind, f.kind);
            set(&mut c.init, f.init);
            set(&mut c.noise_std, f.noise);
            set(&mut c.rounds, f.rounds);
            set(&mut c.batch, f.batch);
            set(&mut c.seed, seed);
            variance_probe(&c)?
        }
        Which::Deadneuron(f) => {
            let mut c = file.deadneuron.unwrap_or_default();
            set(&mut c.variant, f.variant);
            set(&mut c.steps, f.steps);
            set(&mut c.epsilon, f.eps);
            set(&mut c.learning_rate, f.lr);
            set(&mut c.seed, seed);
            dead_neuron_experiment(&c)?
        }
        Which::Toy(f) => {
            let mut c = match (file.toy, f.r) {
                (Some(c), _) => c,
                (None, r) => ToyConfig::for_r(r.unwrap_or(1)),
            };
            set(&mut c.r, f.r);
            set(&mut c.depth, f.depth);
            set(&mut c.lr, f.lr);
            set(&mut c.w1, f.w1);
            set(&mut c.w2, f.w2);
            set(&mut c.steps, f.steps);
            // The toy model draws nothing at random; the seed only names the files.
            let (_, mut report) = toy_dynamics(&c)?;
            report.seed = seed.unwrap_or(0);
            report
        }
        Which::Longstem(f) => {
            let mut c = file.longstem.unwrap_or_default();
            set(&mut c.init, f.init);
            set(&mut c.stem_depth, f.depth);
            set(&mut c.width, f.width);
            set(&mut c.epochs, f.epochs);
            set(&mut c.learning_rate, f.lr);
            set(&mut c.seed, seed);
            long_stem_probe(&c)?
        }
        Which::Mnist(f) => {
            let mut c = file.mnist.unwrap_or_default();
            set(&mut c.net, f.net);
            set(&mut c.init, f.init);
            set(&mut c.epochs, f.epochs);
            set(&mut c.hidden, f.hidden);
            set(&mut c.learning_rate, f.lr);
            set(&mut c.batch_size, f.batch_size);
            set(&mut c.train_limit, f.train_limit.map(|n| (n > 0).then_some(n)));
            set(&mut c.seed, seed);
            mnist_experiment(&c, &data_dir())?
        }
        Which::Asymmetry(f) => {
            let mut c = file.asymmetry.unwrap_or_default();
            set(&mut c.d, f.d);
            set(&mut c.sigma, f.sigma);
            set(&mut c.eta, f.eta);
            set(&mut c.n_samples, f.samples);
            set(&mut c.seed, seed);
            asymmetry_report(&c)?
        }
    };
    let out = args.out.or(file.out).unwrap_or_else(|| default_out(&report));
    let format = args.format.or(file.format).unwrap_or_default();
    let written = report.write(&out, format)?;
    crate::emit(report.summary_line());
    crate::emit(format!("wrote {} file(s) to {}", written.len(), out.display()));
    Ok(0)
}

fn default_out(report: &ExperimentReport) -> PathBuf {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    PathBuf::from("runs").join(format!("{}-{}-{secs}", report.name, report.seed))
}
