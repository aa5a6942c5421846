use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use idinit::init::{InitSpec, Method, DEFAULT_EPSILON, DEFAULT_LOOSE_EPS, DEFAULT_TAU};
use idinit::tensor::io::{write_binary, write_csv};
use idinit::tensor::Matrix;
use serde::Serialize;

#[derive(Args)]
pub struct DumpArgs {
    /// idi, idiz, idic, idizc, channel-maintain, hadamard, xavier, kaiming,
    /// orthogonal, zero or partial-identity-zero-pad.
    #[arg(long)]
    method: Method,
    #[arg(long)]
    dout: Option<usize>,
    #[arg(long)]
    din: Option<usize>,
    /// Square size, shorthand for `--dout N --din N`.
    #[arg(long)]
    n: Option<usize>,
    /// Kernel size; with --cin and --cout builds a convolution kernel.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    cin: Option<usize>,
    #[arg(long)]
    cout: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    eps: f64,
    /// Loose-condition noise std; 0 disables it.
    #[arg(long, default_value_t = DEFAULT_LOOSE_EPS)]
    loose: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: current directory).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    spec: InitSpec,
    rows: usize,
    cols: usize,
    /// `[k_h, k_w, c_in, c_out]` when the output is a kernel; the matrix is
    /// then its `c_out x (k_h·k_w·c_in)` view.
    kernel: Option<[usize; 4]>,
    csv: &'a str,
    binary: &'a str,
}

pub fn run(args: DumpArgs) -> Result<u8> {
    let spec = InitSpec {
        method: args.method,
        tau: args.tau,
        epsilon: args.eps,
        loose_eps: args.loose,
        seed: args.seed,
    };
    let (matrix, kernel) = match (args.k, args.cin, args.cout) {
        (Some(k), Some(cin), Some(cout)) => {
            let kernel = spec.build_kernel(k, cin, cout)?;
            (kernel.to_matrix(), Some([k, k, cin, cout]))
        }
        (None, None, None) => {
            let (dout, din) = match (args.n, args.dout, args.din) {
                (Some(n), None, None) => (n, n),
                (None, Some(o), Some(i)) => (o, i),
                _ => bail!("give either --n or both --dout and --din (or --k, --cin and --cout)"),
            };
            (spec.build_matrix(dout, din)?, None)
        }
        _ => bail!("kernels need all of --k, --cin and --cout"),
    };
    write_all(&args.out, &spec, &matrix, kernel)?;
    Ok(0)
}

fn write_all(dir: &PathBuf, spec: &InitSpec, m: &Matrix, kernel: Option<[usize; 4]>) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let stem = match kernel {
        Some([k, _, cin, cout]) => format!("{}-k{k}-{cin}to{cout}-seed{}", spec.method, spec.seed),
        None => format!("{}-{}x{}-seed{}", spec.method, m.rows(), m.cols(), spec.seed),
    };
    let csv = format!("{stem}.csv");
    let bin = format!("{stem}.bin");
    let mut f = BufWriter::new(File::create(dir.join(&csv))?);
    write_csv(m, &mut f)?;
    f.flush()?;
    let mut f = BufWriter::new(File::create(dir.join(&bin))?);
    write_binary(m, &mut f)?;
    f.flush()?;
    let sidecar = Sidecar {
        spec: *spec,
        rows: m.rows(),
        cols: m.cols(),
        kernel,
        csv: &csv,
        binary: &bin,
    };
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    crate::emit(format!("{} {}x{} -> {}", spec.method, m.rows(), m.cols(), dir.join(&csv).display()));
    Ok(())
}
