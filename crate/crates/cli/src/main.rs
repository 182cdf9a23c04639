use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use gra_core::arch_metrics::{build_resnet50, report, Variant, DEFAULT_INPUT_HW};
use gra_core::bench::{run_bench, BenchConfig};
use gra_core::demo::{run_demo, DemoConfig};
use gra_core::params_io::{
    arc_params_from_container, gra_params_from_container, INPUT, LAMBDAS, OUTPUT, THETAS,
};
use gra_core::pipeline::{arc_forward_traced, gra_forward_traced, ForwardOutput};
use gra_core::tensor::{DType, Element, Tensor};
use gra_core::{
    read_container, rotation_matrix, rotation_matrix_dtheta, write_container, TensorContainer,
};

#[derive(Parser)]
#[command(
    name = "gra",
    version,
    about = "Group-wise rotating and attention convolution tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the k²×k² rotation operator (or its θ-derivative).
    Rotmat {
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        deriv: bool,
    },
    /// Run a GRA or ARC forward pass on container files.
    Forward {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Rotation groups for GRA, branch count for ARC.
        #[arg(long)]
        groups: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time naive vs batched rotation against the convolution they feed.
    Bench {
        #[arg(long, default_value_t = 4)]
        batch: usize,
        #[arg(long, default_value_t = 256)]
        cin: usize,
        #[arg(long, default_value_t = 256)]
        cout: usize,
        #[arg(long, default_value_t = 64)]
        hw: usize,
        #[arg(long, default_value_t = 32)]
        groups: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parameter and FLOP report for a ResNet-50 backbone.
    Params {
        #[arg(long, value_enum)]
        variant: VariantKind,
        /// Kernel copies for `arc`.
        #[arg(long)]
        m: Option<usize>,
        /// Rotation groups for `gra`.
        #[arg(long)]
        groups: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_INPUT_HW)]
        hw: usize,
    },
    /// Oriented-edge kernel against stripe images at each listed angle.
    Demo {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        thetas: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        hw: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Gra,
    Arc,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantKind {
    Plain,
    Arc,
    Gra,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cmd {
        Command::Rotmat { theta, k, deriv } => {
            let m = if deriv {
                rotation_matrix_dtheta::<f64>(theta, k)?
            } else {
                rotation_matrix::<f64>(theta, k)?.into_matrix()
            };
            let kk = k * k;
            for row in m.data().chunks_exact(kk) {
                let cells: Vec<String> = row.iter().map(|&v| significant(v, 9)).collect();
                writeln!(out, "{}", cells.join(" "))?;
            }
        }
        Command::Forward {
            mode,
            params,
            input,
            groups,
            out: dest,
        } => {
            let params = load(&params)?;
            let input = load(&input)?;
            let x = input
                .get(INPUT)
                .with_context(|| format!("input container has no `{INPUT}` tensor"))?;
            let result = match x.dtype() {
                DType::F32 => forward::<f32>(mode, &params, &x.to_tensor(), groups)?,
                DType::F64 => forward::<f64>(mode, &params, &x.to_tensor(), groups)?,
            };
            let file =
                File::create(&dest).with_context(|| format!("creating {}", dest.display()))?;
            let mut sink = BufWriter::new(file);
            let bytes = write_container(&result, &mut sink)?;
            sink.flush()?;
            writeln!(out, "wrote={} bytes={bytes}", dest.display())?;
        }
        Command::Bench {
            batch,
            cin,
            cout,
            hw,
            groups,
            k,
            iters,
            seed,
        } => {
            let r = run_bench(&BenchConfig {
                batch,
                cin,
                cout,
                hw,
                groups,
                k,
                iters,
                seed,
            })?;
            writeln!(out, "{}", r.summary_line())?;
            writeln!(out, "speedup={:.2}", r.speedup())?;
            writeln!(out, "checksum={:.6e}", r.checksum)?;
        }
        Command::Params {
            variant,
            m,
            groups,
            hw,
        } => {
            let variant = match (variant, m, groups) {
                (VariantKind::Plain, None, None) => Variant::Plain,
                (VariantKind::Arc, Some(m), None) => Variant::Arc { m },
                (VariantKind::Gra, None, Some(n)) => Variant::Gra { n },
                (VariantKind::Plain, ..) => bail!("`plain` takes neither --m nor --groups"),
                (VariantKind::Arc, ..) => bail!("`arc` needs --m and no --groups"),
                (VariantKind::Gra, ..) => bail!("`gra` needs --groups and no --m"),
            };
            let spec = build_resnet50(variant, hw)?;
            write!(out, "{}", report(&spec, hw))?;
        }
        Command::Demo {
            k,
            thetas,
            seed,
            hw,
        } => {
            let r = run_demo(&DemoConfig {
                k,
                thetas,
                seed,
                hw,
            })?;
            write!(out, "{}", r.render())?;
            writeln!(out, "diagonal_is_row_max={}", r.diagonal_is_row_max())?;
        }
    }
    Ok(())
}

fn load(path: &Path) -> Result<TensorContainer> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_container(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn forward<T: Element>(
    mode: Mode,
    params: &TensorContainer,
    x: &Tensor<T>,
    groups: usize,
) -> Result<TensorContainer> {
    let ForwardOutput { output, angles } = match mode {
        Mode::Gra => gra_forward_traced(x, &gra_params_from_container(params, groups)?)?,
        Mode::Arc => arc_forward_traced(x, &arc_params_from_container(params, groups)?)?,
    };
    let mut c = TensorContainer::new();
    c.insert(OUTPUT, output)?;
    c.insert(THETAS, angles.thetas)?;
    c.insert(LAMBDAS, angles.lambdas)?;
    Ok(c)
}

/// Fixed-point rendering with `digits` significant digits.
fn significant(v: f64, digits: usize) -> String {
    let magnitude = if v == 0.0 {
        0
    } else {
        v.abs().log10().floor() as i64
    };
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{v:>width$.decimals$}", width = digits + 5)
}
